#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sse {

using Index = Eigen::Index;
using Code = std::uint32_t;

// Row-major so that one token's vector is contiguous, matching the on-disk layout.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// D x dim dense matrix of token vectors (pretrained input or reconstruction output).
template <typename Scalar>
using EmbeddingMatrix = Matrix<Scalar>;

/// D x f matrix; row n holds the code tuple (c_1(n), ..., c_f(n)), 0-based.
using CodeAssignment = Eigen::Matrix<Code, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One Q x subspace_dims[k] table per subspace.
template <typename Scalar>
using SubspaceTables = std::vector<Matrix<Scalar>>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

/// Not enough distinct code tuples for the tokens that need them.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Shape mismatches, non-finite values, malformed inputs.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// File format errors. Each malformed-file case has its own type.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};
class BadMagic : public FormatError {
 public:
  using FormatError::FormatError;
};
class UnsupportedVersion : public FormatError {
 public:
  using FormatError::FormatError;
};
class UnknownDtype : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncatedPayload : public FormatError {
 public:
  using FormatError::FormatError;
};
/// Header and payload disagree (shape lies, trailing bytes, codes out of range).
class ValidationError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Throws DataError if any entry is NaN or infinite.
template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const std::string& what) {
  if (!m.derived().allFinite()) {
    throw DataError(what + ": contains non-finite values");
  }
}

}  // namespace sse
