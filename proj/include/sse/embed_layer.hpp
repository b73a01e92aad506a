#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sse/codebook.hpp"
#include "sse/types.hpp"

namespace sse {

struct TrainConfig {
  double learning_rate = 0.05;
  /// Tokens per step. A batch size >= D means full batch: every token once
  /// per step, no sampling.
  Index batch_size = 0;
  int steps = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Row i is reconstruct_one(codebook, tokens[i]).
template <typename Scalar>
Matrix<Scalar> forward(const Codebook<Scalar>& codebook, std::span<const Index> tokens);

/// Gradient of a loss w.r.t. the subspace tables given dLoss/dforward.
/// Each row slice of upstream for subspace k is added into table k at row
/// codes(tokens[i], k); rows not referenced stay zero.
template <typename Scalar>
SubspaceTables<Scalar> backward(const Codebook<Scalar>& codebook, std::span<const Index> tokens,
                                const Matrix<Scalar>& upstream);

/// Mean squared error over all D x d entries of reconstruct_all vs target.
template <typename Scalar>
double reconstruction_mse(const Codebook<Scalar>& codebook, const EmbeddingMatrix<Scalar>& target);

template <typename Scalar>
struct DistillResult {
  Codebook<Scalar> codebook;
  /// mse_history[0] is the initial error, then one entry per step.
  std::vector<double> mse_history;
};

/// Fits subspace tables to target by plain SGD starting from `initial`.
///
/// Each step minimizes (D/B) * 1/2 * sum over the batch of
/// ||forward(token) - target(token)||^2, an unbiased estimate of the
/// full-vocabulary sum. Mini-batches draw tokens uniformly with replacement.
template <typename Scalar>
DistillResult<Scalar> distill(const EmbeddingMatrix<Scalar>& target, Codebook<Scalar> initial,
                              const TrainConfig& train);

/// Same, starting from freshly initialized tables (seeded by train.seed).
template <typename Scalar>
DistillResult<Scalar> distill(const EmbeddingMatrix<Scalar>& target,
                              const CodeAssignment& assignment, const SubspaceConfig& config,
                              const TrainConfig& train);

/// Exact least-squares tables: row q of table k is the mean of the target
/// slices of all tokens with code q in subspace k. The objective separates
/// over subspaces because their slices are disjoint. Rows no token uses
/// keep their initialization.
template <typename Scalar>
Codebook<Scalar> closed_form_distill(const EmbeddingMatrix<Scalar>& target,
                                     const CodeAssignment& assignment,
                                     const SubspaceConfig& config, std::uint64_t seed = 0);

/// Shape of one finite-difference check: D, d, f, Q.
struct GradCheckDims {
  Index vocab_size = 20;
  Index embed_dim = 8;
  Index num_subspaces = 2;
  Index table_size = 5;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  Index entries_checked = 0;
};

/// Compares backward against central finite differences of
/// L = 1/2 ||forward(batch)||^2 for every table entry, in 64-bit.
/// The codebook has radix codes and N(0, 1) tables; the batch holds
/// batch_size tokens drawn with replacement. All draws come from seed.
GradCheckResult gradient_check(const GradCheckDims& dims, std::uint64_t seed,
                               Index batch_size = 16, double step = 1e-4);

}  // namespace sse
