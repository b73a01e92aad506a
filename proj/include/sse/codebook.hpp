#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sse/types.hpp"

namespace sse {

/// Shape of a compressed embedding: D tokens of dimension d, rebuilt from
/// f tables of Q vectors each.
struct SubspaceConfig {
  std::int64_t vocab_size = 0;      // D
  std::int64_t embed_dim = 0;       // d
  std::int64_t num_subspaces = 0;   // f
  std::int64_t table_size = 0;      // Q
  std::vector<std::int64_t> subspace_dims;

  /// Builds a config with the balanced split of d and validates it.
  static SubspaceConfig make(std::int64_t vocab_size, std::int64_t embed_dim,
                             std::int64_t num_subspaces, std::int64_t table_size);

  /// The uncompressed baseline: one table of D rows (f = 1, Q = D).
  static SubspaceConfig flat(std::int64_t vocab_size, std::int64_t embed_dim);

  /// Throws InvalidConfig when a field or invariant is violated, and
  /// CapacityError when Q^f < D.
  void validate() const;
  /// Field and split checks only. Under-capacity configs pass; they are
  /// needed to study forced code collisions.
  void validate_shape() const;

  /// Offset of subspace k inside a reconstructed vector.
  std::int64_t offset(std::int64_t k) const;

  friend bool operator==(const SubspaceConfig&, const SubspaceConfig&) = default;
};

/// Balanced split of embed_dim into num_subspaces parts; the first
/// embed_dim % num_subspaces parts get the extra dimension.
std::vector<std::int64_t> split_dims(std::int64_t embed_dim, std::int64_t num_subspaces);

/// True iff base^exponent >= target, without overflow.
bool power_at_least(std::int64_t base, std::int64_t exponent, std::int64_t target);

/// Number of embedding parameters, sum_k Q * subspace_dims[k] (= Q * d).
std::int64_t param_count(const SubspaceConfig& config);

/// Percentage reduction of param_count relative to baseline_params.
double compression_ratio(const SubspaceConfig& config, std::int64_t baseline_params);
double compression_ratio(std::int64_t params, std::int64_t baseline_params);

/// Formats a percentage with two decimals, e.g. "99.93".
std::string format_percent(double pct);

struct UniquenessReport {
  bool unique = true;
  /// Lexicographically smallest (i, j), i < j, with identical code rows.
  std::optional<std::pair<Index, Index>> first_collision;
};

UniquenessReport verify_uniqueness(const CodeAssignment& codes);

/// How a codebook's assignment was produced; stored in the file header.
enum class AssignAlgorithm { Radix, ClusterNaive, ClusterBalanced };

std::string to_string(AssignAlgorithm a);
AssignAlgorithm parse_algorithm(const std::string& tag);

struct Provenance {
  AssignAlgorithm algorithm = AssignAlgorithm::Radix;
  std::uint64_t seed = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Initial table standard deviation.
inline constexpr double kDefaultInitStddev = 0.02;

/// Tables of shape Q x subspace_dims[k] drawn from N(0, stddev^2).
template <typename Scalar>
SubspaceTables<Scalar> init_tables(const SubspaceConfig& config, std::uint64_t seed,
                                   double stddev = kDefaultInitStddev);

/// Config + code assignment + subspace tables: the artifact that replaces a
/// D x d embedding table. Shapes are validated on construction (capacity is
/// not; see verify_uniqueness). The tables can only change through
/// apply_update, which preserves their shapes.
template <typename Scalar>
class Codebook {
 public:
  Codebook(SubspaceConfig config, CodeAssignment assignment, SubspaceTables<Scalar> tables,
           std::vector<Index> reserved_tokens = {}, Provenance provenance = {});

  const SubspaceConfig& config() const { return config_; }
  const CodeAssignment& assignment() const { return assignment_; }
  const SubspaceTables<Scalar>& tables() const { return tables_; }
  const std::vector<Index>& reserved_tokens() const { return reserved_; }
  const Provenance& provenance() const { return provenance_; }

  /// tables -= step * delta. delta must have the tables' shapes.
  void apply_update(const SubspaceTables<Scalar>& delta, Scalar step);

  template <typename NewScalar>
  Codebook<NewScalar> cast() const {
    SubspaceTables<NewScalar> t;
    t.reserve(tables_.size());
    for (const auto& m : tables_) t.push_back(m.template cast<NewScalar>());
    return Codebook<NewScalar>(config_, assignment_, std::move(t), reserved_, provenance_);
  }

 private:
  SubspaceConfig config_;
  CodeAssignment assignment_;
  SubspaceTables<Scalar> tables_;
  std::vector<Index> reserved_;
  Provenance provenance_;
};

/// Codebook with freshly initialized tables.
template <typename Scalar>
Codebook<Scalar> make_codebook(const SubspaceConfig& config, CodeAssignment assignment,
                               Provenance provenance, std::vector<Index> reserved_tokens = {},
                               double init_stddev = kDefaultInitStddev);

/// Concatenation of tables[k].row(codes(token, k)) over k = 0..f-1.
template <typename Scalar>
RowVector<Scalar> reconstruct_one(const Codebook<Scalar>& codebook, Index token);

/// D x d matrix whose row n is reconstruct_one(codebook, n).
template <typename Scalar>
EmbeddingMatrix<Scalar> reconstruct_all(const Codebook<Scalar>& codebook);

extern template class Codebook<float>;
extern template class Codebook<double>;

}  // namespace sse
