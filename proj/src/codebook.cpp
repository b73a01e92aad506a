#include "sse/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

#include "sse/parallel.hpp"

namespace sse {

std::vector<std::int64_t> split_dims(std::int64_t embed_dim, std::int64_t num_subspaces) {
  if (embed_dim < 1 || num_subspaces < 1) {
    throw InvalidConfig("split_dims: embed_dim and num_subspaces must be positive");
  }
  if (num_subspaces > embed_dim) {
    throw InvalidConfig("split_dims: num_subspaces (" + std::to_string(num_subspaces) +
                        ") exceeds embed_dim (" + std::to_string(embed_dim) + ")");
  }
  const std::int64_t base = embed_dim / num_subspaces;
  const std::int64_t extra = embed_dim % num_subspaces;
  std::vector<std::int64_t> dims(static_cast<std::size_t>(num_subspaces), base);
  for (std::int64_t k = 0; k < extra; ++k) ++dims[static_cast<std::size_t>(k)];
  return dims;
}

bool power_at_least(std::int64_t base, std::int64_t exponent, std::int64_t target) {
  if (target <= 1) return true;
  if (base <= 1) return false;
  std::int64_t acc = 1;
  for (std::int64_t i = 0; i < exponent; ++i) {
    if (acc >= (target + base - 1) / base) return true;  // acc * base >= target
    acc *= base;
  }
  return acc >= target;
}

SubspaceConfig SubspaceConfig::make(std::int64_t vocab_size, std::int64_t embed_dim,
                                    std::int64_t num_subspaces, std::int64_t table_size) {
  SubspaceConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = embed_dim;
  c.num_subspaces = num_subspaces;
  c.table_size = table_size;
  c.subspace_dims = split_dims(embed_dim, num_subspaces);
  c.validate();
  return c;
}

SubspaceConfig SubspaceConfig::flat(std::int64_t vocab_size, std::int64_t embed_dim) {
  return make(vocab_size, embed_dim, 1, vocab_size);
}

void SubspaceConfig::validate() const {
  validate_shape();
  if (!power_at_least(table_size, num_subspaces, vocab_size)) {
    throw CapacityError("invalid config: table_size^num_subspaces = " +
                        std::to_string(table_size) + "^" + std::to_string(num_subspaces) +
                        " < vocab_size " + std::to_string(vocab_size));
  }
}

void SubspaceConfig::validate_shape() const {
  auto fail = [](const std::string& msg) { throw InvalidConfig("invalid config: " + msg); };
  if (vocab_size < 1) fail("vocab_size must be >= 1");
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (num_subspaces < 1) fail("num_subspaces must be >= 1");
  if (table_size < 1) fail("table_size must be >= 1");
  if (table_size > std::int64_t{UINT32_MAX}) fail("table_size exceeds 32-bit code range");
  if (static_cast<std::int64_t>(subspace_dims.size()) != num_subspaces) {
    fail("subspace_dims has " + std::to_string(subspace_dims.size()) + " entries, expected " +
         std::to_string(num_subspaces));
  }
  if (std::any_of(subspace_dims.begin(), subspace_dims.end(), [](auto v) { return v < 1; })) {
    fail("subspace_dims entries must be positive");
  }
  if (std::accumulate(subspace_dims.begin(), subspace_dims.end(), std::int64_t{0}) != embed_dim) {
    fail("subspace_dims do not sum to embed_dim");
  }
  const auto [lo, hi] = std::minmax_element(subspace_dims.begin(), subspace_dims.end());
  if (*hi - *lo > 1) fail("subspace_dims are not balanced");
}

std::int64_t SubspaceConfig::offset(std::int64_t k) const {
  return std::accumulate(subspace_dims.begin(), subspace_dims.begin() + k, std::int64_t{0});
}

std::int64_t param_count(const SubspaceConfig& config) {
  std::int64_t total = 0;
  for (auto dim : config.subspace_dims) total += config.table_size * dim;
  return total;
}

double compression_ratio(std::int64_t params, std::int64_t baseline_params) {
  if (baseline_params <= 0) throw InvalidConfig("compression_ratio: baseline must be positive");
  return 100.0 * (1.0 - static_cast<double>(params) / static_cast<double>(baseline_params));
}

double compression_ratio(const SubspaceConfig& config, std::int64_t baseline_params) {
  return compression_ratio(param_count(config), baseline_params);
}

std::string format_percent(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", pct);
  return buf;
}

UniquenessReport verify_uniqueness(const CodeAssignment& codes) {
  const Index rows = codes.rows();
  std::vector<Index> order(static_cast<std::size_t>(rows));
  std::iota(order.begin(), order.end(), Index{0});
  auto row_less = [&](Index a, Index b) {
    for (Index k = 0; k < codes.cols(); ++k) {
      if (codes(a, k) != codes(b, k)) return codes(a, k) < codes(b, k);
    }
    return a < b;
  };
  std::sort(order.begin(), order.end(), row_less);

  UniquenessReport report;
  for (std::size_t i = 0; i + 1 < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && codes.row(order[i]) == codes.row(order[j])) ++j;
    if (j - i > 1) {
      // Within an equal run the indices are ascending, so the first two form
      // the smallest pair of that run.
      std::pair<Index, Index> pair{order[i], order[i + 1]};
      if (!report.first_collision || pair < *report.first_collision) report.first_collision = pair;
      report.unique = false;
    }
    i = j;
  }
  return report;
}

std::string to_string(AssignAlgorithm a) {
  switch (a) {
    case AssignAlgorithm::Radix:
      return "radix";
    case AssignAlgorithm::ClusterNaive:
      return "cluster-naive";
    case AssignAlgorithm::ClusterBalanced:
      return "cluster-balanced";
  }
  return "unknown";
}

AssignAlgorithm parse_algorithm(const std::string& tag) {
  if (tag == "radix") return AssignAlgorithm::Radix;
  if (tag == "cluster-naive") return AssignAlgorithm::ClusterNaive;
  if (tag == "cluster-balanced") return AssignAlgorithm::ClusterBalanced;
  throw ValidationError("unknown assignment algorithm tag '" + tag + "'");
}

template <typename Scalar>
SubspaceTables<Scalar> init_tables(const SubspaceConfig& config, std::uint64_t seed,
                                   double stddev) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  SubspaceTables<Scalar> tables;
  tables.reserve(config.subspace_dims.size());
  for (auto dim : config.subspace_dims) {
    Matrix<Scalar> t(config.table_size, dim);
    for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(normal(engine));
    tables.push_back(std::move(t));
  }
  return tables;
}

template <typename Scalar>
Codebook<Scalar>::Codebook(SubspaceConfig config, CodeAssignment assignment,
                           SubspaceTables<Scalar> tables, std::vector<Index> reserved_tokens,
                           Provenance provenance)
    : config_(std::move(config)),
      assignment_(std::move(assignment)),
      tables_(std::move(tables)),
      reserved_(std::move(reserved_tokens)),
      provenance_(provenance) {
  config_.validate_shape();
  if (assignment_.rows() != config_.vocab_size || assignment_.cols() != config_.num_subspaces) {
    throw DataError("codebook: assignment is " + std::to_string(assignment_.rows()) + "x" +
                    std::to_string(assignment_.cols()) + ", expected " +
                    std::to_string(config_.vocab_size) + "x" +
                    std::to_string(config_.num_subspaces));
  }
  if (assignment_.size() > 0 && assignment_.maxCoeff() >= static_cast<Code>(config_.table_size)) {
    throw DataError("codebook: code out of range [0, " + std::to_string(config_.table_size) + ")");
  }
  if (static_cast<std::int64_t>(tables_.size()) != config_.num_subspaces) {
    throw DataError("codebook: expected " + std::to_string(config_.num_subspaces) + " tables");
  }
  for (std::size_t k = 0; k < tables_.size(); ++k) {
    if (tables_[k].rows() != config_.table_size || tables_[k].cols() != config_.subspace_dims[k]) {
      throw DataError("codebook: table " + std::to_string(k) + " has shape " +
                      std::to_string(tables_[k].rows()) + "x" + std::to_string(tables_[k].cols()));
    }
    require_finite(tables_[k], "codebook table " + std::to_string(k));
  }
  std::set<Index> seen;
  for (Index r : reserved_) {
    if (r < 0 || r >= config_.vocab_size) {
      throw IndexOutOfRange("codebook: reserved token " + std::to_string(r) + " out of range");
    }
    if (!seen.insert(r).second) {
      throw DataError("codebook: reserved token " + std::to_string(r) + " listed twice");
    }
  }
}

template <typename Scalar>
void Codebook<Scalar>::apply_update(const SubspaceTables<Scalar>& delta, Scalar step) {
  if (delta.size() != tables_.size()) throw DataError("apply_update: table count mismatch");
  for (std::size_t k = 0; k < tables_.size(); ++k) {
    if (delta[k].rows() != tables_[k].rows() || delta[k].cols() != tables_[k].cols()) {
      throw DataError("apply_update: shape mismatch in table " + std::to_string(k));
    }
  }
  for (std::size_t k = 0; k < tables_.size(); ++k) tables_[k] -= step * delta[k];
}

template <typename Scalar>
Codebook<Scalar> make_codebook(const SubspaceConfig& config, CodeAssignment assignment,
                               Provenance provenance, std::vector<Index> reserved_tokens,
                               double init_stddev) {
  auto tables = init_tables<Scalar>(config, provenance.seed, init_stddev);
  return Codebook<Scalar>(config, std::move(assignment), std::move(tables),
                          std::move(reserved_tokens), provenance);
}

template <typename Scalar>
RowVector<Scalar> reconstruct_one(const Codebook<Scalar>& codebook, Index token) {
  const auto& cfg = codebook.config();
  if (token < 0 || token >= cfg.vocab_size) {
    throw IndexOutOfRange("token " + std::to_string(token) + " out of range [0, " +
                          std::to_string(cfg.vocab_size) + ")");
  }
  RowVector<Scalar> out(cfg.embed_dim);
  Index offset = 0;
  for (std::size_t k = 0; k < codebook.tables().size(); ++k) {
    const auto& table = codebook.tables()[k];
    out.segment(offset, table.cols()) = table.row(codebook.assignment()(token, Index(k)));
    offset += table.cols();
  }
  return out;
}

template <typename Scalar>
EmbeddingMatrix<Scalar> reconstruct_all(const Codebook<Scalar>& codebook) {
  const auto& cfg = codebook.config();
  EmbeddingMatrix<Scalar> out(cfg.vocab_size, cfg.embed_dim);
  const auto& codes = codebook.assignment();
  const auto& tables = codebook.tables();
  parallel_for(static_cast<std::size_t>(cfg.vocab_size), [&](std::size_t b, std::size_t e) {
    for (auto n = static_cast<Index>(b); n < static_cast<Index>(e); ++n) {
      Index offset = 0;
      for (std::size_t k = 0; k < tables.size(); ++k) {
        out.row(n).segment(offset, tables[k].cols()) = tables[k].row(codes(n, Index(k)));
        offset += tables[k].cols();
      }
    }
  });
  return out;
}

#define SSE_INSTANTIATE(Scalar)                                                                  \
  template class Codebook<Scalar>;                                                               \
  template SubspaceTables<Scalar> init_tables<Scalar>(const SubspaceConfig&, std::uint64_t,     \
                                                      double);                                   \
  template Codebook<Scalar> make_codebook<Scalar>(const SubspaceConfig&, CodeAssignment,         \
                                                  Provenance, std::vector<Index>, double);       \
  template RowVector<Scalar> reconstruct_one<Scalar>(const Codebook<Scalar>&, Index);           \
  template EmbeddingMatrix<Scalar> reconstruct_all<Scalar>(const Codebook<Scalar>&);

SSE_INSTANTIATE(float)
SSE_INSTANTIATE(double)

}  // namespace sse
