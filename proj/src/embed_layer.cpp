#include "sse/embed_layer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sse/radix.hpp"
#include "sse/rng.hpp"

namespace sse {
namespace {

void check_tokens(std::span<const Index> tokens, Index vocab) {
  for (Index t : tokens) {
    if (t < 0 || t >= vocab) {
      throw IndexOutOfRange("token " + std::to_string(t) + " out of range [0, " +
                            std::to_string(vocab) + ")");
    }
  }
}

template <typename Scalar>
SubspaceTables<Scalar> zero_like(const SubspaceTables<Scalar>& tables) {
  SubspaceTables<Scalar> out;
  out.reserve(tables.size());
  for (const auto& t : tables) out.push_back(Matrix<Scalar>::Zero(t.rows(), t.cols()));
  return out;
}

void check_target(const SubspaceConfig& config, Index rows, Index cols) {
  if (rows != config.vocab_size || cols != config.embed_dim) {
    throw DataError("target is " + std::to_string(rows) + "x" + std::to_string(cols) +
                    ", expected " + std::to_string(config.vocab_size) + "x" +
                    std::to_string(config.embed_dim));
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidConfig("train: learning_rate must be positive");
  }
  if (batch_size < 1) throw InvalidConfig("train: batch_size must be positive");
  if (steps < 1) throw InvalidConfig("train: steps must be positive");
}

template <typename Scalar>
Matrix<Scalar> forward(const Codebook<Scalar>& codebook, std::span<const Index> tokens) {
  const auto& cfg = codebook.config();
  check_tokens(tokens, cfg.vocab_size);
  Matrix<Scalar> out(static_cast<Index>(tokens.size()), cfg.embed_dim);
  const auto& tables = codebook.tables();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Index offset = 0;
    for (std::size_t k = 0; k < tables.size(); ++k) {
      out.row(Index(i)).segment(offset, tables[k].cols()) =
          tables[k].row(codebook.assignment()(tokens[i], Index(k)));
      offset += tables[k].cols();
    }
  }
  return out;
}

template <typename Scalar>
SubspaceTables<Scalar> backward(const Codebook<Scalar>& codebook, std::span<const Index> tokens,
                                const Matrix<Scalar>& upstream) {
  const auto& cfg = codebook.config();
  if (upstream.rows() != static_cast<Index>(tokens.size()) || upstream.cols() != cfg.embed_dim) {
    throw DataError("backward: upstream gradient is " + std::to_string(upstream.rows()) + "x" +
                    std::to_string(upstream.cols()) + ", expected " +
                    std::to_string(tokens.size()) + "x" + std::to_string(cfg.embed_dim));
  }
  check_tokens(tokens, cfg.vocab_size);
  auto grad = zero_like(codebook.tables());
  // Scatter-add in batch order.
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Index offset = 0;
    for (std::size_t k = 0; k < grad.size(); ++k) {
      grad[k].row(codebook.assignment()(tokens[i], Index(k))) +=
          upstream.row(Index(i)).segment(offset, grad[k].cols());
      offset += grad[k].cols();
    }
  }
  return grad;
}

template <typename Scalar>
double reconstruction_mse(const Codebook<Scalar>& codebook, const EmbeddingMatrix<Scalar>& target) {
  check_target(codebook.config(), target.rows(), target.cols());
  const auto rebuilt = reconstruct_all(codebook);
  return (rebuilt.template cast<double>() - target.template cast<double>()).squaredNorm() /
         static_cast<double>(target.size());
}

template <typename Scalar>
DistillResult<Scalar> distill(const EmbeddingMatrix<Scalar>& target, Codebook<Scalar> initial,
                              const TrainConfig& train) {
  train.validate();
  const auto& cfg = initial.config();
  check_target(cfg, target.rows(), target.cols());
  require_finite(target, "distill: target");

  const Index vocab = cfg.vocab_size;
  const bool full_batch = train.batch_size >= vocab;
  const Index batch = full_batch ? vocab : train.batch_size;
  const auto scale = static_cast<Scalar>(static_cast<double>(vocab) / static_cast<double>(batch));

  std::vector<Index> tokens(static_cast<std::size_t>(batch));
  if (full_batch) std::iota(tokens.begin(), tokens.end(), Index{0});
  Rng rng(derive_seed(train.seed, 0xD157));

  DistillResult<Scalar> result{std::move(initial), {}};
  result.mse_history.reserve(static_cast<std::size_t>(train.steps) + 1);
  result.mse_history.push_back(reconstruction_mse(result.codebook, target));

  Matrix<Scalar> residual(batch, cfg.embed_dim);
  for (int step = 0; step < train.steps; ++step) {
    if (!full_batch) {
      for (auto& t : tokens) t = static_cast<Index>(rng.below(static_cast<std::uint64_t>(vocab)));
    }
    residual = forward(result.codebook, std::span<const Index>(tokens));
    for (Index i = 0; i < batch; ++i) residual.row(i) -= target.row(tokens[std::size_t(i)]);
    residual *= scale;
    const auto grad = backward(result.codebook, std::span<const Index>(tokens), residual);
    result.codebook.apply_update(grad, static_cast<Scalar>(train.learning_rate));
    result.mse_history.push_back(reconstruction_mse(result.codebook, target));
  }
  return result;
}

template <typename Scalar>
DistillResult<Scalar> distill(const EmbeddingMatrix<Scalar>& target,
                              const CodeAssignment& assignment, const SubspaceConfig& config,
                              const TrainConfig& train) {
  return distill(target, make_codebook<Scalar>(config, assignment, Provenance{{}, train.seed}),
                 train);
}

template <typename Scalar>
Codebook<Scalar> closed_form_distill(const EmbeddingMatrix<Scalar>& target,
                                     const CodeAssignment& assignment,
                                     const SubspaceConfig& config, std::uint64_t seed) {
  config.validate_shape();
  check_target(config, target.rows(), target.cols());
  if (assignment.rows() != config.vocab_size || assignment.cols() != config.num_subspaces) {
    throw DataError("closed_form_distill: assignment shape does not match config");
  }
  auto tables = init_tables<Scalar>(config, seed);
  Index offset = 0;
  for (std::size_t k = 0; k < tables.size(); ++k) {
    auto& table = tables[k];
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(table.rows(), table.cols());
    std::vector<Index> counts(static_cast<std::size_t>(table.rows()), 0);
    for (Index n = 0; n < config.vocab_size; ++n) {
      const Code q = assignment(n, Index(k));
      if (q >= static_cast<Code>(table.rows())) {
        throw DataError("closed_form_distill: code out of range");
      }
      sums.row(q) += target.row(n).segment(offset, table.cols()).template cast<double>();
      ++counts[q];
    }
    for (Index q = 0; q < table.rows(); ++q) {
      const auto c = counts[static_cast<std::size_t>(q)];
      if (c > 0) table.row(q) = (sums.row(q) / static_cast<double>(c)).template cast<Scalar>();
    }
    offset += table.cols();
  }
  return Codebook<Scalar>(config, assignment, std::move(tables), {}, Provenance{{}, seed});
}

GradCheckResult gradient_check(const GradCheckDims& dims, std::uint64_t seed, Index batch_size,
                               double step) {
  const auto config =
      SubspaceConfig::make(dims.vocab_size, dims.embed_dim, dims.num_subspaces, dims.table_size);
  auto codebook = make_codebook<double>(config, radix_assign(dims.vocab_size, dims.num_subspaces,
                                                             dims.table_size),
                                        Provenance{AssignAlgorithm::Radix, seed}, {}, 1.0);
  Rng rng(derive_seed(seed, 0x6C));
  std::vector<Index> batch(static_cast<std::size_t>(batch_size));
  for (auto& t : batch) t = static_cast<Index>(rng.below(static_cast<std::uint64_t>(dims.vocab_size)));

  const std::span<const Index> tokens(batch);
  const auto out = forward(codebook, tokens);
  const auto analytic = backward(codebook, tokens, out);

  auto loss = [&](const Codebook<double>& cb) { return 0.5 * forward(cb, tokens).squaredNorm(); };

  GradCheckResult result;
  auto perturbed = zero_like(codebook.tables());
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    for (Index e = 0; e < analytic[k].size(); ++e) {
      perturbed[k].data()[e] = 1.0;
      Codebook<double> plus = codebook;
      plus.apply_update(perturbed, -step);
      Codebook<double> minus = codebook;
      minus.apply_update(perturbed, step);
      perturbed[k].data()[e] = 0.0;

      const double numeric = (loss(plus) - loss(minus)) / (2.0 * step);
      const double exact = analytic[k].data()[e];
      const double denom = std::max(std::abs(numeric), std::abs(exact));
      const double rel = denom > 0.0 ? std::abs(numeric - exact) / denom : 0.0;
      result.max_relative_error = std::max(result.max_relative_error, rel);
      ++result.entries_checked;
    }
  }
  return result;
}

#define SSE_INSTANTIATE(Scalar)                                                                   \
  template Matrix<Scalar> forward<Scalar>(const Codebook<Scalar>&, std::span<const Index>);       \
  template SubspaceTables<Scalar> backward<Scalar>(const Codebook<Scalar>&,                       \
                                                   std::span<const Index>, const Matrix<Scalar>&); \
  template double reconstruction_mse<Scalar>(const Codebook<Scalar>&,                             \
                                             const EmbeddingMatrix<Scalar>&);                     \
  template DistillResult<Scalar> distill<Scalar>(const EmbeddingMatrix<Scalar>&, Codebook<Scalar>, \
                                                 const TrainConfig&);                             \
  template DistillResult<Scalar> distill<Scalar>(const EmbeddingMatrix<Scalar>&,                  \
                                                 const CodeAssignment&, const SubspaceConfig&,    \
                                                 const TrainConfig&);                             \
  template Codebook<Scalar> closed_form_distill<Scalar>(                                          \
      const EmbeddingMatrix<Scalar>&, const CodeAssignment&, const SubspaceConfig&, std::uint64_t);

SSE_INSTANTIATE(float)
SSE_INSTANTIATE(double)

}  // namespace sse
