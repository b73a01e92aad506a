// Command-line front end: assignment, inspection, reconstruction and
// distillation of subspace-embedding codebooks.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sse/sse.hpp"

namespace {

using namespace sse;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

// Raised for flag combinations CLI11 cannot express; maps to exit code 2.
struct UsageError : Error {
  using Error::Error;
};

std::string join(const std::vector<std::int64_t>& v, const char* sep = ",") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_accounting(std::ostream& os, const SubspaceConfig& cfg, std::int64_t baseline) {
  const auto params = param_count(cfg);
  os << "Q=" << cfg.table_size << "\n"
     << "params=" << params << "\n"
     << "baseline=" << baseline << "\n"
     << "reduction=" << format_percent(compression_ratio(params, baseline)) << "\n";
}

// ---- radix-assign ---------------------------------------------------------

struct RadixOptions {
  std::int64_t vocab_size = 0;
  std::int64_t subspaces = 0;
  std::optional<std::int64_t> table_size;
  std::int64_t dim = 512;
  std::uint64_t seed = 0;
  std::vector<Index> reserved;
  std::string out;
};

int run_radix(const RadixOptions& o) {
  const auto q = o.table_size ? *o.table_size : minimal_table_size(o.vocab_size, o.subspaces);
  const auto cfg = SubspaceConfig::make(o.vocab_size, o.dim, o.subspaces, q);
  auto codes = radix_assign(o.vocab_size, o.subspaces, q, o.reserved);
  if (!o.out.empty()) {
    const auto cb = make_codebook<float>(cfg, std::move(codes),
                                         {AssignAlgorithm::Radix, o.seed}, o.reserved);
    io::write_codebook(o.out, cb);
  }
  print_accounting(std::cout, cfg, o.vocab_size * o.dim);
  return kExitOk;
}

// ---- cluster-assign -------------------------------------------------------

struct ClusterOptions {
  std::string pretrained;
  std::int64_t subspaces = 0;
  std::int64_t table_size = 0;
  bool balanced = false;
  std::uint64_t seed = 0;
  std::vector<Index> reserved;
  std::int64_t dim = 512;
  int max_iters = 100;
  double tol = 1e-4;
  Index max_pairs = 200000;
  std::string out;
};

void print_histogram(std::ostream& os, const std::vector<Index>& sizes) {
  std::map<Index, Index> counts;
  for (Index s : sizes) ++counts[s];
  os << "   ";
  for (const auto& [size, n] : counts) os << " " << size << "x" << n;
  os << "\n";
}

int run_cluster(const ClusterOptions& o) {
  const auto pretrained = io::read_matrix(o.pretrained);
  const auto cfg =
      SubspaceConfig::make(pretrained.rows(), o.dim, o.subspaces, o.table_size);
  KMeansParams params;
  params.max_iters = o.max_iters;
  params.tol = o.tol;
  params.seed = o.seed;
  params.balanced = o.balanced;
  auto result = cluster_assign(pretrained, cfg, params, o.reserved);

  std::cout << "vocab_size=" << cfg.vocab_size << " pretrained_dim=" << pretrained.cols()
            << " f=" << cfg.num_subspaces << " Q=" << cfg.table_size
            << " mode=" << (o.balanced ? "balanced" : "naive") << " seed=" << o.seed << "\n";
  std::cout << "group sizes per level (size x count):\n";
  for (std::size_t level = 0; level < result.levels.size(); ++level) {
    const auto& stats = result.levels[level];
    std::vector<Index> sizes;
    for (const auto& s : stats.cluster_sizes) sizes.insert(sizes.end(), s.begin(), s.end());
    std::cout << "  level " << level + 1 << ": " << stats.group_prefixes.size() << " groups\n";
    print_histogram(std::cout, sizes);
  }

  const auto report = shared_prefix_similarity_report(pretrained, result.codes, o.max_pairs, o.seed);
  std::cout << "shared-prefix similarity (" << (report.exhaustive ? "all pairs" : "sampled pairs")
            << "):\n";
  for (const auto& b : report.buckets) {
    std::cout << "  prefix=" << b.shared_prefix << " pairs=" << b.pairs;
    if (b.pairs > 0) {
      std::cout << " mean_l2=" << fixed(b.mean_distance, 6) << " sd=" << fixed(b.stddev, 6);
    }
    std::cout << "\n";
  }
  print_accounting(std::cout, cfg, cfg.vocab_size * cfg.embed_dim);

  if (!o.out.empty()) {
    const auto algorithm =
        o.balanced ? AssignAlgorithm::ClusterBalanced : AssignAlgorithm::ClusterNaive;
    const auto cb = make_codebook<float>(cfg, std::move(result.codes), {algorithm, o.seed},
                                         o.reserved);
    io::write_codebook(o.out, cb);
  }
  return kExitOk;
}

// ---- reconstruct ----------------------------------------------------------

int run_reconstruct(const std::string& codebook_path, const std::string& out,
                    const std::vector<Index>& tokens) {
  const auto cb = io::read_codebook(codebook_path);
  if (tokens.empty()) {
    io::write_matrix(out, reconstruct_all(cb));
  } else {
    io::write_matrix(out, forward(cb, std::span<const Index>(tokens)));
  }
  return kExitOk;
}

// ---- verify ---------------------------------------------------------------

int run_verify(const std::string& codebook_path) {
  const auto cb = io::read_codebook(codebook_path);
  const auto& cfg = cb.config();
  bool ok = true;

  const auto uniq = verify_uniqueness(cb.assignment());
  if (uniq.unique) {
    std::cout << "unique: yes (" << cfg.vocab_size << " code tuples)\n";
  } else {
    const auto [a, b] = *uniq.first_collision;
    std::cout << "unique: no, tokens " << a << " and " << b << " share code tuple (";
    for (Index k = 0; k < cfg.num_subspaces; ++k) {
      std::cout << (k ? "," : "") << cb.assignment()(a, k);
    }
    std::cout << ")\n";
    ok = false;
  }

  if (power_at_least(cfg.table_size, cfg.num_subspaces, cfg.vocab_size)) {
    std::cout << "capacity: ok (Q^f >= D)\n";
  } else {
    std::cout << "capacity: insufficient, Q^f < D\n";
    ok = false;
  }

  std::cout << "reserved_tokens: " << cb.reserved_tokens().size() << "\n";
  std::cout << (ok ? "verify: PASS" : "verify: FAIL") << "\n";
  return ok ? kExitOk : kExitVerifyFailed;
}

// ---- stats ----------------------------------------------------------------

void print_stats(std::ostream& os, const Codebook<float>& cb, std::int64_t baseline) {
  const auto& cfg = cb.config();
  const auto params = param_count(cfg);
  const auto reduction = format_percent(compression_ratio(params, baseline));
  os << "Subspace embedding codebook\n"
     << "  algorithm          " << to_string(cb.provenance().algorithm) << "\n"
     << "  seed               " << cb.provenance().seed << "\n"
     << "  vocabulary (D)     " << cfg.vocab_size << "\n"
     << "  dimension (d)      " << cfg.embed_dim << "\n"
     << "  subspaces (f)      " << cfg.num_subspaces << "\n"
     << "  table size (Q)     " << cfg.table_size << "\n"
     << "  subspace dims      " << join(cfg.subspace_dims) << "\n"
     << "  reserved tokens    " << cb.reserved_tokens().size() << "\n"
     << "  embedding params   " << params << "\n"
     << "  baseline params    " << baseline << "\n"
     << "  reduction          " << reduction << "%\n";
  os << "algorithm=" << to_string(cb.provenance().algorithm) << "\n"
     << "seed=" << cb.provenance().seed << "\n"
     << "vocab_size=" << cfg.vocab_size << "\n"
     << "embed_dim=" << cfg.embed_dim << "\n"
     << "num_subspaces=" << cfg.num_subspaces << "\n"
     << "table_size=" << cfg.table_size << "\n"
     << "subspace_dims=" << join(cfg.subspace_dims) << "\n"
     << "reserved_tokens=" << cb.reserved_tokens().size() << "\n"
     << "params=" << params << "\n"
     << "baseline=" << baseline << "\n"
     << "reduction=" << reduction << "\n";
}

int run_stats(const std::string& codebook_path, std::optional<std::int64_t> baseline) {
  const auto cb = io::read_codebook(codebook_path);
  const auto base = baseline ? *baseline : cb.config().vocab_size * cb.config().embed_dim;
  if (base <= 0) throw UsageError("--baseline-params must be positive");
  print_stats(std::cout, cb, base);
  return kExitOk;
}

// ---- distill --------------------------------------------------------------

struct DistillOptions {
  std::string target;
  std::string codebook;
  int steps = 1000;
  double lr = 0.05;
  std::uint64_t seed = 0;
  Index batch_size = 0;
  std::string out;
  std::string history;
};

int run_distill(const DistillOptions& o) {
  const auto target = io::read_matrix(o.target);
  const auto source = io::read_codebook(o.codebook);
  const auto& cfg = source.config();
  if (target.rows() != cfg.vocab_size || target.cols() != cfg.embed_dim) {
    throw DataError("target is " + std::to_string(target.rows()) + "x" +
                    std::to_string(target.cols()) + " but the codebook describes " +
                    std::to_string(cfg.vocab_size) + "x" + std::to_string(cfg.embed_dim));
  }
  TrainConfig train;
  train.learning_rate = o.lr;
  train.steps = o.steps;
  train.seed = o.seed;
  train.batch_size = o.batch_size > 0 ? o.batch_size : cfg.vocab_size;

  // Fresh tables from the distillation seed; codes, reserved list and
  // assignment provenance come from the input codebook.
  Codebook<float> initial(cfg, source.assignment(), init_tables<float>(cfg, o.seed),
                          source.reserved_tokens(), source.provenance());
  const auto result = distill(target, std::move(initial), train);

  if (!o.out.empty()) io::write_codebook(o.out, result.codebook);
  if (!o.history.empty()) {
    std::ostringstream csv;
    csv << "step,mse\n";
    for (std::size_t i = 0; i < result.mse_history.size(); ++i) {
      csv << i << "," << fixed(result.mse_history[i], 9) << "\n";
    }
    io::write_file(o.history, csv.str());
  }
  std::cout << "initial_mse=" << fixed(result.mse_history.front(), 9) << "\n"
            << "final_mse=" << fixed(result.mse_history.back(), 9) << "\n"
            << "steps=" << o.steps << "\n";
  return kExitOk;
}

// ---- grad-check -----------------------------------------------------------

int run_grad_check(const std::vector<Index>& dims, std::uint64_t seed, Index batch) {
  if (dims.size() != 4) throw UsageError("--dims expects D,d,f,Q");
  const GradCheckDims g{dims[0], dims[1], dims[2], dims[3]};
  const auto r = gradient_check(g, seed, batch);
  const bool ok = r.max_relative_error < 1e-4;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", r.max_relative_error);
  std::cout << "entries=" << r.entries_checked << "\n"
            << "max_relative_error=" << buf << "\n"
            << "grad-check: " << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subspace-embedding codebooks: assign, inspect, reconstruct, distill"};
  app.require_subcommand(1);
  int exit_code = kExitOk;

  RadixOptions radix;
  auto* radix_cmd = app.add_subcommand("radix-assign", "Assign codes by base-Q digits");
  radix_cmd->add_option("--vocab-size", radix.vocab_size, "Vocabulary size D")->required();
  radix_cmd->add_option("--subspaces", radix.subspaces, "Number of subspaces f")->required();
  radix_cmd->add_option("--table-size", radix.table_size, "Table size Q (default: minimal)");
  radix_cmd->add_option("--dim", radix.dim, "Embedding dimension d")->capture_default_str();
  radix_cmd->add_option("--seed", radix.seed, "Table initialization seed")->capture_default_str();
  radix_cmd->add_option("--reserved", radix.reserved, "Reserved token ids")->delimiter(',');
  radix_cmd->add_option("--out", radix.out, "Codebook output path");
  radix_cmd->callback([&] { exit_code = run_radix(radix); });

  ClusterOptions cluster;
  auto* cluster_cmd =
      app.add_subcommand("cluster-assign", "Assign codes by recursive clustering");
  cluster_cmd->add_option("--pretrained", cluster.pretrained, "SSE1 pretrained matrix")
      ->required();
  cluster_cmd->add_option("--subspaces", cluster.subspaces, "Number of subspaces f")->required();
  cluster_cmd->add_option("--table-size", cluster.table_size, "Table size Q")->required();
  cluster_cmd->add_flag("--balanced", cluster.balanced, "Balanced k-means");
  cluster_cmd->add_option("--seed", cluster.seed, "Seed")->capture_default_str();
  cluster_cmd->add_option("--reserved", cluster.reserved, "Reserved token ids")->delimiter(',');
  cluster_cmd->add_option("--dim", cluster.dim, "Target embedding dimension d")
      ->capture_default_str();
  cluster_cmd->add_option("--max-iters", cluster.max_iters, "k-means iterations")
      ->capture_default_str();
  cluster_cmd->add_option("--tol", cluster.tol, "Relative inertia tolerance")
      ->capture_default_str();
  cluster_cmd->add_option("--max-pairs", cluster.max_pairs, "Pairs in the similarity report")
      ->capture_default_str();
  cluster_cmd->add_option("--out", cluster.out, "Codebook output path");
  cluster_cmd->callback([&] { exit_code = run_cluster(cluster); });

  std::string rec_codebook, rec_out;
  std::vector<Index> rec_tokens;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Write reconstructed embeddings as SSE1");
  rec_cmd->add_option("--codebook", rec_codebook, "Codebook path")->required();
  rec_cmd->add_option("--out", rec_out, "SSE1 output path")->required();
  rec_cmd->add_option("--tokens", rec_tokens, "Token ids (default: all)")->delimiter(',');
  rec_cmd->callback([&] { exit_code = run_reconstruct(rec_codebook, rec_out, rec_tokens); });

  std::string verify_codebook;
  auto* verify_cmd = app.add_subcommand("verify", "Check code uniqueness and capacity");
  verify_cmd->add_option("--codebook", verify_codebook, "Codebook path")->required();
  verify_cmd->callback([&] { exit_code = run_verify(verify_codebook); });

  std::string stats_codebook;
  std::optional<std::int64_t> stats_baseline;
  auto* stats_cmd = app.add_subcommand("stats", "Parameter accounting");
  stats_cmd->add_option("--codebook", stats_codebook, "Codebook path")->required();
  stats_cmd->add_option("--baseline-params", stats_baseline, "Baseline parameters (default D*d)");
  stats_cmd->callback([&] { exit_code = run_stats(stats_codebook, stats_baseline); });

  DistillOptions dist;
  auto* dist_cmd = app.add_subcommand("distill", "Fit tables to a target matrix by SGD");
  dist_cmd->add_option("--target", dist.target, "SSE1 target matrix")->required();
  dist_cmd->add_option("--codebook", dist.codebook, "Codebook supplying the codes")->required();
  dist_cmd->add_option("--steps", dist.steps, "SGD steps")->capture_default_str();
  dist_cmd->add_option("--lr", dist.lr, "Learning rate")->capture_default_str();
  dist_cmd->add_option("--seed", dist.seed, "Seed")->capture_default_str();
  dist_cmd->add_option("--batch-size", dist.batch_size, "Tokens per step (0: full batch)")
      ->capture_default_str();
  dist_cmd->add_option("--out", dist.out, "Fitted codebook output path");
  dist_cmd->add_option("--history", dist.history, "CSV of step,mse");
  dist_cmd->callback([&] { exit_code = run_distill(dist); });

  std::vector<Index> gc_dims{20, 8, 2, 5};
  std::uint64_t gc_seed = 0;
  Index gc_batch = 16;
  auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference check of backward");
  gc_cmd->add_option("--dims", gc_dims, "D,d,f,Q")->delimiter(',')->expected(4);
  gc_cmd->add_option("--seed", gc_seed, "Seed")->capture_default_str();
  gc_cmd->add_option("--batch", gc_batch, "Tokens in the batch")->capture_default_str();
  gc_cmd->callback([&] { exit_code = run_grad_check(gc_dims, gc_seed, gc_batch); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidConfig& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CapacityError& e) {
    // Q too small for D, or naive clustering overflowed a final group.
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return exit_code;
}
