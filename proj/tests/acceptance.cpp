// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Every tolerance and time bound is a named constant below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sse/sse.hpp"

using namespace sse;

namespace {

constexpr double kPercentTolerance = 0.1;       // percentage points, criterion 3
constexpr double kMultilingualFloor = 99.95;    // percent, criterion 4
constexpr double kGradTolerance = 1e-4;         // relative error, criterion 9
constexpr double kFiniteDiffStep = 1e-4;        // criterion 9
constexpr double kDistillGap = 1e-6;            // absolute MSE gap, criterion 10
constexpr double kDistillReduction = 0.1;       // final / initial MSE, criterion 10
constexpr double kInertiaSlack = 1e-12;         // relative, criterion 12

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1-4: paper numbers -------------------------------------------------

constexpr std::int64_t kEnglishVocab = 50265;
constexpr std::int64_t kMultilingualVocab = 250002;
constexpr std::int64_t kDim = 512;

void parameter_counts(Outcome& o) {
  const std::int64_t baseline = param_count(SubspaceConfig::flat(kEnglishVocab, kDim));
  o.check(baseline == 25735680, "baseline 25,735,680");
  const struct {
    std::int64_t vocab, f, q, expected;
  } rows[] = {{kEnglishVocab, 2, 225, 115200},
              {kEnglishVocab, 3, 37, 18944},
              {kEnglishVocab, 8, 4, 2048},
              {kMultilingualVocab, 3, 63, 32256}};
  for (const auto& r : rows) {
    const auto got = param_count(SubspaceConfig::make(r.vocab, kDim, r.f, r.q));
    o.check(got == r.expected, "D=" + std::to_string(r.vocab) + " f=" + std::to_string(r.f) +
                                   " gives " + std::to_string(got));
  }
}

void table_sizes(Outcome& o) {
  const struct {
    std::int64_t vocab, f, expected;
  } rows[] = {{kEnglishVocab, 2, 225},
              {kEnglishVocab, 3, 37},
              {kEnglishVocab, 8, 4},
              {kMultilingualVocab, 3, 63},
              {50627, 8, 4}};
  for (const auto& r : rows) {
    const auto got = minimal_table_size(r.vocab, r.f);
    o.check(got == r.expected, "D=" + std::to_string(r.vocab) + " f=" + std::to_string(r.f) +
                                   " gives Q=" + std::to_string(got));
  }
  // The stated vocabulary of 50,627 cannot give Q=225 for f=2; 50,265 can.
  const auto q2 = minimal_table_size(50627, 2);
  o.check(q2 == 226, "D=50627 f=2 expected Q=226");
  o.note("documented: D=50,627 with f=2 needs Q=" + std::to_string(q2) +
         ", not the reported 225; D=50,265 is used for the f=2 and f=3 rows");
}

void compression_rates(Outcome& o) {
  const std::int64_t baseline = kEnglishVocab * kDim;
  const struct {
    const char* label;
    std::int64_t params;
    double reported;
  } rows[] = {{"2-SE", 115200, 99.5},
              {"3-SE", 18944, 99.93},
              {"uniform Q=100", SubspaceConfig::make(kEnglishVocab, kDim, 3, 100).table_size * kDim,
               99.8},
              {"uniform Q=50", SubspaceConfig::make(kEnglishVocab, kDim, 3, 50).table_size * kDim,
               99.87}};
  for (const auto& r : rows) {
    const double pct = compression_ratio(r.params, baseline);
    o.check(std::abs(pct - r.reported) <= kPercentTolerance,
            std::string(r.label) + " " + format_percent(pct) + " vs " + fmt("%.2f", r.reported));
  }
  // Q=50 gives 25,600 parameters, i.e. 99.90%, which the table prints as 99.87.
  const auto q50 = format_percent(compression_ratio(50 * kDim, baseline));
  o.check(q50 == "99.90", "Q=50 expected 99.90");
  o.check(q50 != "99.87", "Q=50 discrepancy no longer present");
  o.note("documented: uniform Q=50 computes to " + q50 + "% against the reported 99.87%");
}

void multilingual_claim(Outcome& o) {
  const std::int64_t params = param_count(SubspaceConfig::make(kMultilingualVocab, kDim, 3, 63));
  const std::int64_t baseline = kMultilingualVocab * kDim;
  o.check(baseline == 128001024, "multilingual baseline");
  // params / baseline <= 0.0005 in integers
  o.check(params * 10000 <= 5 * baseline, "reduction below 99.95%");
  const double pct = compression_ratio(params, baseline);
  o.check(pct >= kMultilingualFloor, "reduction " + fmt("%.4f", pct));
  o.note("reduction " + fmt("%.4f", pct) + "%");
}

// ---- 6: radix uniqueness ------------------------------------------------

void radix_uniqueness(Outcome& o) {
  std::mt19937_64 rng(6);
  int brute = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto vocab = 1 + static_cast<std::int64_t>(rng() % 5000);
    const auto f = 1 + static_cast<std::int64_t>(rng() % 6);
    const auto codes = radix_assign(vocab, f);
    const bool unique = verify_uniqueness(codes).unique;
    o.check(unique, "D=" + std::to_string(vocab) + " f=" + std::to_string(f));
    if (vocab <= 1000) {
      ++brute;
      o.check(oracle::first_duplicate_pair(codes).first < 0 && unique,
              "brute force disagrees at D=" + std::to_string(vocab));
    }
  }
  o.note(std::to_string(brute) + " of 200 cross-checked by O(D^2) comparison");
}

// ---- 7: cluster assignment ----------------------------------------------

// Recounts group sizes from the codes and checks them against the clustering
// record: the group with prefix p + (c) at level k+1 must have exactly the
// size reported for cluster c of group p at level k.
bool refinement_consistent(const ClusterAssignment& out) {
  const Index f = out.codes.cols();
  for (Index level = 0; level + 1 < f; ++level) {
    std::map<std::vector<Code>, Index> child_size;
    for (Index n = 0; n < out.codes.rows(); ++n) {
      std::vector<Code> p(out.codes.row(n).data(), out.codes.row(n).data() + level + 1);
      ++child_size[p];
    }
    const auto& stats = out.levels[std::size_t(level)];
    Index clustered = 0;
    for (std::size_t g = 0; g < stats.group_prefixes.size(); ++g) {
      const auto& sizes = stats.cluster_sizes[g];
      for (std::size_t c = 0; c < sizes.size(); ++c) {
        auto p = stats.group_prefixes[g];
        p.push_back(static_cast<Code>(c));
        if (child_size[p] != sizes[c]) return false;
        clustered += sizes[c];
      }
    }
    if (clustered != out.codes.rows()) return false;
  }
  return true;
}

void cluster_properties(Outcome& o) {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> normal;
  for (int trial = 0; trial < 50; ++trial) {
    const Index vocab = 1 + Index(rng() % 2000);
    const Index dim = 1 + Index(rng() % 32);
    const Index f = 1 + Index(rng() % 4);
    const Index q = minimal_table_size(vocab, f) + Index(rng() % 3);
    Matrix<float> pts(vocab, dim);
    for (Index i = 0; i < pts.size(); ++i) pts.data()[i] = normal(rng);
    const auto cfg = SubspaceConfig::make(vocab, std::max<Index>(f, 16), f, q);
    KMeansParams params;
    params.max_iters = 10;
    params.seed = rng();
    params.balanced = true;
    const auto out = cluster_assign(pts, cfg, params);
    const std::string where = " (trial " + std::to_string(trial) + ")";
    o.check(oracle::first_duplicate_pair(out.codes).first < 0, "unique" + where);
    o.check(refinement_consistent(out), "refinement" + where);
    for (Index level = 0; level + 1 < f; ++level) {
      for (const auto& sizes : out.levels[std::size_t(level)].cluster_sizes) {
        const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
        o.check(*hi - *lo <= 1, "size gap" + where);
      }
    }
  }
}

// ---- 8: shared-prefix similarity on blobs -------------------------------

void similarity_on_blobs(Outcome& o) {
  constexpr Index kBlobs = 8, kPerBlob = 50, kDimPre = 16;
  int passed = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> wide(0.0f, 10.0f), tight(0.0f, 1.0f);
    Matrix<float> centers(kBlobs, kDimPre);
    for (Index i = 0; i < centers.size(); ++i) centers.data()[i] = wide(rng);
    Matrix<float> pts(kBlobs * kPerBlob, kDimPre);
    for (Index n = 0; n < pts.rows(); ++n) {
      for (Index j = 0; j < kDimPre; ++j) pts(n, j) = centers(n % kBlobs, j) + tight(rng);
    }
    const auto cfg = SubspaceConfig::make(pts.rows(), 48, 3, kBlobs);
    KMeansParams params;
    params.seed = seed;
    params.balanced = true;
    const auto out = cluster_assign(pts, cfg, params);
    const auto report = shared_prefix_similarity_report(pts, out.codes);
    const double sharing = report.mean_distance_where(1);
    const double apart = report.mean_distance_where(1, true);
    if (sharing < apart) {
      ++passed;
    } else {
      o.check(false, "seed " + std::to_string(seed) + ": " + fmt("%.4f", sharing) +
                         " >= " + fmt("%.4f", apart));
    }
  }
  o.note(std::to_string(passed) + "/20 seeds: sharing c_1 is closer");
}

// ---- 9: gradient correctness --------------------------------------------

double half_sq_norm(const Codebook<double>& cb, const std::vector<Index>& batch) {
  double s = 0.0;
  for (Index t : batch) {
    for (std::size_t k = 0; k < cb.tables().size(); ++k) {
      s += 0.5 * cb.tables()[k].row(cb.assignment()(t, Index(k))).squaredNorm();
    }
  }
  return s;
}

void gradient_correctness(Outcome& o) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index vocab = 2 + Index(rng() % 50);
    const Index f = 1 + Index(rng() % 4);
    const Index dim = f + Index(rng() % 13);
    const Index q = minimal_table_size(vocab, f) + Index(rng() % 2);
    const auto cfg = SubspaceConfig::make(vocab, dim, f, q);
    SubspaceTables<double> tables;
    for (auto w : cfg.subspace_dims) {
      Matrix<double> t(q, w);
      for (Index i = 0; i < t.size(); ++i) t.data()[i] = normal(rng);
      tables.push_back(t);
    }
    const Codebook<double> cb(cfg, radix_assign(vocab, f, q), tables);
    std::vector<Index> batch(1 + rng() % 20);
    for (auto& t : batch) t = Index(rng() % std::uint64_t(vocab));
    const std::span<const Index> span(batch);
    const auto analytic = backward(cb, span, forward(cb, span));

    for (std::size_t k = 0; k < tables.size(); ++k) {
      for (Index e = 0; e < tables[k].size(); ++e) {
        auto plus = tables, minus = tables;
        plus[k].data()[e] += kFiniteDiffStep;
        minus[k].data()[e] -= kFiniteDiffStep;
        const double numeric = (half_sq_norm(Codebook<double>(cfg, cb.assignment(), plus), batch) -
                                half_sq_norm(Codebook<double>(cfg, cb.assignment(), minus), batch)) /
                               (2 * kFiniteDiffStep);
        const double exact = analytic[k].data()[e];
        const double denom = std::max(std::abs(numeric), std::abs(exact));
        if (denom > 0) worst = std::max(worst, std::abs(numeric - exact) / denom);
      }
    }
  }
  o.check(worst < kGradTolerance, "max relative error " + fmt("%.3e", worst));
  o.note("max relative error " + fmt("%.3e", worst));
}

// ---- 10: distillation ---------------------------------------------------

struct DistillRun {
  double initial = 0.0, final_mse = 0.0, closed = 0.0;
};

DistillRun run_distill(const EmbeddingMatrix<float>& target, const CodeAssignment& codes,
                       const SubspaceConfig& cfg) {
  TrainConfig train;
  train.learning_rate = 0.05;
  train.batch_size = cfg.vocab_size;
  train.steps = 2000;
  train.seed = 10;
  const auto r = distill(target, codes, cfg, train);
  return {r.mse_history.front(), r.mse_history.back(),
          reconstruction_mse(closed_form_distill(target, codes, cfg), target)};
}

void distillation(Outcome& o) {
  const Index vocab = 1000, dim = 64, f = 2, q = 32;
  const auto cfg = SubspaceConfig::make(vocab, dim, f, q);
  const auto codes = radix_assign(vocab, f, q);

  std::mt19937_64 rng(10);
  std::normal_distribution<float> normal;
  Matrix<float> target(vocab, dim);
  for (Index i = 0; i < target.size(); ++i) target.data()[i] = normal(rng);

  const auto r = run_distill(target, codes, cfg);
  o.check(std::abs(r.final_mse - r.closed) <= kDistillGap,
          "gap to closed form " + fmt("%.3e", std::abs(r.final_mse - r.closed)));
  o.check(r.final_mse <= kDistillReduction * r.initial,
          "final/initial MSE " + fmt("%.4f", r.final_mse / r.initial) + " > " +
              fmt("%.2f", kDistillReduction));
  o.note("iid N(0,1) target: initial " + fmt("%.6f", r.initial) + ", final " +
         fmt("%.6f", r.final_mse) + ", closed form " + fmt("%.6f", r.closed) + ", gap " +
         fmt("%.3e", std::abs(r.final_mse - r.closed)));
  // Each of the 32 rows per table is shared by about 31 tokens, so even the
  // exact least-squares fit keeps about 1 - 1/31 of an iid target's
  // variance. The 10% bound cannot be met by any method on this target.
  o.note("least-squares floor is " + fmt("%.4f", r.closed / r.initial) +
         " of the initial MSE; with 32 rows per table the expected floor is 1 - 32/1000 of the"
         " target variance for any assignment");

  // Supplementary, not part of the verdict: a target the codebook can
  // represent exactly, where both bounds are reachable.
  Codebook<float> truth(cfg, codes, init_tables<float>(cfg, 11, 1.0));
  const auto s = run_distill(reconstruct_all(truth), codes, cfg);
  o.note("supplementary realizable target: final/initial " + fmt("%.3e", s.final_mse / s.initial) +
         ", gap " + fmt("%.3e", std::abs(s.final_mse - s.closed)));
}

// ---- 11: IO --------------------------------------------------------------

template <typename E, typename Fn>
bool throws_exactly(Fn&& fn) {
  try {
    fn();
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

template <typename T>
void poke(std::string& bytes, std::size_t at, T v) {
  std::memcpy(bytes.data() + at, &v, sizeof(T));
}

void io_round_trips(Outcome& o) {
  std::mt19937_64 rng(11);
  std::normal_distribution<float> normal(0.0f, 5.0f);
  int exact = 0;
  for (int trial = 0; trial < 500; ++trial) {
    Matrix<float> m(1 + Index(rng() % 64), 1 + Index(rng() % 64));
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    const auto bytes = io::encode_matrix(m);
    const auto back = io::decode_matrix(bytes);
    const bool same = back.rows() == m.rows() && back.cols() == m.cols() &&
                      std::memcmp(back.data(), m.data(), sizeof(float) * std::size_t(m.size())) == 0;

    const Index vocab = 1 + Index(rng() % 300);
    const Index f = 1 + Index(rng() % 4);
    const Index q = minimal_table_size(vocab, f) + Index(rng() % 3);
    const auto cfg = SubspaceConfig::make(vocab, f + Index(rng() % 12), f, q);
    const auto cb = make_codebook<float>(cfg, radix_assign(vocab, f, q),
                                         {AssignAlgorithm::Radix, rng()});
    const auto cb_bytes = io::encode_codebook(cb);
    const auto cb_back = io::decode_codebook(cb_bytes);
    bool cb_same = cb_back.assignment() == cb.assignment() && cb_back.config() == cb.config();
    for (std::size_t k = 0; k < cb.tables().size() && cb_same; ++k) {
      cb_same = std::memcmp(cb_back.tables()[k].data(), cb.tables()[k].data(),
                            sizeof(float) * std::size_t(cb.tables()[k].size())) == 0;
    }
    if (same && cb_same) ++exact;
  }
  o.check(exact == 500, std::to_string(exact) + "/500 exact");

  Matrix<float> m = Matrix<float>::Constant(4, 3, 0.25f);
  const auto good = io::encode_matrix(m);
  auto bad = good;
  bad.replace(0, 4, "XXXX");
  o.check(throws_exactly<BadMagic>([&] { io::decode_matrix(bad); }), "bad magic");
  o.check(throws_exactly<TruncatedPayload>([&] { io::decode_matrix(good.substr(0, 40)); }),
          "truncated payload");
  o.check(throws_exactly<TruncatedPayload>([&] { io::decode_matrix(good.substr(0, 12)); }),
          "truncated header");
  bad = good;
  poke<std::uint64_t>(bad, 8, 5);
  o.check(throws_exactly<TruncatedPayload>([&] { io::decode_matrix(bad); }), "rows overstated");
  bad = good;
  poke<std::uint64_t>(bad, 16, std::uint64_t{1} << 62);
  o.check(throws_exactly<TruncatedPayload>([&] { io::decode_matrix(bad); }), "dim overstated");
  bad = good;
  poke<std::uint64_t>(bad, 8, 3);
  o.check(throws_exactly<ValidationError>([&] { io::decode_matrix(bad); }), "rows understated");
  bad = good;
  poke<std::uint32_t>(bad, 4, 7);
  o.check(throws_exactly<UnsupportedVersion>([&] { io::decode_matrix(bad); }), "version");
  bad = good;
  bad[24] = 9;
  o.check(throws_exactly<UnknownDtype>([&] { io::decode_matrix(bad); }), "dtype");

  const auto cfg = SubspaceConfig::make(20, 4, 2, 5);
  const auto cb_bytes = io::encode_codebook(
      make_codebook<float>(cfg, radix_assign(20, 2, 5), {AssignAlgorithm::Radix, 1}));
  const auto header_len = [&] {
    std::uint64_t n;
    std::memcpy(&n, cb_bytes.data() + 8, 8);
    return n;
  }();
  std::string header = io::codebook_header(cb_bytes);
  const auto pos = header.find("\"table_size\":5");
  o.check(pos != std::string::npos, "header field present");
  if (pos != std::string::npos) {
    header.replace(pos, 14, "\"table_size\":3");  // same length
    std::string edited = cb_bytes;
    edited.replace(16, header_len, header);
    o.check(throws_exactly<ValidationError>([&] { io::decode_codebook(edited); }),
            "codebook header lies about table_size");
  }
  o.check(throws_exactly<TruncatedPayload>(
              [&] { io::decode_codebook(cb_bytes.substr(0, cb_bytes.size() - 3)); }),
          "truncated codebook");
  o.check(throws_exactly<BadMagic>([&] { io::decode_codebook("SSE1" + cb_bytes.substr(4)); }),
          "codebook magic");
}

// ---- 12: k-means against exhaustive partitions --------------------------

void kmeans_oracle(Outcome& o) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + Index(rng() % 7);  // 2..8
    Matrix<double> pts(n, 1 + Index(rng() % 3));
    for (Index i = 0; i < pts.size(); ++i) pts.data()[i] = normal(rng);
    KMeansParams p;
    p.k = 2;
    p.seed = rng();
    const auto naive = kmeans(pts, p);
    p.balanced = true;
    const auto bal = kmeans(pts, p);
    const std::string where = " (trial " + std::to_string(trial) + ")";
    o.check(naive.inertia >= oracle::best_two_partition(pts, false) * (1 - kInertiaSlack),
            "naive beats optimum" + where);
    o.check(bal.inertia >= oracle::best_two_partition(pts, true) * (1 - kInertiaSlack),
            "balanced beats optimum" + where);
    const auto sizes = cluster_sizes(bal.labels, 2);
    o.check(std::abs(sizes[0] - sizes[1]) <= 1, "balanced capacity" + where);
  }
}

struct Criterion {
  int id;
  const char* title;
  double seconds;  // time bound
  std::function<void(Outcome&)> body;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "parameter counts", 1.0, parameter_counts},
      {2, "table sizes", 1.0, table_sizes},
      {3, "compression rates", 1.0, compression_rates},
      {4, "multilingual reduction >= 99.95%", 1.0, multilingual_claim},
      {6, "radix uniqueness, 200 configs", 10.0, radix_uniqueness},
      {7, "cluster assignment properties, 50 instances", 60.0, cluster_properties},
      {8, "shared-prefix similarity on blobs, 20 seeds", 30.0, similarity_on_blobs},
      {9, "backward vs finite differences, 50 shapes", 30.0, gradient_correctness},
      {10, "distillation D=1000 d=64 f=2 Q=32", 120.0, distillation},
      {11, "IO round trips and malformed files", 10.0, io_round_trips},
      {12, "k-means vs exhaustive partitions, 200 instances", 10.0, kmeans_oracle},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.check(secs <= c.seconds, "took " + fmt("%.2f", secs) + " s, bound " + fmt("%.0f", c.seconds) + " s");
    if (!o.pass) ++failures;
    std::printf("%s [%d] %s (%.3f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.title, secs);
    for (const auto& n : o.notes) std::printf("       %s\n", n.c_str());
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
