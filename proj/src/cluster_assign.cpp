#include "sse/cluster_assign.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "sse/radix.hpp"
#include "sse/rng.hpp"

namespace sse {
namespace {

struct Group {
  std::vector<Code> prefix;
  std::vector<Index> tokens;
};

std::string format_prefix(const std::vector<Code>& prefix) {
  std::string s = "(";
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(prefix[i]);
  }
  return s + ")";
}

// min(q^exp, limit) without overflow.
Index saturating_power(Index q, Index exp, Index limit) {
  Index v = 1;
  for (Index i = 0; i < exp && v < limit; ++i) v = v > limit / q ? limit : v * q;
  return std::min(v, limit);
}

std::uint64_t group_stream(Index level, std::size_t group) {
  return (static_cast<std::uint64_t>(level) << 40) ^ static_cast<std::uint64_t>(group);
}

}  // namespace

template <typename Scalar>
ClusterAssignment cluster_assign(const EmbeddingMatrix<Scalar>& pretrained,
                                 const SubspaceConfig& config, const KMeansParams& params,
                                 const std::vector<Index>& reserved_tokens) {
  config.validate();
  if (pretrained.rows() != config.vocab_size) {
    throw DataError("cluster_assign: pretrained matrix has " + std::to_string(pretrained.rows()) +
                    " rows, vocab_size is " + std::to_string(config.vocab_size));
  }
  if (pretrained.cols() < 1) throw DataError("cluster_assign: pretrained vectors are empty");
  require_finite(pretrained, "cluster_assign: pretrained matrix");

  const Index vocab = config.vocab_size;
  const Index levels = config.num_subspaces;
  const Index q = config.table_size;

  ClusterAssignment out;
  out.codes = CodeAssignment::Zero(vocab, levels);
  out.levels.resize(static_cast<std::size_t>(levels));

  std::vector<bool> is_reserved(static_cast<std::size_t>(vocab), false);
  for (std::size_t i = 0; i < reserved_tokens.size(); ++i) {
    const Index r = reserved_tokens[i];
    if (r < 0 || r >= vocab) {
      throw IndexOutOfRange("cluster_assign: reserved token " + std::to_string(r) + " out of range");
    }
    if (is_reserved[static_cast<std::size_t>(r)]) {
      throw DataError("cluster_assign: reserved token " + std::to_string(r) + " listed twice");
    }
    is_reserved[static_cast<std::size_t>(r)] = true;
    const auto digits = radix_digits(i, q, levels);
    for (Index k = 0; k < levels; ++k) out.codes(r, k) = digits[static_cast<std::size_t>(k)];
  }

  std::vector<Group> groups(1);
  for (Index n = 0; n < vocab; ++n) {
    if (!is_reserved[static_cast<std::size_t>(n)]) groups[0].tokens.push_back(n);
  }
  if (groups[0].tokens.empty()) groups.clear();

  for (Index level = 0; level + 1 < levels; ++level) {
    auto& stats = out.levels[static_cast<std::size_t>(level)];
    std::vector<Group> next;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto& group = groups[g];
      KMeansParams kp = params;
      kp.k = std::min<Index>(q, static_cast<Index>(group.tokens.size()));
      kp.seed = derive_seed(params.seed, group_stream(level, g));
      kp.capacity.clear();
      if (params.balanced) {
        // Leaf slots left under each child prefix once reserved codes are
        // removed, so a tight table still fits every final group.
        const Index slots = saturating_power(q, levels - level - 1, vocab);
        kp.capacity.assign(static_cast<std::size_t>(kp.k), slots);
        for (Index r : reserved_tokens) {
          bool match = true;
          for (Index j = 0; j < level && match; ++j) {
            match = out.codes(r, j) == group.prefix[static_cast<std::size_t>(j)];
          }
          const Code child = out.codes(r, level);
          if (match && child < static_cast<Code>(kp.k)) --kp.capacity[child];
        }
      }
      const auto result = kmeans(pretrained, std::span<const Index>(group.tokens), kp);
      const Index k = result.centroids.rows();

      std::vector<Group> children(static_cast<std::size_t>(k));
      for (std::size_t i = 0; i < group.tokens.size(); ++i) {
        const Index label = result.labels[i];
        out.codes(group.tokens[i], level) = static_cast<Code>(label);
        children[static_cast<std::size_t>(label)].tokens.push_back(group.tokens[i]);
      }
      stats.group_prefixes.push_back(group.prefix);
      stats.cluster_sizes.push_back(cluster_sizes(result.labels, k));
      for (Index c = 0; c < k; ++c) {
        auto& child = children[static_cast<std::size_t>(c)];
        if (child.tokens.empty()) continue;
        child.prefix = group.prefix;
        child.prefix.push_back(static_cast<Code>(c));
        next.push_back(std::move(child));
      }
    }
    groups = std::move(next);
  }

  // Last digits already held by reserved tokens, keyed by their prefix.
  std::map<std::vector<Code>, std::vector<bool>> taken;
  for (Index r : reserved_tokens) {
    std::vector<Code> prefix(static_cast<std::size_t>(levels - 1));
    for (Index k = 0; k + 1 < levels; ++k) prefix[static_cast<std::size_t>(k)] = out.codes(r, k);
    auto& slots = taken[prefix];
    slots.resize(static_cast<std::size_t>(q), false);
    slots[out.codes(r, levels - 1)] = true;
  }

  auto& last = out.levels[static_cast<std::size_t>(levels - 1)];
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    std::vector<Code> free_digits;
    const auto it = taken.find(group.prefix);
    for (Index c = 0; c < q; ++c) {
      if (it == taken.end() || !it->second[static_cast<std::size_t>(c)]) {
        free_digits.push_back(static_cast<Code>(c));
      }
    }
    if (group.tokens.size() > free_digits.size()) {
      throw CapacityError("cluster_assign: final group " + format_prefix(group.prefix) + " has " +
                          std::to_string(group.tokens.size()) + " tokens but only " +
                          std::to_string(free_digits.size()) +
                          " free codes; enable balanced clustering or raise table_size");
    }
    Rng rng(derive_seed(params.seed, group_stream(levels - 1, g)));
    rng.shuffle(free_digits);
    for (std::size_t i = 0; i < group.tokens.size(); ++i) {
      out.codes(group.tokens[i], levels - 1) = free_digits[i];
    }
    last.group_prefixes.push_back(group.prefix);
    last.cluster_sizes.push_back({static_cast<Index>(group.tokens.size())});
  }

  const auto check = verify_uniqueness(out.codes);
  if (!check.unique) {
    throw Error("cluster_assign: produced duplicate codes for tokens " +
                std::to_string(check.first_collision->first) + " and " +
                std::to_string(check.first_collision->second));
  }
  return out;
}

double SimilarityReport::mean_distance_where(Index lo, bool below) const {
  double sum = 0.0;
  Index count = 0;
  for (const auto& b : buckets) {
    if (b.pairs > 0 && (b.shared_prefix >= lo) != below) {
      sum += b.mean_distance * static_cast<double>(b.pairs);
      count += b.pairs;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

template <typename Scalar>
SimilarityReport shared_prefix_similarity_report(const EmbeddingMatrix<Scalar>& pretrained,
                                                 const CodeAssignment& codes, Index max_pairs,
                                                 std::uint64_t seed) {
  if (pretrained.rows() != codes.rows()) {
    throw DataError("similarity report: pretrained rows and code rows differ");
  }
  const Index vocab = codes.rows();
  const Index levels = codes.cols();

  std::vector<Index> count(static_cast<std::size_t>(levels + 1), 0);
  std::vector<double> mean(count.size(), 0.0);
  std::vector<double> m2(count.size(), 0.0);
  auto visit = [&](Index i, Index j) {
    Index s = 0;
    while (s < levels && codes(i, s) == codes(j, s)) ++s;
    const double d =
        (pretrained.row(i).template cast<double>() - pretrained.row(j).template cast<double>())
            .norm();
    // Welford update
    const auto b = static_cast<std::size_t>(s);
    ++count[b];
    const double delta = d - mean[b];
    mean[b] += delta / static_cast<double>(count[b]);
    m2[b] += delta * (d - mean[b]);
  };

  SimilarityReport report;
  const double total = 0.5 * static_cast<double>(vocab) * static_cast<double>(vocab - 1);
  if (total <= static_cast<double>(max_pairs)) {
    report.exhaustive = true;
    for (Index i = 0; i < vocab; ++i) {
      for (Index j = i + 1; j < vocab; ++j) visit(i, j);
    }
  } else {
    Rng rng(seed);
    for (Index p = 0; p < max_pairs; ++p) {
      const auto i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(vocab)));
      auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(vocab - 1)));
      if (j >= i) ++j;
      visit(i, j);
    }
  }

  for (Index s = 0; s <= levels; ++s) {
    const auto b = static_cast<std::size_t>(s);
    SimilarityReport::Bucket bucket;
    bucket.shared_prefix = s;
    bucket.pairs = count[b];
    bucket.mean_distance = count[b] > 0 ? mean[b] : std::numeric_limits<double>::quiet_NaN();
    bucket.stddev = count[b] > 1 ? std::sqrt(m2[b] / static_cast<double>(count[b] - 1)) : 0.0;
    report.buckets.push_back(bucket);
  }
  return report;
}

#define SSE_INSTANTIATE(Scalar)                                                                  \
  template ClusterAssignment cluster_assign<Scalar>(const EmbeddingMatrix<Scalar>&,              \
                                                    const SubspaceConfig&, const KMeansParams&,  \
                                                    const std::vector<Index>&);                  \
  template SimilarityReport shared_prefix_similarity_report<Scalar>(                             \
      const EmbeddingMatrix<Scalar>&, const CodeAssignment&, Index, std::uint64_t);

SSE_INSTANTIATE(float)
SSE_INSTANTIATE(double)

}  // namespace sse
