#pragma once

#include <cstdint>
#include <vector>

#include "sse/codebook.hpp"
#include "sse/kmeans.hpp"
#include "sse/types.hpp"

namespace sse {

/// Clustering outcome of one subspace level.
struct LevelStats {
  /// Partial code tuple (c_1..c_{level}) that defined each group, in
  /// discovery (lexicographic) order.
  std::vector<std::vector<Code>> group_prefixes;
  /// Cluster sizes inside each group. For the last level this is the group
  /// size, one entry per group.
  std::vector<std::vector<Index>> cluster_sizes;
};

struct ClusterAssignment {
  CodeAssignment codes;
  /// One entry per subspace level, f in total.
  std::vector<LevelStats> levels;
};

/// Builds codes from pretrained vectors by recursive per-group clustering.
///
/// Levels 1..f-1 split every group of tokens that share a partial tuple into
/// min(Q, group size) clusters and write the cluster label into that level's
/// coordinate. Labels are shared across groups, so every level uses the same
/// Q table rows. The last level hands out distinct values in a seeded random
/// order inside each final group, which makes all tuples unique.
///
/// Reserved tokens take the radix codes of ranks 0..R-1 before clustering,
/// are left out of it, and their last digits are withheld from the matching
/// final group. In balanced mode the clustering of each group is capped by
/// the leaf slots that remain under every child prefix, so reserved codes
/// never push a final group past its free digits.
///
/// Throws CapacityError when a final group has more tokens than free last
/// digits, and DataError on a shape mismatch.
template <typename Scalar>
ClusterAssignment cluster_assign(const EmbeddingMatrix<Scalar>& pretrained,
                                 const SubspaceConfig& config, const KMeansParams& params,
                                 const std::vector<Index>& reserved_tokens = {});

/// Mean pretrained L2 distance between token pairs, bucketed by the length of
/// their common code prefix (0..f).
struct SimilarityReport {
  struct Bucket {
    Index shared_prefix = 0;
    Index pairs = 0;
    double mean_distance = 0.0;
    double stddev = 0.0;
  };
  std::vector<Bucket> buckets;
  /// True when every pair was visited rather than a sample.
  bool exhaustive = false;

  /// Mean distance over pairs whose shared prefix length is >= lo (or < lo
  /// when below is set). NaN if no such pair.
  double mean_distance_where(Index lo, bool below = false) const;
};

/// When D(D-1)/2 <= max_pairs every pair is used; otherwise max_pairs pairs
/// are drawn uniformly (distinct tokens) with the given seed.
template <typename Scalar>
SimilarityReport shared_prefix_similarity_report(const EmbeddingMatrix<Scalar>& pretrained,
                                                 const CodeAssignment& codes,
                                                 Index max_pairs = 200000,
                                                 std::uint64_t seed = 0);

}  // namespace sse
