#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sse/types.hpp"

namespace sse {

struct KMeansParams {
  Index k = 1;
  int max_iters = 100;
  /// Stop when the relative decrease of inertia falls below tol.
  double tol = 1e-4;
  std::uint64_t seed = 0;
  /// Cluster sizes differ by at most one.
  bool balanced = false;
  /// Balanced mode only: hard upper bound on the size of each cluster. Empty
  /// means unbounded. Sizes still differ by at most one among clusters whose
  /// bound is not binding.
  std::vector<Index> capacity;
};

template <typename Scalar>
struct ClusterResult {
  std::vector<Index> labels;
  Matrix<Scalar> centroids;
  /// Sum of squared L2 distances from each point to its assigned centroid.
  double inertia = 0.0;
  int iterations = 0;
  /// Inertia after each iteration.
  std::vector<double> inertia_history;
};

/// Lloyd iteration from k-means++ seeds. With params.balanced the assignment
/// step is balanced_assign and the best iterate is returned. If there are
/// fewer points than k, k is reduced to the number of points.
///
/// Throws DataError on an empty or non-finite input.
template <typename Scalar>
ClusterResult<Scalar> kmeans(const Matrix<Scalar>& points, const KMeansParams& params);

/// Same as kmeans, restricted to the given rows of points. labels[i] belongs
/// to points.row(rows[i]).
template <typename Scalar>
ClusterResult<Scalar> kmeans(const Matrix<Scalar>& points, std::span<const Index> rows,
                             const KMeansParams& params);

/// Greedy capacity-constrained assignment. All (point, centroid) pairs are
/// visited in ascending (distance, point, centroid) order; a pair is taken
/// when the point is unassigned and the centroid still has room. Every
/// centroid holds floor(N/k) points and N mod k of them hold one more.
///
/// With a capacity vector the quotas are water-filled instead: each centroid
/// c gets min(capacity[c], t) for the smallest level t that seats every point.
/// Throws CapacityError when the capacities sum to less than N.
template <typename Scalar>
std::vector<Index> balanced_assign(const Matrix<Scalar>& points, const Matrix<Scalar>& centroids,
                                   std::span<const Index> capacity = {});

template <typename Scalar>
std::vector<Index> balanced_assign(const Matrix<Scalar>& points, std::span<const Index> rows,
                                   const Matrix<Scalar>& centroids,
                                   std::span<const Index> capacity = {});

/// Sum of squared distances of each point to centroids.row(labels[i]).
template <typename Scalar>
double inertia(const Matrix<Scalar>& points, std::span<const Index> labels,
               const Matrix<Scalar>& centroids);

/// Number of points carrying each label in [0, k).
std::vector<Index> cluster_sizes(std::span<const Index> labels, Index k);

}  // namespace sse
