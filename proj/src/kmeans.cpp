#include "sse/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "sse/parallel.hpp"
#include "sse/rng.hpp"

namespace sse {
namespace {

// Rows of a matrix selected by index, without copying them.
template <typename Scalar>
struct RowSubset {
  const Matrix<Scalar>& points;
  std::span<const Index> rows;

  Index size() const { return static_cast<Index>(rows.size()); }
  auto row(Index i) const { return points.row(rows[static_cast<std::size_t>(i)]); }
};

template <typename Scalar, typename A, typename B>
double squared_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  double s = 0.0;
  for (Index j = 0; j < a.size(); ++j) {
    const double diff = static_cast<double>(a(j)) - static_cast<double>(b(j));
    s += diff * diff;
  }
  return s;
}

template <typename Scalar>
void check_input(const RowSubset<Scalar>& pts) {
  if (pts.size() < 1) throw DataError("kmeans: no points");
  if (pts.points.cols() < 1) throw DataError("kmeans: points have zero dimension");
  for (Index i = 0; i < pts.size(); ++i) {
    if (!pts.row(i).allFinite()) {
      throw DataError("kmeans: non-finite value in point " + std::to_string(i));
    }
  }
}

template <typename Scalar>
Matrix<Scalar> seed_plus_plus(const RowSubset<Scalar>& pts, Index k, Rng& rng) {
  const Index n = pts.size();
  Matrix<Scalar> centroids(k, pts.points.cols());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);

  Index first = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
  centroids.row(0) = pts.row(first);
  chosen[static_cast<std::size_t>(first)] = true;

  std::vector<double> min_d2(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    min_d2[static_cast<std::size_t>(i)] = squared_distance<Scalar>(pts.row(i), centroids.row(0));
  }

  for (Index c = 1; c < k; ++c) {
    const double total = std::accumulate(min_d2.begin(), min_d2.end(), 0.0);
    Index pick = -1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double cum = 0.0;
      for (Index i = 0; i < n; ++i) {
        cum += min_d2[static_cast<std::size_t>(i)];
        if (cum > u && min_d2[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        // u landed past the last increment through rounding
        for (Index i = n - 1; i >= 0; --i) {
          if (min_d2[static_cast<std::size_t>(i)] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // Every point coincides with a centroid; take the lowest unused index.
      for (Index i = 0; i < n; ++i) {
        if (!chosen[static_cast<std::size_t>(i)]) {
          pick = i;
          break;
        }
      }
    }
    centroids.row(c) = pts.row(pick);
    chosen[static_cast<std::size_t>(pick)] = true;
    for (Index i = 0; i < n; ++i) {
      auto& m = min_d2[static_cast<std::size_t>(i)];
      m = std::min(m, squared_distance<Scalar>(pts.row(i), centroids.row(c)));
    }
  }
  return centroids;
}

template <typename Scalar>
void assign_nearest(const RowSubset<Scalar>& pts, const Matrix<Scalar>& centroids,
                    std::vector<Index>& labels) {
  parallel_for(
      static_cast<std::size_t>(pts.size()),
      [&](std::size_t b, std::size_t e) {
        for (auto i = static_cast<Index>(b); i < static_cast<Index>(e); ++i) {
          double best = std::numeric_limits<double>::infinity();
          Index arg = 0;
          for (Index c = 0; c < centroids.rows(); ++c) {
            const double d = squared_distance<Scalar>(pts.row(i), centroids.row(c));
            if (d < best) {
              best = d;
              arg = c;
            }
          }
          labels[static_cast<std::size_t>(i)] = arg;
        }
      },
      256);
}

// Moves the point farthest from its centroid (taken from a cluster with more
// than one member) into each empty cluster. Never increases inertia.
template <typename Scalar>
void fill_empty_clusters(const RowSubset<Scalar>& pts, Matrix<Scalar>& centroids,
                         std::vector<Index>& labels) {
  const Index k = centroids.rows();
  auto sizes = cluster_sizes(labels, k);
  for (Index c = 0; c < k; ++c) {
    if (sizes[static_cast<std::size_t>(c)] > 0) continue;
    double worst = -1.0;
    Index arg = -1;
    for (Index i = 0; i < pts.size(); ++i) {
      const Index l = labels[static_cast<std::size_t>(i)];
      if (sizes[static_cast<std::size_t>(l)] < 2) continue;
      const double d = squared_distance<Scalar>(pts.row(i), centroids.row(l));
      if (d > worst) {
        worst = d;
        arg = i;
      }
    }
    if (arg < 0) break;  // fewer points than clusters; cannot happen after k reduction
    --sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(arg)])];
    labels[static_cast<std::size_t>(arg)] = c;
    sizes[static_cast<std::size_t>(c)] = 1;
    centroids.row(c) = pts.row(arg);
  }
}

template <typename Scalar>
Matrix<Scalar> cluster_means(const RowSubset<Scalar>& pts, const std::vector<Index>& labels,
                             const Matrix<Scalar>& previous) {
  const Index k = previous.rows();
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, pts.points.cols());
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < pts.size(); ++i) {
    const Index l = labels[static_cast<std::size_t>(i)];
    sums.row(l) += pts.row(i).template cast<double>();
    ++counts[static_cast<std::size_t>(l)];
  }
  Matrix<Scalar> out = previous;
  for (Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) {
      out.row(c) = (sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]))
                       .template cast<Scalar>();
    }
  }
  return out;
}

template <typename Scalar>
double subset_inertia(const RowSubset<Scalar>& pts, const std::vector<Index>& labels,
                      const Matrix<Scalar>& centroids) {
  double s = 0.0;
  for (Index i = 0; i < pts.size(); ++i) {
    s += squared_distance<Scalar>(pts.row(i), centroids.row(labels[static_cast<std::size_t>(i)]));
  }
  return s;
}

// Per-centroid quotas: every centroid may hold `base` points, and `extra`
// of the centroids flagged in `may_extend` may hold one more.
struct Quotas {
  std::vector<Index> base;
  std::vector<bool> may_extend;
  Index extra = 0;
};

Quotas make_quotas(Index n, Index k, std::span<const Index> capacity) {
  Quotas q;
  if (capacity.empty()) {
    q.base.assign(static_cast<std::size_t>(k), n / k);
    q.may_extend.assign(static_cast<std::size_t>(k), true);
    q.extra = n % k;
    return q;
  }
  if (static_cast<Index>(capacity.size()) < k) {
    throw DataError("balanced_assign: one capacity per centroid required");
  }
  Index total = 0;
  for (Index c = 0; c < k; ++c) {
    if (capacity[static_cast<std::size_t>(c)] < 0) {
      throw DataError("balanced_assign: negative capacity");
    }
    total += std::min(capacity[static_cast<std::size_t>(c)], n);
  }
  if (total < n) {
    throw CapacityError("balanced_assign: capacities hold " + std::to_string(total) + " of " +
                        std::to_string(n) + " points");
  }
  auto seats = [&](Index level) {
    Index s = 0;
    for (Index c = 0; c < k; ++c) s += std::min(capacity[static_cast<std::size_t>(c)], level);
    return s;
  };
  Index lo = 0, hi = n;  // seats(hi) >= n
  while (lo < hi) {
    const Index mid = lo + (hi - lo) / 2;
    if (seats(mid) >= n) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  const Index level = lo;
  for (Index c = 0; c < k; ++c) {
    const Index cap = capacity[static_cast<std::size_t>(c)];
    q.base.push_back(std::min(cap, level > 0 ? level - 1 : 0));
    q.may_extend.push_back(cap >= level && level > 0);
  }
  q.extra = n - std::accumulate(q.base.begin(), q.base.end(), Index{0});
  return q;
}

template <typename Scalar>
std::vector<Index> balanced_assign_impl(const RowSubset<Scalar>& pts,
                                        const Matrix<Scalar>& centroids,
                                        std::span<const Index> capacity) {
  const Index n = pts.size();
  const Index k = centroids.rows();
  if (k < 1) throw DataError("balanced_assign: no centroids");
  if (centroids.cols() != pts.points.cols()) {
    throw DataError("balanced_assign: centroid dimension mismatch");
  }
  auto quotas = make_quotas(n, k, capacity);

  struct Pair {
    double d;
    std::uint32_t point;
    std::uint32_t centroid;
  };
  std::vector<Pair> pairs(static_cast<std::size_t>(n * k));
  parallel_for(
      static_cast<std::size_t>(n),
      [&](std::size_t b, std::size_t e) {
        for (auto i = static_cast<Index>(b); i < static_cast<Index>(e); ++i) {
          for (Index c = 0; c < k; ++c) {
            pairs[static_cast<std::size_t>(i * k + c)] = {
                squared_distance<Scalar>(pts.row(i), centroids.row(c)),
                static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(c)};
          }
        }
      },
      256);
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.d != b.d) return a.d < b.d;
    if (a.point != b.point) return a.point < b.point;
    return a.centroid < b.centroid;
  });

  std::vector<Index> labels(static_cast<std::size_t>(n), -1);
  std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
  Index assigned = 0;
  for (const auto& p : pairs) {
    if (assigned == n) break;
    auto& label = labels[p.point];
    if (label >= 0) continue;
    auto& size = sizes[p.centroid];
    const Index base = quotas.base[p.centroid];
    if (size < base) {
      // open
    } else if (size == base && quotas.extra > 0 && quotas.may_extend[p.centroid]) {
      --quotas.extra;
    } else {
      continue;
    }
    label = p.centroid;
    ++size;
    ++assigned;
  }
  return labels;
}

template <typename Scalar>
ClusterResult<Scalar> kmeans_impl(const RowSubset<Scalar>& pts, const KMeansParams& params) {
  check_input(pts);
  if (params.k < 1) throw InvalidConfig("kmeans: k must be >= 1");
  if (params.max_iters < 1) throw InvalidConfig("kmeans: max_iters must be >= 1");
  if (params.tol < 0.0) throw InvalidConfig("kmeans: tol must be non-negative");

  const Index k = std::min(params.k, pts.size());
  std::span<const Index> capacity;
  if (params.balanced && !params.capacity.empty()) {
    if (static_cast<Index>(params.capacity.size()) < params.k) {
      throw InvalidConfig("kmeans: capacity needs one entry per cluster");
    }
    capacity = std::span<const Index>(params.capacity).first(static_cast<std::size_t>(k));
  }
  Rng rng(params.seed);
  ClusterResult<Scalar> result;
  result.centroids = seed_plus_plus(pts, k, rng);

  std::vector<Index> labels(static_cast<std::size_t>(pts.size()), 0);
  std::vector<Index> previous_labels;
  double previous = std::numeric_limits<double>::infinity();
  bool have_best = false;

  for (int it = 1; it <= params.max_iters; ++it) {
    Matrix<Scalar> centroids = result.centroids;
    if (params.balanced) {
      labels = balanced_assign_impl(pts, centroids, capacity);
    } else {
      assign_nearest(pts, centroids, labels);
      fill_empty_clusters(pts, centroids, labels);
    }
    centroids = cluster_means(pts, labels, centroids);
    const double current = subset_inertia(pts, labels, centroids);
    result.inertia_history.push_back(current);
    result.iterations = it;

    if (!params.balanced || !have_best || current < result.inertia) {
      result.labels = labels;
      result.centroids = std::move(centroids);
      result.inertia = current;
      have_best = true;
    }
    if (labels == previous_labels) break;
    if (previous <= 0.0 || previous - current <= params.tol * previous) break;
    previous = current;
    previous_labels = labels;
  }
  return result;
}

}  // namespace

std::vector<Index> cluster_sizes(std::span<const Index> labels, Index k) {
  std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
  for (Index l : labels) {
    if (l < 0 || l >= k) throw IndexOutOfRange("cluster_sizes: label out of range");
    ++sizes[static_cast<std::size_t>(l)];
  }
  return sizes;
}

template <typename Scalar>
ClusterResult<Scalar> kmeans(const Matrix<Scalar>& points, std::span<const Index> rows,
                             const KMeansParams& params) {
  for (Index r : rows) {
    if (r < 0 || r >= points.rows()) throw IndexOutOfRange("kmeans: row index out of range");
  }
  return kmeans_impl(RowSubset<Scalar>{points, rows}, params);
}

template <typename Scalar>
ClusterResult<Scalar> kmeans(const Matrix<Scalar>& points, const KMeansParams& params) {
  std::vector<Index> rows(static_cast<std::size_t>(points.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  return kmeans_impl(RowSubset<Scalar>{points, rows}, params);
}

template <typename Scalar>
std::vector<Index> balanced_assign(const Matrix<Scalar>& points, std::span<const Index> rows,
                                   const Matrix<Scalar>& centroids,
                                   std::span<const Index> capacity) {
  for (Index r : rows) {
    if (r < 0 || r >= points.rows()) {
      throw IndexOutOfRange("balanced_assign: row index out of range");
    }
  }
  return balanced_assign_impl(RowSubset<Scalar>{points, rows}, centroids, capacity);
}

template <typename Scalar>
std::vector<Index> balanced_assign(const Matrix<Scalar>& points, const Matrix<Scalar>& centroids,
                                   std::span<const Index> capacity) {
  std::vector<Index> rows(static_cast<std::size_t>(points.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  return balanced_assign_impl(RowSubset<Scalar>{points, rows}, centroids, capacity);
}

template <typename Scalar>
double inertia(const Matrix<Scalar>& points, std::span<const Index> labels,
               const Matrix<Scalar>& centroids) {
  if (static_cast<Index>(labels.size()) != points.rows()) {
    throw DataError("inertia: one label per point required");
  }
  double s = 0.0;
  for (Index i = 0; i < points.rows(); ++i) {
    const Index l = labels[static_cast<std::size_t>(i)];
    if (l < 0 || l >= centroids.rows()) throw IndexOutOfRange("inertia: label out of range");
    s += squared_distance<Scalar>(points.row(i), centroids.row(l));
  }
  return s;
}

#define SSE_INSTANTIATE(Scalar)                                                                 \
  template ClusterResult<Scalar> kmeans<Scalar>(const Matrix<Scalar>&, const KMeansParams&);    \
  template ClusterResult<Scalar> kmeans<Scalar>(const Matrix<Scalar>&, std::span<const Index>,  \
                                                const KMeansParams&);                           \
  template std::vector<Index> balanced_assign<Scalar>(                                          \
      const Matrix<Scalar>&, const Matrix<Scalar>&, std::span<const Index>);                    \
  template std::vector<Index> balanced_assign<Scalar>(                                          \
      const Matrix<Scalar>&, std::span<const Index>, const Matrix<Scalar>&,                     \
      std::span<const Index>);                                                                  \
  template double inertia<Scalar>(const Matrix<Scalar>&, std::span<const Index>,                \
                                  const Matrix<Scalar>&);

SSE_INSTANTIATE(float)
SSE_INSTANTIATE(double)

}  // namespace sse
