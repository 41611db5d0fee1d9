#pragma once

// Deterministic point-cloud kernels: farthest point sampling, brute-force
// nearest neighbors, local grouping, and inverse-distance interpolation.
// The public functions parallelize across output rows with OpenMP; the
// agcn::geometry::reference namespace keeps independently written serial
// versions that the tests require to agree bit for bit.

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

namespace agcn::geometry {

using Point = std::array<double, 3>;

struct PointCloud {
  std::vector<Point> coords;        // N x 3
  std::vector<double> channels;     // N x C, row major (may be empty)
  int channel_count = 0;
  std::vector<int> labels;          // empty or N entries, each >= 0

  int size() const { return static_cast<int>(coords.size()); }
  bool has_channels() const { return channel_count > 0; }
  bool has_labels() const { return !labels.empty(); }
  const double* channel_row(int i) const { return channels.data() + static_cast<std::size_t>(i) * channel_count; }

  // Enforces the type invariants (finiteness, matching row counts,
  // non-negative labels). Throws std::invalid_argument on violation.
  void validate() const;
};

struct NodeSet {
  std::vector<int> indices;   // M indices into the parent cloud, distinct
  std::vector<Point> coords;  // copies of the selected coordinates

  int size() const { return static_cast<int>(indices.size()); }
};

struct LocalGroup {
  int l = 0;
  std::vector<int> member_indices;        // M x L
  std::vector<double> normalized_coords;  // M x L x 3
  std::vector<double> member_channels;    // M x L x C (empty when cloud has none)
  int channel_count = 0;

  int node_count() const {
    return l == 0 ? 0 : static_cast<int>(member_indices.size()) / l;
  }
};

struct KnnGraph {
  int k = 0;
  std::vector<int> neighbor_indices;  // M x K, each row ascending by distance
  std::vector<Point> node_coords;     // M x 3

  int node_count() const { return static_cast<int>(node_coords.size()); }
  const int* row(int j) const { return neighbor_indices.data() + static_cast<std::size_t>(j) * k; }
};

// Greedy farthest point sampling. indices[0] = seed_index; each following
// pick maximizes the minimum distance to the already selected set, ties
// broken by lowest point index.
NodeSet farthest_point_sample(const PointCloud& cloud, int m, int seed_index);

// Index of the lexicographically smallest coordinate triple; an
// order-independent FPS seed for permutation-invariance work.
int geometric_seed_index(const PointCloud& cloud);

// Row q holds the k reference indices nearest to query q, ascending by
// distance, ties broken by lowest index. With exclude_self the queries must
// be the reference array itself (row q skips reference q).
std::vector<int> knn_query(const std::vector<Point>& queries, const std::vector<Point>& references,
                           int k, bool exclude_self);

KnnGraph knn_graph(const NodeSet& nodes, int k);

LocalGroup group_local(const PointCloud& cloud, const NodeSet& nodes, int l);

// Precomputed IDW gather: for each destination, its m nearest sources and
// normalized weights. singular marks rows where the nearest source is closer
// than 1e-10 (features are then copied verbatim from that source).
struct IdwWeights {
  int m = 0;
  std::vector<int> source_indices;  // D x m
  std::vector<double> weights;      // D x m, each row sums to 1
  std::vector<char> singular;       // D flags
};

IdwWeights idw_weights(const std::vector<Point>& dst_coords, const std::vector<Point>& src_coords,
                       int m, double power);

// Inverse-distance-weighted interpolation of S x F source features onto the
// destination points; returns D x F row major.
std::vector<double> interpolate_idw(const std::vector<Point>& dst_coords,
                                    const std::vector<Point>& src_coords,
                                    const std::vector<double>& src_features, int feature_width,
                                    int m, double power);

namespace reference {

// Serial brute-force implementations, written independently of the parallel
// kernels above. They double as the test oracles and as the baseline side of
// the kernel benchmark.
NodeSet farthest_point_sample(const PointCloud& cloud, int m, int seed_index);
std::vector<int> knn_query(const std::vector<Point>& queries, const std::vector<Point>& references,
                           int k, bool exclude_self);
std::vector<double> interpolate_idw(const std::vector<Point>& dst_coords,
                                    const std::vector<Point>& src_coords,
                                    const std::vector<double>& src_features, int feature_width,
                                    int m, double power);

}  // namespace reference

}  // namespace agcn::geometry
