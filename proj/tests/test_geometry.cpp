#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "agcn/common.hpp"
#include "agcn/geometry.hpp"
#include "doctest.h"

using namespace agcn;
using geometry::Point;
using geometry::PointCloud;

namespace {

PointCloud make_cloud(std::vector<Point> coords) {
  PointCloud cloud;
  cloud.coords = std::move(coords);
  return cloud;
}

PointCloud random_cloud(int n, Rng& rng, int channels = 0) {
  PointCloud cloud;
  cloud.channel_count = channels;
  for (int i = 0; i < n; ++i) {
    cloud.coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    for (int c = 0; c < channels; ++c) cloud.channels.push_back(rng.uniform(-1, 1));
  }
  return cloud;
}

double dist(const Point& a, const Point& b) {
  double s = 0;
  for (int d = 0; d < 3; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("point cloud validation") {
  PointCloud cloud = make_cloud({{0, 0, 0}});
  CHECK_NOTHROW(cloud.validate());

  PointCloud empty;
  CHECK_THROWS_AS(empty.validate(), std::invalid_argument);

  PointCloud nan_cloud = make_cloud({{0, 0, std::nan("")}});
  CHECK_THROWS_AS(nan_cloud.validate(), std::invalid_argument);

  PointCloud bad_labels = make_cloud({{0, 0, 0}, {1, 0, 0}});
  bad_labels.labels = {1};
  CHECK_THROWS_AS(bad_labels.validate(), std::invalid_argument);
  bad_labels.labels = {1, -1};
  CHECK_THROWS_AS(bad_labels.validate(), std::invalid_argument);

  PointCloud bad_channels = make_cloud({{0, 0, 0}, {1, 0, 0}});
  bad_channels.channel_count = 2;
  bad_channels.channels = {0.5, 0.5};  // one row short
  CHECK_THROWS_AS(bad_channels.validate(), std::invalid_argument);
}

TEST_CASE("farthest point sampling picks the farthest point") {
  PointCloud cloud = make_cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {10, 0, 0}});
  geometry::NodeSet nodes = geometry::farthest_point_sample(cloud, 2, 0);
  CHECK(nodes.indices == std::vector<int>{0, 3});
  CHECK(nodes.coords[1] == Point{10, 0, 0});
}

TEST_CASE("farthest point sampling breaks ties by lowest index") {
  PointCloud cloud = make_cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
  geometry::NodeSet nodes = geometry::farthest_point_sample(cloud, 2, 0);
  CHECK(nodes.indices == std::vector<int>{0, 1});
}

TEST_CASE("farthest point sampling with m = N covers every point") {
  Rng rng(3);
  PointCloud cloud = random_cloud(23, rng);
  geometry::NodeSet nodes = geometry::farthest_point_sample(cloud, 23, 5);
  std::set<int> seen(nodes.indices.begin(), nodes.indices.end());
  CHECK(seen.size() == 23);
  CHECK(nodes.indices[0] == 5);
}

TEST_CASE("farthest point sampling rejects bad arguments") {
  PointCloud cloud = make_cloud({{0, 0, 0}, {1, 0, 0}});
  CHECK_THROWS_AS(geometry::farthest_point_sample(cloud, 3, 0), std::invalid_argument);
  CHECK_THROWS_AS(geometry::farthest_point_sample(cloud, 1, 2), std::invalid_argument);
  CHECK_THROWS_AS(geometry::farthest_point_sample(cloud, 1, -1), std::invalid_argument);
}

TEST_CASE("farthest point sampling covering property (brute force)") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 8 + static_cast<int>(rng.uniform_index(56));
    PointCloud cloud = random_cloud(n, rng);
    const int m = 2 + static_cast<int>(rng.uniform_index(n - 1));
    geometry::NodeSet nodes = geometry::farthest_point_sample(cloud, m, 0);
    for (int t = 1; t < m; ++t) {
      auto min_dist_to_selected = [&](int p) {
        double best = std::numeric_limits<double>::infinity();
        for (int s = 0; s < t; ++s) {
          best = std::min(best, dist(cloud.coords[p], cloud.coords[nodes.indices[s]]));
        }
        return best;
      };
      const double picked = min_dist_to_selected(nodes.indices[t]);
      std::set<int> selected(nodes.indices.begin(), nodes.indices.begin() + t);
      for (int p = 0; p < n; ++p) {
        if (!selected.count(p)) CHECK(min_dist_to_selected(p) <= picked + 1e-15);
      }
    }
  }
}

TEST_CASE("farthest point sampling matches the serial reference exactly") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform_index(125));
    PointCloud cloud = random_cloud(n, rng);
    const int m = 1 + static_cast<int>(rng.uniform_index(n));
    const int seed = static_cast<int>(rng.uniform_index(n));
    geometry::NodeSet a = geometry::farthest_point_sample(cloud, m, seed);
    geometry::NodeSet b = geometry::reference::farthest_point_sample(cloud, m, seed);
    CHECK(a.indices == b.indices);
    CHECK(a.coords == b.coords);
  }
}

TEST_CASE("geometric seed index picks the lexicographically smallest point") {
  PointCloud cloud = make_cloud({{1, 0, 0}, {-1, 5, 0}, {-1, 2, 7}, {0, 0, 0}});
  CHECK(geometry::geometric_seed_index(cloud) == 2);
}

TEST_CASE("knn query basics") {
  std::vector<Point> refs{{0, 0, 1}, {0, 0, 2}, {0, 0, 3}};
  std::vector<Point> queries{{0, 0, 0}};
  CHECK(geometry::knn_query(queries, refs, 2, false) == std::vector<int>{0, 1});
}

TEST_CASE("knn query excludes self") {
  std::vector<Point> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  std::vector<int> rows = geometry::knn_query(pts, pts, 2, true);
  CHECK(rows == std::vector<int>{1, 2, 0, 2, 1, 0});
}

TEST_CASE("knn query rejects oversized k") {
  std::vector<Point> pts{{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(geometry::knn_query(pts, pts, 3, false), std::invalid_argument);
  CHECK_THROWS_AS(geometry::knn_query(pts, pts, 2, true), std::invalid_argument);
}

TEST_CASE("knn query matches the exhaustive sort oracle") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_index(124));
    PointCloud cloud = random_cloud(n, rng);
    PointCloud queries = random_cloud(1 + static_cast<int>(rng.uniform_index(16)), rng);
    const int k = 1 + static_cast<int>(rng.uniform_index(std::min(n - 1, 8)));
    CHECK(geometry::knn_query(queries.coords, cloud.coords, k, false) ==
          geometry::reference::knn_query(queries.coords, cloud.coords, k, false));
    CHECK(geometry::knn_query(cloud.coords, cloud.coords, k, true) ==
          geometry::reference::knn_query(cloud.coords, cloud.coords, k, true));
  }
}

TEST_CASE("knn graph on collinear nodes") {
  geometry::NodeSet nodes;
  nodes.indices = {0, 1, 2};
  nodes.coords = {{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
  geometry::KnnGraph g = geometry::knn_graph(nodes, 1);
  CHECK(g.neighbor_indices == std::vector<int>{1, 0, 1});
}

TEST_CASE("complete knn graph covers all other nodes") {
  Rng rng(31);
  PointCloud cloud = random_cloud(9, rng);
  geometry::NodeSet nodes;
  for (int i = 0; i < 9; ++i) {
    nodes.indices.push_back(i);
    nodes.coords.push_back(cloud.coords[i]);
  }
  geometry::KnnGraph g = geometry::knn_graph(nodes, 8);
  for (int j = 0; j < 9; ++j) {
    std::set<int> row(g.row(j), g.row(j) + 8);
    CHECK(row.size() == 8);
    CHECK(row.count(j) == 0);
    // ascending by distance
    for (int i = 1; i < 8; ++i) {
      CHECK(dist(nodes.coords[j], nodes.coords[g.row(j)[i - 1]]) <=
            dist(nodes.coords[j], nodes.coords[g.row(j)[i]]) + 1e-15);
    }
  }
  CHECK_THROWS_AS(geometry::knn_graph(nodes, 9), std::invalid_argument);
}

TEST_CASE("local grouping normalizes against the node") {
  PointCloud cloud = make_cloud({{1, 1, 1}, {2, 1, 1}});
  geometry::NodeSet nodes;
  nodes.indices = {0};
  nodes.coords = {{1, 1, 1}};
  geometry::LocalGroup g = geometry::group_local(cloud, nodes, 2);
  CHECK(g.member_indices == std::vector<int>{0, 1});
  CHECK(g.normalized_coords == std::vector<double>{0, 0, 0, 1, 0, 0});
}

TEST_CASE("local grouping is invariant under global translation") {
  Rng rng(37);
  PointCloud cloud = random_cloud(40, rng, 2);
  // Quantize to exactly representable values so the translation cancels
  // bit for bit in the subtraction.
  for (auto& p : cloud.coords) {
    for (int d = 0; d < 3; ++d) p[d] = std::round(p[d] * 8.0) / 8.0;
  }
  geometry::NodeSet nodes = geometry::farthest_point_sample(cloud, 6, 0);
  geometry::LocalGroup before = geometry::group_local(cloud, nodes, 5);

  PointCloud shifted = cloud;
  for (auto& p : shifted.coords) {
    p[0] += 5;
    p[1] -= 3;
    p[2] += 2;
  }
  geometry::NodeSet shifted_nodes;
  shifted_nodes.indices = nodes.indices;
  for (int i : nodes.indices) shifted_nodes.coords.push_back(shifted.coords[i]);
  geometry::LocalGroup after = geometry::group_local(shifted, shifted_nodes, 5);
  CHECK(before.member_indices == after.member_indices);
  CHECK(before.normalized_coords == after.normalized_coords);
  CHECK(before.member_channels == after.member_channels);
  CHECK_THROWS_AS(geometry::group_local(cloud, nodes, 41), std::invalid_argument);
}

TEST_CASE("idw interpolation hand examples") {
  // Equidistant sources with features 0 and 2.
  std::vector<Point> src{{1, 0, 0}, {-1, 0, 0}};
  std::vector<Point> dst{{0, 0, 0}};
  std::vector<double> features{0, 2};
  std::vector<double> out = geometry::interpolate_idw(dst, src, features, 1, 2, 2.0);
  CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-12));

  // Distances 1 and 2, features 3 and 9, power 2 -> weights 0.8/0.2 ->
  // 0.8*3 + 0.2*9 = 4.2.
  src = {{1, 0, 0}, {2, 0, 0}};
  features = {3, 9};
  out = geometry::interpolate_idw(dst, src, features, 1, 2, 2.0);
  CHECK(out[0] == doctest::Approx(4.2).epsilon(1e-12));

  // Coincident destination copies the source verbatim.
  src = {{0, 0, 0}, {1, 0, 0}};
  features = {7, 9};
  out = geometry::interpolate_idw(dst, src, features, 1, 2, 2.0);
  CHECK(out[0] == 7.0);

  CHECK_THROWS_AS(geometry::interpolate_idw(dst, src, features, 1, 3, 2.0),
                  std::invalid_argument);
}

TEST_CASE("idw weights form a convex combination") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud src = random_cloud(12, rng);
    PointCloud dst = random_cloud(30, rng);
    geometry::IdwWeights w = geometry::idw_weights(dst.coords, src.coords, 3, 2.0);
    for (int i = 0; i < 30; ++i) {
      double sum = 0;
      for (int j = 0; j < 3; ++j) {
        double wj = w.weights[static_cast<std::size_t>(i) * 3 + j];
        CHECK(wj >= 0.0);
        sum += wj;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }

    std::vector<double> features(12);
    for (auto& f : features) f = rng.uniform(-5, 5);
    std::vector<double> out = geometry::interpolate_idw(dst.coords, src.coords, features, 1, 3, 2.0);
    for (int i = 0; i < 30; ++i) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int j = 0; j < 3; ++j) {
        double f = features[w.source_indices[static_cast<std::size_t>(i) * 3 + j]];
        lo = std::min(lo, f);
        hi = std::max(hi, f);
      }
      CHECK(out[i] >= lo - 1e-12);
      CHECK(out[i] <= hi + 1e-12);
    }
  }
}

TEST_CASE("idw interpolation is translation equivariant") {
  Rng rng(43);
  PointCloud src = random_cloud(10, rng);
  PointCloud dst = random_cloud(25, rng);
  std::vector<double> features(10 * 4);
  for (auto& f : features) f = rng.uniform(-2, 2);
  std::vector<double> base = geometry::interpolate_idw(dst.coords, src.coords, features, 4, 3, 2.0);

  auto shift = [](std::vector<Point> pts) {
    for (auto& p : pts) {
      p[0] += 2.5;
      p[1] -= 1.5;
      p[2] += 0.25;
    }
    return pts;
  };
  std::vector<double> moved = geometry::interpolate_idw(shift(dst.coords), shift(src.coords),
                                                        features, 4, 3, 2.0);
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(base[i] == doctest::Approx(moved[i]).epsilon(1e-12));
  }
}

TEST_CASE("idw interpolation matches the serial reference exactly") {
  Rng rng(47);
  for (int trial = 0; trial < 50; ++trial) {
    const int s = 4 + static_cast<int>(rng.uniform_index(60));
    const int d = 1 + static_cast<int>(rng.uniform_index(64));
    PointCloud src = random_cloud(s, rng);
    PointCloud dst = random_cloud(d, rng);
    const int f = 1 + static_cast<int>(rng.uniform_index(5));
    std::vector<double> features(static_cast<std::size_t>(s) * f);
    for (auto& v : features) v = rng.uniform(-3, 3);
    const int m = 1 + static_cast<int>(rng.uniform_index(std::min(s, 4)));
    CHECK(geometry::interpolate_idw(dst.coords, src.coords, features, f, m, 2.0) ==
          geometry::reference::interpolate_idw(dst.coords, src.coords, features, f, m, 2.0));
  }
}
