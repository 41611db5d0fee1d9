#include "agcn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace agcn::geometry {

namespace {

double dist2(const Point& a, const Point& b) {
  double dx = a[0] - b[0];
  double dy = a[1] - b[1];
  double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

void PointCloud::validate() const {
  if (coords.empty()) throw std::invalid_argument("PointCloud: N must be >= 1");
  for (const Point& p : coords) {
    for (double v : p) {
      if (!std::isfinite(v)) throw std::invalid_argument("PointCloud: non-finite coordinate");
    }
  }
  if (channel_count < 0) throw std::invalid_argument("PointCloud: negative channel count");
  if (channels.size() != static_cast<std::size_t>(size()) * channel_count) {
    throw std::invalid_argument("PointCloud: channels must have exactly N rows");
  }
  for (double v : channels) {
    if (!std::isfinite(v)) throw std::invalid_argument("PointCloud: non-finite channel value");
  }
  if (!labels.empty()) {
    if (labels.size() != coords.size()) {
      throw std::invalid_argument("PointCloud: labels must have exactly N entries");
    }
    for (int l : labels) {
      if (l < 0) throw std::invalid_argument("PointCloud: negative label");
    }
  }
}

NodeSet farthest_point_sample(const PointCloud& cloud, int m, int seed_index) {
  const int n = cloud.size();
  if (m < 1 || m > n) throw std::invalid_argument("farthest_point_sample: m out of range");
  if (seed_index < 0 || seed_index >= n) {
    throw std::invalid_argument("farthest_point_sample: seed_index out of range");
  }

  NodeSet out;
  out.indices.reserve(m);
  out.coords.reserve(m);

  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);

  int current = seed_index;
  for (int t = 0; t < m; ++t) {
    out.indices.push_back(current);
    out.coords.push_back(cloud.coords[current]);
    taken[current] = 1;
    if (t + 1 == m) break;

    const Point& c = cloud.coords[current];
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      double d = dist2(cloud.coords[i], c);
      if (d < min_d2[i]) min_d2[i] = d;
    }
    // Serial argmax with lowest-index tie break keeps the pick deterministic.
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (min_d2[i] > best_d) {
        best_d = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  return out;
}

int geometric_seed_index(const PointCloud& cloud) {
  int best = 0;
  for (int i = 1; i < cloud.size(); ++i) {
    if (cloud.coords[i] < cloud.coords[best]) best = i;
  }
  return best;
}

std::vector<int> knn_query(const std::vector<Point>& queries, const std::vector<Point>& references,
                           int k, bool exclude_self) {
  const int q = static_cast<int>(queries.size());
  const int r = static_cast<int>(references.size());
  const int available = exclude_self ? r - 1 : r;
  if (k < 1 || k > available) throw std::invalid_argument("knn_query: k out of range");
  if (exclude_self && q != r) {
    throw std::invalid_argument("knn_query: exclude_self requires queries == references");
  }

  std::vector<int> out(static_cast<std::size_t>(q) * k);
#pragma omp parallel for schedule(static)
  for (int qi = 0; qi < q; ++qi) {
    std::vector<std::pair<double, int>> cand;
    cand.reserve(r);
    for (int ri = 0; ri < r; ++ri) {
      if (exclude_self && ri == qi) continue;
      cand.emplace_back(dist2(queries[qi], references[ri]), ri);
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int j = 0; j < k; ++j) out[static_cast<std::size_t>(qi) * k + j] = cand[j].second;
  }
  return out;
}

KnnGraph knn_graph(const NodeSet& nodes, int k) {
  const int m = nodes.size();
  if (k < 1 || k >= m) throw std::invalid_argument("knn_graph: requires 1 <= k <= M-1");
  KnnGraph g;
  g.k = k;
  g.node_coords = nodes.coords;
  g.neighbor_indices = knn_query(nodes.coords, nodes.coords, k, /*exclude_self=*/true);
  return g;
}

LocalGroup group_local(const PointCloud& cloud, const NodeSet& nodes, int l) {
  const int n = cloud.size();
  const int m = nodes.size();
  if (l < 1 || l > n) throw std::invalid_argument("group_local: l out of range");

  LocalGroup g;
  g.l = l;
  g.channel_count = cloud.channel_count;
  g.member_indices = knn_query(nodes.coords, cloud.coords, l, /*exclude_self=*/false);
  g.normalized_coords.resize(static_cast<std::size_t>(m) * l * 3);
  if (cloud.has_channels()) {
    g.member_channels.resize(static_cast<std::size_t>(m) * l * cloud.channel_count);
  }

#pragma omp parallel for schedule(static)
  for (int j = 0; j < m; ++j) {
    for (int li = 0; li < l; ++li) {
      int idx = g.member_indices[static_cast<std::size_t>(j) * l + li];
      std::size_t base = (static_cast<std::size_t>(j) * l + li) * 3;
      for (int d = 0; d < 3; ++d) {
        g.normalized_coords[base + d] = cloud.coords[idx][d] - nodes.coords[j][d];
      }
      if (cloud.has_channels()) {
        std::size_t cbase = (static_cast<std::size_t>(j) * l + li) * cloud.channel_count;
        const double* row = cloud.channel_row(idx);
        for (int c = 0; c < cloud.channel_count; ++c) g.member_channels[cbase + c] = row[c];
      }
    }
  }
  return g;
}

IdwWeights idw_weights(const std::vector<Point>& dst_coords, const std::vector<Point>& src_coords,
                       int m, double power) {
  const int d = static_cast<int>(dst_coords.size());
  const int s = static_cast<int>(src_coords.size());
  if (m < 1 || m > s) throw std::invalid_argument("idw_weights: m out of range");

  IdwWeights w;
  w.m = m;
  w.source_indices = knn_query(dst_coords, src_coords, m, /*exclude_self=*/false);
  w.weights.assign(static_cast<std::size_t>(d) * m, 0.0);
  w.singular.assign(d, 0);

#pragma omp parallel for schedule(static)
  for (int di = 0; di < d; ++di) {
    const std::size_t base = static_cast<std::size_t>(di) * m;
    double nearest = std::sqrt(dist2(dst_coords[di], src_coords[w.source_indices[base]]));
    if (nearest < 1e-10) {
      w.singular[di] = 1;
      w.weights[base] = 1.0;
      continue;
    }
    double total = 0.0;
    for (int j = 0; j < m; ++j) {
      double dist = std::sqrt(dist2(dst_coords[di], src_coords[w.source_indices[base + j]]));
      double wij = 1.0 / std::pow(dist, power);
      w.weights[base + j] = wij;
      total += wij;
    }
    for (int j = 0; j < m; ++j) w.weights[base + j] /= total;
  }
  return w;
}

std::vector<double> interpolate_idw(const std::vector<Point>& dst_coords,
                                    const std::vector<Point>& src_coords,
                                    const std::vector<double>& src_features, int feature_width,
                                    int m, double power) {
  const int d = static_cast<int>(dst_coords.size());
  if (src_features.size() != src_coords.size() * static_cast<std::size_t>(feature_width)) {
    throw std::invalid_argument("interpolate_idw: feature array does not match S x F");
  }
  IdwWeights w = idw_weights(dst_coords, src_coords, m, power);

  std::vector<double> out(static_cast<std::size_t>(d) * feature_width, 0.0);
#pragma omp parallel for schedule(static)
  for (int di = 0; di < d; ++di) {
    const std::size_t base = static_cast<std::size_t>(di) * m;
    for (int j = 0; j < m; ++j) {
      double wij = w.weights[base + j];
      if (wij == 0.0) continue;
      const double* feat = src_features.data() + static_cast<std::size_t>(w.source_indices[base + j]) * feature_width;
      double* dst = out.data() + static_cast<std::size_t>(di) * feature_width;
      for (int f = 0; f < feature_width; ++f) dst[f] += wij * feat[f];
    }
  }
  return out;
}

namespace reference {

NodeSet farthest_point_sample(const PointCloud& cloud, int m, int seed_index) {
  const int n = cloud.size();
  if (m < 1 || m > n) throw std::invalid_argument("farthest_point_sample: m out of range");
  if (seed_index < 0 || seed_index >= n) {
    throw std::invalid_argument("farthest_point_sample: seed_index out of range");
  }
  NodeSet out;
  out.indices.push_back(seed_index);
  out.coords.push_back(cloud.coords[seed_index]);
  while (static_cast<int>(out.indices.size()) < m) {
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < n; ++i) {
      if (std::find(out.indices.begin(), out.indices.end(), i) != out.indices.end()) continue;
      double min_d = std::numeric_limits<double>::infinity();
      for (int s : out.indices) min_d = std::min(min_d, dist2(cloud.coords[i], cloud.coords[s]));
      if (min_d > best_d) {
        best_d = min_d;
        best = i;
      }
    }
    out.indices.push_back(best);
    out.coords.push_back(cloud.coords[best]);
  }
  return out;
}

std::vector<int> knn_query(const std::vector<Point>& queries, const std::vector<Point>& references,
                           int k, bool exclude_self) {
  const int q = static_cast<int>(queries.size());
  const int r = static_cast<int>(references.size());
  const int available = exclude_self ? r - 1 : r;
  if (k < 1 || k > available) throw std::invalid_argument("knn_query: k out of range");
  if (exclude_self && q != r) {
    throw std::invalid_argument("knn_query: exclude_self requires queries == references");
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(q) * k);
  for (int qi = 0; qi < q; ++qi) {
    std::vector<std::pair<double, int>> cand;
    for (int ri = 0; ri < r; ++ri) {
      if (exclude_self && ri == qi) continue;
      cand.emplace_back(dist2(queries[qi], references[ri]), ri);
    }
    std::sort(cand.begin(), cand.end());
    for (int j = 0; j < k; ++j) out.push_back(cand[j].second);
  }
  return out;
}

std::vector<double> interpolate_idw(const std::vector<Point>& dst_coords,
                                    const std::vector<Point>& src_coords,
                                    const std::vector<double>& src_features, int feature_width,
                                    int m, double power) {
  const int d = static_cast<int>(dst_coords.size());
  const int s = static_cast<int>(src_coords.size());
  if (m < 1 || m > s) throw std::invalid_argument("interpolate_idw: m out of range");
  std::vector<int> nn = knn_query(dst_coords, src_coords, m, false);
  std::vector<double> out(static_cast<std::size_t>(d) * feature_width, 0.0);
  for (int di = 0; di < d; ++di) {
    const int* idx = nn.data() + static_cast<std::size_t>(di) * m;
    double nearest = std::sqrt(dist2(dst_coords[di], src_coords[idx[0]]));
    double* dst = out.data() + static_cast<std::size_t>(di) * feature_width;
    if (nearest < 1e-10) {
      const double* feat = src_features.data() + static_cast<std::size_t>(idx[0]) * feature_width;
      std::copy(feat, feat + feature_width, dst);
      continue;
    }
    std::vector<double> w(m);
    double total = 0.0;
    for (int j = 0; j < m; ++j) {
      double dist = std::sqrt(dist2(dst_coords[di], src_coords[idx[j]]));
      w[j] = 1.0 / std::pow(dist, power);
      total += w[j];
    }
    for (int j = 0; j < m; ++j) {
      const double* feat = src_features.data() + static_cast<std::size_t>(idx[j]) * feature_width;
      for (int f = 0; f < feature_width; ++f) dst[f] += (w[j] / total) * feat[f];
    }
  }
  return out;
}

}  // namespace reference

}  // namespace agcn::geometry
