#pragma once

// Attention-layer scaling benchmark: neighbor-restricted attention against a
// dense all-pairs variant at equal feature widths, timed over fixed graphs
// so graph construction cost never pollutes the layer measurement.

#include <chrono>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "agcn/common.hpp"
#include "agcn/geometry.hpp"
#include "agcn/model.hpp"
#include "agcn/tensor.hpp"

namespace agcn::bench {

struct BenchRow {
  int m = 0;
  std::string variant;  // knn | dense
  std::string phase;    // forward | forward_backward
  int k = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
};

inline geometry::KnnGraph random_graph(int m, int k, Rng& rng) {
  geometry::NodeSet nodes;
  for (int i = 0; i < m; ++i) {
    nodes.indices.push_back(i);
    nodes.coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  }
  return geometry::knn_graph(nodes, k);
}

template <class Fn>
std::pair<double, double> time_ms(Fn&& fn, int warmups, int reps) {
  for (int i = 0; i < warmups; ++i) fn();
  std::vector<double> samples;
  samples.reserve(reps);
  for (int i = 0; i < reps; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= samples.size();
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= samples.size();
  return {mean, std::sqrt(var)};
}

// One attention layer (scores + weighted aggregation) on an M-node graph
// with feature width d; the dense variant uses k = M - 1.
inline std::vector<BenchRow> attention_bench(const std::vector<int>& m_values, int knn_k, int d,
                                             int warmups = 3, int reps = 20,
                                             std::uint64_t seed = 7) {
  std::vector<BenchRow> rows;
  for (int m : m_values) {
    Rng rng(hash_name("bench." + std::to_string(m), seed));
    std::vector<double> vals(static_cast<std::size_t>(m) * d);
    for (double& v : vals) v = rng.uniform(-1.0, 1.0);
    diff::Tensor<double> f = diff::Tensor<double>::from({m, d}, vals);

    for (const char* variant : {"knn", "dense"}) {
      const int k = std::string(variant) == "knn" ? knn_k : m - 1;
      geometry::KnnGraph graph = random_graph(m, k, rng);

      volatile double sink = 0.0;
      auto [fmean, fstd] = time_ms(
          [&]() {
            std::vector<double> scores = model::attention_scores(f, graph);
            std::vector<double> out = model::attention_aggregate(f, scores, graph);
            sink = sink + out[0];
          },
          warmups, reps);
      rows.push_back({m, variant, "forward", k, fmean, fstd});

      auto [bmean, bstd] = time_ms(
          [&]() {
            diff::Tape<double> tape;
            diff::Tensor<double> fin = diff::Tensor<double>::from(f.shape(), f.values());
            diff::Tensor<double> y = model::point_attention_aggregate(tape, fin, graph, false);
            double total = 0.0;
            for (double v : y.values()) total += v;
            diff::Tensor<double> loss = diff::Tensor<double>::from({1}, {total});
            std::fill(y.grad(), y.grad() + y.size(), 1.0);
            tape.run_backward();
            sink = sink + fin.grad()[0];
          },
          warmups, reps);
      rows.push_back({m, variant, "forward_backward", k, bmean, bstd});
    }
  }
  return rows;
}

inline void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_bench_csv: cannot open " + path);
  out << "m,variant,phase,k,mean_ms,std_ms\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.m << "," << r.variant << "," << r.phase << "," << r.k << "," << r.mean_ms << ","
        << r.std_ms << "\n";
  }
}

// Least-squares slope of log(mean_ms) against log(m) for one variant/phase.
inline double loglog_slope(const std::vector<BenchRow>& rows, const std::string& variant,
                           const std::string& phase) {
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    if (r.variant == variant && r.phase == phase) {
      xs.push_back(std::log(static_cast<double>(r.m)));
      ys.push_back(std::log(r.mean_ms));
    }
  }
  if (xs.size() < 2) throw std::invalid_argument("loglog_slope: not enough rows");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  return num / den;
}

}  // namespace agcn::bench
