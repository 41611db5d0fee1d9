// Times the parallel geometry kernels against their serial reference
// implementations and verifies that both sides agree exactly.

#include <chrono>
#include <cstdio>
#include <vector>

#include "agcn/common.hpp"
#include "agcn/geometry.hpp"

using namespace agcn;

namespace {

geometry::PointCloud random_cloud(int n, Rng& rng) {
  geometry::PointCloud cloud;
  for (int i = 0; i < n; ++i) {
    cloud.coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  }
  return cloud;
}

template <class Fn>
double time_ms(Fn&& fn, int reps) {
  fn();  // warmup
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
  std::printf("kernel,n,parallel_ms,reference_ms,match\n");
  for (int n : {1024, 4096, 16384}) {
    Rng rng(42 + n);
    geometry::PointCloud cloud = random_cloud(n, rng);
    const int m = n / 8;
    const int k = 8;

    geometry::NodeSet par_nodes, ref_nodes;
    double fps_par = time_ms([&] { par_nodes = geometry::farthest_point_sample(cloud, m, 0); }, 3);
    double fps_ref =
        time_ms([&] { ref_nodes = geometry::reference::farthest_point_sample(cloud, m, 0); }, 3);
    std::printf("fps,%d,%.3f,%.3f,%d\n", n, fps_par, fps_ref,
                par_nodes.indices == ref_nodes.indices);

    std::vector<int> par_knn, ref_knn;
    double knn_par = time_ms(
        [&] { par_knn = geometry::knn_query(par_nodes.coords, cloud.coords, k, false); }, 3);
    double knn_ref = time_ms(
        [&] { ref_knn = geometry::reference::knn_query(par_nodes.coords, cloud.coords, k, false); },
        3);
    std::printf("knn,%d,%.3f,%.3f,%d\n", n, knn_par, knn_ref, par_knn == ref_knn);

    const int f = 16;
    std::vector<double> features(static_cast<std::size_t>(m) * f);
    for (double& v : features) v = rng.uniform(-1, 1);
    std::vector<double> par_idw, ref_idw;
    double idw_par = time_ms(
        [&] {
          par_idw = geometry::interpolate_idw(cloud.coords, par_nodes.coords, features, f, 3, 2.0);
        },
        3);
    double idw_ref = time_ms(
        [&] {
          ref_idw = geometry::reference::interpolate_idw(cloud.coords, par_nodes.coords, features,
                                                         f, 3, 2.0);
        },
        3);
    std::printf("idw,%d,%.3f,%.3f,%d\n", n, idw_par, idw_ref, par_idw == ref_idw);
  }
  return 0;
}
