#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include "agcn/training.hpp"
#include "doctest.h"

using namespace agcn;
using training::TrainConfig;

namespace {

geometry::PointCloud random_cloud(int n, Rng& rng, int channels = 0) {
  geometry::PointCloud cloud;
  cloud.channel_count = channels;
  for (int i = 0; i < n; ++i) {
    cloud.coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    for (int c = 0; c < channels; ++c) cloud.channels.push_back(rng.uniform(-1, 1));
  }
  return cloud;
}

// Two linearly separable blobs: class 0 hugs the origin, class 1 sits on a
// larger shell. Small enough for fast end-to-end fits.
dataio::Dataset blob_dataset(int per_class, int points, std::uint64_t seed,
                             const std::string& split) {
  dataio::Dataset ds;
  ds.category_names = {"small", "large"};
  Rng rng(seed);
  for (int cls = 0; cls < 2; ++cls) {
    for (int i = 0; i < per_class; ++i) {
      dataio::Sample s;
      s.category = cls;
      s.split = split;
      s.cloud.channel_count = 0;
      const double r = cls == 0 ? 0.3 : 1.0;
      for (int p = 0; p < points; ++p) {
        double x = rng.gaussian(1.0), y = rng.gaussian(1.0), z = rng.gaussian(1.0);
        double norm = std::sqrt(x * x + y * y + z * z) + 1e-9;
        s.cloud.coords.push_back({r * x / norm, r * y / norm, r * z / norm});
      }
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

// The blob classes differ only by scale; per-sample normalization removes
// exactly that cue, so the learning smokes run without it.
model::ModelConfig blob_model_config(bool with_norm = false) {
  model::ModelConfig c;
  c.use_batchnorm = with_norm;
  c.init_range = 0.5;  // small widths; tiny init starves the no-norm path
  c.in_channels = 0;
  c.m_nodes = 8;
  c.l_group = 4;
  c.k_neighbors = 3;
  c.local_mlp_widths = {8, 8, 8};
  c.attention_layers = 2;
  c.attention_transform_widths = {{8, 8}, {8, 16}};
  c.global_graph_mlp_widths = {6, 8};
  c.head_widths = {16, 2};
  c.num_classes = 2;
  c.dropout = 0.0;
  return c;
}

}  // namespace

TEST_CASE("train config validation and file loading") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.lr_decay = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.jitter_sigma = -0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.precision = 16;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "train_cfg_test.txt").string();
  std::ofstream(path) << "epochs=12\nbatch_size=4\nlr0=0.01\nlr_decay=0.5\nlr_step=3\n"
                         "rotate_z=false\njitter_sigma=0\nsubsample_min=64\nrng_seed=9\n"
                         "precision=32\n";
  TrainConfig loaded = TrainConfig::load(path);
  CHECK(loaded.epochs == 12);
  CHECK(loaded.batch_size == 4);
  CHECK(loaded.lr0 == 0.01);
  CHECK(loaded.lr_decay == 0.5);
  CHECK(loaded.lr_step == 3);
  CHECK(loaded.rotate_z == false);
  CHECK(loaded.jitter_sigma == 0.0);
  CHECK(loaded.subsample_min == 64);
  CHECK(loaded.rng_seed == 9);
  CHECK(loaded.precision == 32);
  fs::remove(path);
}

TEST_CASE("learning rate schedule") {
  TrainConfig c;  // lr0=1e-3, decay 0.7 every 20 epochs
  CHECK(training::lr_at(0, c) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(training::lr_at(19, c) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(training::lr_at(20, c) == doctest::Approx(7e-4).epsilon(1e-12));
  CHECK(training::lr_at(40, c) == doctest::Approx(4.9e-4).epsilon(1e-12));
}

TEST_CASE("augment with everything disabled is the identity") {
  TrainConfig c;
  c.rotate_z = false;
  c.jitter_sigma = 0.0;
  Rng rng(1);
  geometry::PointCloud cloud = random_cloud(20, rng, 3);
  geometry::PointCloud out = training::augment(cloud, c, rng);
  CHECK(out.coords == cloud.coords);
  CHECK(out.channels == cloud.channels);
}

TEST_CASE("rotation preserves z, xy radius, and coordinate-normal alignment") {
  TrainConfig c;
  c.rotate_z = true;
  c.jitter_sigma = 0.0;
  Rng rng(2);
  geometry::PointCloud cloud = random_cloud(50, rng, 3);
  geometry::PointCloud out = training::augment(cloud, c, rng);
  for (int i = 0; i < 50; ++i) {
    CHECK(out.coords[i][2] == doctest::Approx(cloud.coords[i][2]).epsilon(1e-12));
    double r0 = std::hypot(cloud.coords[i][0], cloud.coords[i][1]);
    double r1 = std::hypot(out.coords[i][0], out.coords[i][1]);
    CHECK(r1 == doctest::Approx(r0).epsilon(1e-12));
    // normals rotate with the coordinates, so the dot product is preserved
    const double* n0 = cloud.channel_row(i);
    const double* n1 = out.channel_row(i);
    CHECK(n1[2] == doctest::Approx(n0[2]).epsilon(1e-12));
    double d0 = cloud.coords[i][0] * n0[0] + cloud.coords[i][1] * n0[1];
    double d1 = out.coords[i][0] * n1[0] + out.coords[i][1] * n1[1];
    CHECK(d1 == doctest::Approx(d0).epsilon(1e-10));
  }
}

TEST_CASE("a half-turn rotation maps (1,0,0) to (-1,0,0)") {
  // The angle itself is drawn from the rng; find a seed whose first draw is
  // close to pi is fragile, so verify the rotation matrix directly through
  // the public path: two opposite points must stay opposite.
  TrainConfig c;
  c.rotate_z = true;
  c.jitter_sigma = 0.0;
  geometry::PointCloud cloud;
  cloud.coords = {{1, 0, 0}, {-1, 0, 0}};
  Rng rng(3);
  geometry::PointCloud out = training::augment(cloud, c, rng);
  CHECK(out.coords[0][0] == doctest::Approx(-out.coords[1][0]).epsilon(1e-12));
  CHECK(out.coords[0][1] == doctest::Approx(-out.coords[1][1]).epsilon(1e-12));
  CHECK(out.coords[0][2] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::hypot(out.coords[0][0], out.coords[0][1]) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("jitter statistics match the configured sigma") {
  TrainConfig c;
  c.rotate_z = false;
  c.jitter_sigma = 0.02;
  geometry::PointCloud cloud;
  const int n = 40000;
  for (int i = 0; i < n; ++i) cloud.coords.push_back({0, 0, 0});
  Rng rng(4);
  geometry::PointCloud out = training::augment(cloud, c, rng);
  double sum = 0, sq = 0;
  for (const auto& p : out.coords) {
    for (double v : p) {
      sum += v;
      sq += v * v;
    }
  }
  const double mean = sum / (3.0 * n);
  const double stddev = std::sqrt(sq / (3.0 * n) - mean * mean);
  CHECK(std::abs(mean) < 5e-4);
  CHECK(stddev == doctest::Approx(0.02).epsilon(0.02));
}

TEST_CASE("jitter clipping bounds every perturbation") {
  TrainConfig c;
  c.rotate_z = false;
  c.jitter_sigma = 0.5;
  c.jitter_clip = 0.1;
  geometry::PointCloud cloud;
  for (int i = 0; i < 5000; ++i) cloud.coords.push_back({0, 0, 0});
  Rng rng(5);
  geometry::PointCloud out = training::augment(cloud, c, rng);
  for (const auto& p : out.coords) {
    for (double v : p) CHECK(std::abs(v) <= 0.1 + 1e-15);
  }
}

TEST_CASE("resample keeps channels and labels aligned") {
  Rng rng(6);
  geometry::PointCloud cloud = random_cloud(30, rng, 2);
  for (int i = 0; i < 30; ++i) cloud.labels.push_back(i % 3);
  Rng rng2(7);
  geometry::PointCloud out = training::resample_cloud(cloud, 12, rng2);
  CHECK(out.size() == 12);
  CHECK(out.labels.size() == 12);
  for (int i = 0; i < 12; ++i) {
    // locate the source point and confirm channels/labels came along
    auto it = std::find(cloud.coords.begin(), cloud.coords.end(), out.coords[i]);
    REQUIRE(it != cloud.coords.end());
    int src = static_cast<int>(it - cloud.coords.begin());
    CHECK(out.channel_row(i)[0] == cloud.channel_row(src)[0]);
    CHECK(out.channel_row(i)[1] == cloud.channel_row(src)[1]);
    CHECK(out.labels[i] == cloud.labels[src]);
  }
  // no point selected twice
  for (int i = 0; i < 12; ++i) {
    for (int j = i + 1; j < 12; ++j) CHECK(out.coords[i] != out.coords[j]);
  }
  CHECK_THROWS_AS(training::resample_cloud(cloud, 0, rng2), std::invalid_argument);
  CHECK_THROWS_AS(training::resample_cloud(cloud, 31, rng2), std::invalid_argument);
}

TEST_CASE("subsample augmentation draws counts in [min, N] and is off by default") {
  Rng rng(8);
  geometry::PointCloud cloud = random_cloud(40, rng, 1);
  training::TrainConfig cfg;
  cfg.rotate_z = false;
  cfg.jitter_sigma = 0.0;

  Rng a(9);
  CHECK(training::augment(cloud, cfg, a).size() == 40);  // disabled

  cfg.subsample_min = 10;
  int smallest = 40, largest = 0;
  for (int trial = 0; trial < 200; ++trial) {
    geometry::PointCloud out = training::augment(cloud, cfg, a);
    REQUIRE(out.size() >= 10);
    REQUIRE(out.size() <= 40);
    smallest = std::min(smallest, out.size());
    largest = std::max(largest, out.size());
    // surviving points are untouched copies
    auto it = std::find(cloud.coords.begin(), cloud.coords.end(), out.coords[0]);
    REQUIRE(it != cloud.coords.end());
  }
  CHECK(smallest < 20);
  CHECK(largest > 30);

  cfg.subsample_min = 40;  // min == N: nothing to drop
  CHECK(training::augment(cloud, cfg, a).size() == 40);
  cfg.subsample_min = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("classification metrics hand examples") {
  // perfect predictions
  training::Metrics m = training::evaluate_classification({0, 1, 2}, {0, 1, 2}, 3);
  CHECK(m.overall_accuracy == 1.0);
  CHECK(m.avg_class_accuracy == 1.0);

  // balanced, recalls 1.0 and 0.0
  m = training::evaluate_classification({0, 0, 0, 0}, {0, 0, 1, 1}, 2);
  CHECK(m.overall_accuracy == doctest::Approx(0.5));
  CHECK(m.avg_class_accuracy == doctest::Approx(0.5));

  // 90/10 imbalance, recalls 1.0 and 0.0
  std::vector<int> labels(10, 0), preds(10, 0);
  labels[9] = 1;
  m = training::evaluate_classification(preds, labels, 2);
  CHECK(m.overall_accuracy == doctest::Approx(0.9));
  CHECK(m.avg_class_accuracy == doctest::Approx(0.5));

  // absent class excluded from the average
  m = training::evaluate_classification({0, 1}, {0, 1}, 5);
  CHECK(m.avg_class_accuracy == doctest::Approx(1.0));

  CHECK_THROWS_AS(training::evaluate_classification({0}, {0, 1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(training::evaluate_classification({0, 0}, {0, 7}, 2), std::invalid_argument);
}

TEST_CASE("segmentation metrics hand examples") {
  std::map<int, std::vector<int>> parts{{0, {0, 1}}};

  // perfect predictions
  training::Metrics m =
      training::evaluate_segmentation({{0, 0, 1, 1}}, {{0, 0, 1, 1}}, {0}, parts);
  CHECK(m.instance_miou == 1.0);
  CHECK(m.category_miou == 1.0);
  CHECK(m.per_class_iou.at(0) == 1.0);
  CHECK(m.per_class_iou.at(1) == 1.0);

  // swapped labels -> IoU 0
  m = training::evaluate_segmentation({{1, 1, 0, 0}}, {{0, 0, 1, 1}}, {0}, parts);
  CHECK(m.instance_miou == 0.0);

  // 60/40 split predicted all part 0 -> (0.6 + 0.0)/2 = 0.3
  std::vector<int> truth(100, 0), pred(100, 0);
  for (int i = 60; i < 100; ++i) truth[i] = 1;
  m = training::evaluate_segmentation({pred}, {truth}, {0}, parts);
  CHECK(m.instance_miou == doctest::Approx(0.3));
  CHECK(m.per_class_iou.at(0) == doctest::Approx(0.6));
  CHECK(m.per_class_iou.at(1) == doctest::Approx(0.0));
  CHECK(m.overall_accuracy == doctest::Approx(0.6));

  // part absent from both prediction and truth counts as IoU 1
  std::map<int, std::vector<int>> parts3{{0, {0, 1, 2}}};
  m = training::evaluate_segmentation({{0, 0, 1, 1}}, {{0, 0, 1, 1}}, {0}, parts3);
  CHECK(m.instance_miou == 1.0);
  CHECK(m.per_class_iou.at(2) == 1.0);

  // two categories -> category mIoU averages per-category means
  std::map<int, std::vector<int>> parts2{{0, {0, 1}}, {1, {2, 3}}};
  m = training::evaluate_segmentation({{0, 0, 1, 1}, {2, 2, 3, 3}, {2, 2, 2, 2}},
                                      {{0, 0, 1, 1}, {2, 2, 3, 3}, {2, 2, 3, 3}}, {0, 1, 1},
                                      parts2);
  // cat 0: shape IoU 1.0; cat 1: shapes 1.0 and (0.5 + 0)/2 = 0.25 -> mean 0.625
  CHECK(m.instance_miou == doctest::Approx((1.0 + 1.0 + 0.25) / 3));
  CHECK(m.category_miou == doctest::Approx((1.0 + 0.625) / 2));

  CHECK_THROWS_AS(training::evaluate_segmentation({{0}}, {{0}}, {9}, parts),
                  std::invalid_argument);
  CHECK_THROWS_AS(training::evaluate_segmentation({{0, 0}}, {{0}}, {0}, parts),
                  std::invalid_argument);
}

TEST_CASE("metrics are invariant to sample order") {
  Rng rng(8);
  std::vector<int> labels, preds;
  for (int i = 0; i < 60; ++i) {
    labels.push_back(static_cast<int>(rng.uniform_index(4)));
    preds.push_back(static_cast<int>(rng.uniform_index(4)));
  }
  training::Metrics a = training::evaluate_classification(preds, labels, 4);
  std::vector<int> labels_r(labels.rbegin(), labels.rend());
  std::vector<int> preds_r(preds.rbegin(), preds.rend());
  training::Metrics b = training::evaluate_classification(preds_r, labels_r, 4);
  CHECK(a.overall_accuracy == b.overall_accuracy);
  CHECK(a.avg_class_accuracy == b.avg_class_accuracy);
}

TEST_CASE("fit is deterministic, logs the schedule, and rejects empty data") {
  dataio::Dataset train = blob_dataset(6, 16, 21, "train");
  dataio::Dataset val = blob_dataset(2, 16, 22, "val");
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.lr0 = 5e-3;
  tc.lr_step = 2;
  tc.jitter_sigma = 0.01;
  tc.rng_seed = 5;

  auto run = [&]() {
    model::Model<double> net(blob_model_config(/*with_norm=*/true));
    net.init_params(77);
    return training::fit(net, train, val, tc);
  };
  training::FitResult a = run();
  training::FitResult b = run();
  REQUIRE(a.loss_curve.size() == 3);
  CHECK(a.loss_curve == b.loss_curve);  // bitwise determinism
  for (int e = 0; e < 3; ++e) {
    CHECK(a.history[e].lr == training::lr_at(e, tc));
    CHECK(std::isfinite(a.history[e].train_loss));
  }
  CHECK(a.best_epoch >= 0);
  CHECK(a.best_score >= 0.0);

  dataio::Dataset empty;
  model::Model<double> net(blob_model_config());
  net.init_params(77);
  CHECK_THROWS_AS(training::fit(net, empty, val, tc), std::invalid_argument);
  CHECK_THROWS_AS(training::fit(net, train, empty, tc), std::invalid_argument);
}

TEST_CASE("fit learns a separable problem and writes artifacts") {
  namespace fs = std::filesystem;
  dataio::Dataset train = blob_dataset(10, 20, 31, "train");
  dataio::Dataset val = blob_dataset(4, 20, 32, "val");
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 5;
  tc.lr0 = 5e-3;
  tc.lr_step = 15;
  tc.rotate_z = true;
  tc.jitter_sigma = 0.01;
  tc.rng_seed = 6;

  const std::string out_dir = (fs::temp_directory_path() / "fit_smoke_test").string();
  fs::create_directories(out_dir);
  model::Model<double> net(blob_model_config());
  net.init_params(55);
  training::FitResult r = training::fit(net, train, val, tc, out_dir);

  CHECK(r.best_score >= 0.75);  // two well-separated blobs
  CHECK(fs::exists(out_dir + "/best.ckpt"));
  CHECK(fs::exists(out_dir + "/last.ckpt"));
  CHECK(fs::exists(out_dir + "/metrics.csv"));
  std::ifstream csv(out_dir + "/metrics.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "epoch,lr,train_loss,val_overall,val_avg_class,val_instance_miou,val_category_miou");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) rows += !line.empty();
  CHECK(rows == 30);

  // The best checkpoint reloads and reproduces the best validation score.
  model::Model<double> reloaded(blob_model_config());
  reloaded.init_params(1, 0.05);
  diff::load_checkpoint(reloaded.params(), out_dir + "/best.ckpt");
  training::Metrics again = training::evaluate_model(reloaded, val);
  CHECK(again.overall_accuracy == doctest::Approx(r.best_score).epsilon(1e-12));
  fs::remove_all(out_dir);
}

TEST_CASE("fit trains a segmentation model end to end") {
  // Two labeled half-spaces: points with z > 0 are part 1.
  dataio::Dataset train, val;
  train.part_sets[0] = {0, 1};
  val.part_sets[0] = {0, 1};
  auto make = [&](std::uint64_t seed, int count, dataio::Dataset& ds, const char* split) {
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
      dataio::Sample s;
      s.category = 0;
      s.split = split;
      for (int p = 0; p < 24; ++p) {
        double z = rng.uniform(-1, 1);
        s.cloud.coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), z});
        s.cloud.labels.push_back(z > 0 ? 1 : 0);
      }
      ds.samples.push_back(std::move(s));
    }
  };
  make(41, 8, train, "train");
  make(42, 3, val, "val");

  model::ModelConfig mc = blob_model_config();
  mc.mode = model::TaskMode::segment;
  mc.decoder_transform_widths = {{8, 8}, {8, 8}};
  mc.head_widths = {8, 2};
  TrainConfig tc;
  tc.epochs = 25;
  tc.batch_size = 4;
  tc.lr0 = 1e-2;
  tc.lr_step = 15;
  tc.rotate_z = false;
  tc.jitter_sigma = 0.0;
  tc.rng_seed = 7;

  model::Model<double> net(mc);
  net.init_params(99);
  training::FitResult r = training::fit(net, train, val, tc);
  REQUIRE(r.history.size() == 25);
  CHECK(r.best_score > 0.5);  // instance mIoU above the label-swap floor
  CHECK(r.loss_curve.front() > r.loss_curve.back());
}
