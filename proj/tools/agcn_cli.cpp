// Command-line driver: training, evaluation, gradient verification,
// benchmarking, synthetic data generation, and activation inspection.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "agcn/bench.hpp"
#include "agcn/common.hpp"
#include "agcn/dataio.hpp"
#include "agcn/diffcore.hpp"
#include "agcn/model.hpp"
#include "agcn/training.hpp"

namespace fs = std::filesystem;
using namespace agcn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string model_config;
  std::string train_config;
  std::string manifest;
  std::string out = ".";
  std::string checkpoint;
  std::string cloud;
  std::string spec;
  std::string split = "val";
  std::string format = "binary";
  std::uint64_t seed = 1;
  int precision = 64;
  int threads = 0;
  int ablate_seeds = 1;
  bool sabotage = false;  // negative-control fixture for gradcheck
};

void apply_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

dataio::Dataset require_dataset(const Options& opt) {
  if (opt.manifest.empty()) throw std::invalid_argument("--manifest is required");
  return dataio::load_dataset(opt.manifest);
}

model::ModelConfig require_model_config(const Options& opt) {
  if (opt.model_config.empty()) throw std::invalid_argument("--model-config is required");
  return model::ModelConfig::load(opt.model_config);
}

template <class Real>
int run_train(const Options& opt) {
  model::ModelConfig mc = require_model_config(opt);
  training::TrainConfig tc = opt.train_config.empty()
                                 ? training::TrainConfig{}
                                 : training::TrainConfig::load(opt.train_config);
  tc.rng_seed = opt.seed;
  dataio::Dataset data = require_dataset(opt);
  dataio::Dataset train = data.split("train");
  dataio::Dataset val = data.split("val");
  fs::create_directories(opt.out);

  model::Model<Real> net(mc);
  net.init_params(opt.seed);
  if (!opt.checkpoint.empty()) diff::load_checkpoint(net.params(), opt.checkpoint);

  training::FitResult result = training::fit(net, train, val, tc, opt.out);
  std::printf("best_epoch %d best_score %.6f\n", result.best_epoch, result.best_score);
  std::printf("metrics %s/metrics.csv\n", opt.out.c_str());
  if (mc.mode == model::TaskMode::segment) {
    training::write_per_class_iou_csv(opt.out + "/per_class_iou.csv",
                                      result.best_val_metrics.per_class_iou);
  }
  return kExitOk;
}

template <class Real>
int run_eval(const Options& opt) {
  model::ModelConfig mc = require_model_config(opt);
  if (opt.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
  dataio::Dataset data = require_dataset(opt);
  dataio::Dataset subset = data.split(opt.split);
  if (subset.size() == 0) {
    std::fprintf(stderr, "error: split '%s' is empty in %s\n", opt.split.c_str(),
                 opt.manifest.c_str());
    return kExitCheckFailed;
  }
  model::Model<Real> net(mc);
  net.init_params(opt.seed);
  diff::load_checkpoint(net.params(), opt.checkpoint);

  training::Metrics m = training::evaluate_model(net, subset);
  std::printf("overall %.6f avg_class %.6f instance_miou %.6f category_miou %.6f\n",
              m.overall_accuracy, m.avg_class_accuracy, m.instance_miou, m.category_miou);
  fs::create_directories(opt.out);
  std::ofstream csv(opt.out + "/eval_metrics.csv");
  csv << "overall,avg_class,instance_miou,category_miou\n";
  csv.precision(17);
  csv << m.overall_accuracy << "," << m.avg_class_accuracy << "," << m.instance_miou << ","
      << m.category_miou << "\n";
  if (mc.mode == model::TaskMode::segment) {
    training::write_per_class_iou_csv(opt.out + "/per_class_iou.csv", m.per_class_iou);
  }
  return kExitOk;
}

// Tiny configurations sized so finite differences stay fast.
model::ModelConfig tiny_classify_config() {
  model::ModelConfig c;
  c.in_channels = 3;
  c.m_nodes = 8;
  c.l_group = 4;
  c.k_neighbors = 3;
  c.local_mlp_widths = {6, 6, 8};
  c.attention_layers = 2;
  c.attention_transform_widths = {{8, 8}, {8, 10}};
  c.global_graph_mlp_widths = {5, 6};
  c.head_widths = {8, 3};
  c.num_classes = 3;
  c.dropout = 0.0;
  c.mode = model::TaskMode::classify;
  return c;
}

model::ModelConfig tiny_segment_config() {
  model::ModelConfig c = tiny_classify_config();
  c.mode = model::TaskMode::segment;
  c.decoder_transform_widths = {{8, 8}, {8, 6}};
  c.head_widths = {8, 3};
  c.idw_m = 3;
  return c;
}

geometry::PointCloud random_cloud(int n, int channels, std::uint64_t seed, int num_labels) {
  Rng rng(seed);
  geometry::PointCloud cloud;
  cloud.channel_count = channels;
  for (int i = 0; i < n; ++i) {
    cloud.coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    for (int c = 0; c < channels; ++c) cloud.channels.push_back(rng.uniform(-1, 1));
    if (num_labels > 0) {
      cloud.labels.push_back(static_cast<int>(rng.uniform_index(num_labels)));
    }
  }
  return cloud;
}

int run_gradcheck(const Options& opt) {
  const double tol = 1e-4;
  bool all_ok = true;
  for (const char* which : {"classify", "segment"}) {
    const bool classify = std::string(which) == "classify";
    model::ModelConfig mc = classify ? tiny_classify_config() : tiny_segment_config();
    model::Model<double> net(mc);
    // Larger-than-training init keeps activations away from dead ReLUs and
    // near-zero attention denominators where finite differences degrade.
    net.init_params(opt.seed, 0.5);
    net.set_corrupt_attention_backward(opt.sabotage);
    geometry::PointCloud cloud = random_cloud(24, 3, opt.seed + 11, classify ? 0 : mc.num_classes);
    int target = 1;

    auto loss_fn = [&](bool with_grad) {
      diff::Tape<double> tape;
      diff::Tensor<double> logits;
      if (classify) {
        logits = net.classify_forward(tape, cloud, /*train=*/false);
      } else {
        logits = net.segment_forward(tape, cloud, /*train=*/false);
      }
      diff::Tensor<double> loss = diff::softmax_cross_entropy(
          tape, logits, classify ? std::vector<int>{target} : cloud.labels);
      if (with_grad) tape.backward(loss);
      return loss.data()[0];
    };

    diff::GradCheckReport report =
        diff::gradient_check<double>(net.params(), std::function<double(bool)>(loss_fn));
    for (const auto& e : report.entries) {
      std::printf("%s %-28s max_rel_err %.3e (%ld elems)\n", which, e.name.c_str(), e.max_rel_err,
                  e.elements_checked);
    }
    std::printf("%s overall max_rel_err %.3e\n", which, report.max_rel_err);
    all_ok = all_ok && report.all_below(tol);
  }
  std::printf("gradcheck %s\n", all_ok ? "PASS" : "FAIL");
  return all_ok ? kExitOk : kExitCheckFailed;
}

int run_bench(const Options& opt) {
  fs::create_directories(opt.out);
  std::vector<bench::BenchRow> rows = bench::attention_bench({64, 128, 256, 512, 1024}, 8, 64);
  std::string path = opt.out + "/bench.csv";
  bench::write_bench_csv(path, rows);
  double knn_slope = bench::loglog_slope(rows, "knn", "forward");
  double dense_slope = bench::loglog_slope(rows, "dense", "forward");
  std::printf("knn_slope %.3f dense_slope %.3f csv %s\n", knn_slope, dense_slope, path.c_str());
  return kExitOk;
}

int run_synth(const Options& opt) {
  if (opt.spec.empty()) throw std::invalid_argument("--spec is required");
  dataio::Dataset ds = dataio::synth_from_spec_file(opt.spec);
  dataio::CloudFormat fmt =
      opt.format == "text" ? dataio::CloudFormat::text : dataio::CloudFormat::binary;
  std::string manifest = dataio::write_dataset(ds, opt.out, fmt);
  std::printf("wrote %d clouds, manifest %s\n", ds.size(), manifest.c_str());
  return kExitOk;
}

template <class Real>
int run_inspect(const Options& opt) {
  model::ModelConfig mc = require_model_config(opt);
  if (opt.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
  if (opt.cloud.empty()) throw std::invalid_argument("--cloud is required");
  dataio::CloudFormat fmt = fs::path(opt.cloud).extension() == ".apt" ? dataio::CloudFormat::text
                                                                      : dataio::CloudFormat::binary;
  geometry::PointCloud cloud = dataio::load_point_cloud(opt.cloud, fmt);
  model::Model<Real> net(mc);
  net.init_params(opt.seed);
  diff::load_checkpoint(net.params(), opt.checkpoint);

  diff::Tape<Real> tape;
  typename model::Model<Real>::Activations acts;
  net.encode(tape, cloud, /*train=*/false, &acts);

  fs::create_directories(opt.out);
  {
    std::ofstream out(opt.out + "/nodes.csv");
    out << "node,point_index,x,y,z\n";
    out.precision(17);
    for (int j = 0; j < acts.nodes.size(); ++j) {
      out << j << "," << acts.nodes.indices[j] << "," << acts.nodes.coords[j][0] << ","
          << acts.nodes.coords[j][1] << "," << acts.nodes.coords[j][2] << "\n";
    }
  }
  {
    std::ofstream out(opt.out + "/adjacency.csv");
    out << "node";
    for (int i = 0; i < acts.graph.k; ++i) out << ",n" << i;
    out << "\n";
    for (int j = 0; j < acts.graph.node_count(); ++j) {
      out << j;
      for (int i = 0; i < acts.graph.k; ++i) out << "," << acts.graph.row(j)[i];
      out << "\n";
    }
  }
  for (std::size_t layer = 0; layer < acts.attention_scores.size(); ++layer) {
    std::ofstream out(opt.out + "/attention_" + std::to_string(layer) + ".csv");
    out << "node";
    for (int i = 0; i < acts.graph.k; ++i) out << ",a" << i;
    out << "\n";
    out.precision(17);
    const auto& scores = acts.attention_scores[layer];
    for (int j = 0; j < acts.graph.node_count(); ++j) {
      out << j;
      for (int i = 0; i < acts.graph.k; ++i) {
        out << "," << scores[static_cast<std::size_t>(j) * acts.graph.k + i];
      }
      out << "\n";
    }
  }
  for (std::size_t layer = 0; layer < acts.layer_values.size(); ++layer) {
    std::ofstream out(opt.out + "/activations_" + std::to_string(layer) + ".csv");
    const auto& vals = acts.layer_values[layer];
    const int m = acts.graph.node_count();
    const int width = static_cast<int>(vals.size()) / m;
    out << "node";
    for (int c = 0; c < width; ++c) out << ",f" << c;
    out << "\n";
    out.precision(17);
    for (int j = 0; j < m; ++j) {
      out << j;
      for (int c = 0; c < width; ++c) out << "," << vals[static_cast<std::size_t>(j) * width + c];
      out << "\n";
    }
  }
  std::printf("inspect output in %s (nodes %d, layers %zu)\n", opt.out.c_str(), acts.nodes.size(),
              acts.attention_scores.size());
  return kExitOk;
}

template <class Real>
int run_ablate(const Options& opt) {
  model::ModelConfig mc = require_model_config(opt);
  training::TrainConfig tc = opt.train_config.empty()
                                 ? training::TrainConfig{}
                                 : training::TrainConfig::load(opt.train_config);
  dataio::Dataset data = require_dataset(opt);
  dataio::Dataset train = data.split("train");
  dataio::Dataset val = data.split("val");
  fs::create_directories(opt.out);

  std::ofstream csv(opt.out + "/ablation.csv");
  csv << "seed,with_global_graph,without_global_graph,difference\n";
  csv.precision(17);
  double sum_with = 0.0, sum_without = 0.0;
  for (int s = 0; s < opt.ablate_seeds; ++s) {
    std::uint64_t seed = opt.seed + static_cast<std::uint64_t>(s);
    tc.rng_seed = seed;
    double acc[2];
    for (int variant = 0; variant < 2; ++variant) {
      model::ModelConfig cfg = mc;
      cfg.use_global_graph = variant == 0;
      model::Model<Real> net(cfg);
      net.init_params(seed);
      training::FitResult r = training::fit(net, train, val, tc);
      acc[variant] = r.best_score;
    }
    sum_with += acc[0];
    sum_without += acc[1];
    csv << seed << "," << acc[0] << "," << acc[1] << "," << acc[0] - acc[1] << "\n";
    std::printf("seed %llu with_global_graph %.4f without_global_graph %.4f diff %+.4f\n",
                static_cast<unsigned long long>(seed), acc[0], acc[1], acc[0] - acc[1]);
  }
  std::printf("mean with_global_graph %.4f without_global_graph %.4f diff %+.4f\n",
              sum_with / opt.ablate_seeds, sum_without / opt.ablate_seeds,
              (sum_with - sum_without) / opt.ablate_seeds);
  return kExitOk;
}

template <class Fn32, class Fn64>
int with_precision(int precision, Fn32&& f32, Fn64&& f64) {
  return precision == 32 ? f32() : f64();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-cloud attention network toolkit"};
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--model-config", opt.model_config, "Model configuration file");
    cmd->add_option("--train-config", opt.train_config, "Training configuration file");
    cmd->add_option("--manifest", opt.manifest, "Dataset manifest path");
    cmd->add_option("--out", opt.out, "Output directory");
    cmd->add_option("--seed", opt.seed, "Master random seed");
    cmd->add_option("--precision", opt.precision, "Float width (32 or 64)")
        ->check(CLI::IsMember({32, 64}));
    cmd->add_option("--threads", opt.threads, "Worker thread cap (0 = default)");
    cmd->add_option("--checkpoint", opt.checkpoint, "Checkpoint path");
  };

  CLI::App* train = app.add_subcommand("train", "Train a model and write metrics + checkpoints");
  add_common(train);
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  add_common(eval);
  eval->add_option("--split", opt.split, "Manifest split to evaluate");
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference verification of the backward pass");
  add_common(gradcheck);
  gradcheck->add_flag("--sabotage", opt.sabotage,
                      "Deliberately corrupt the attention backward (negative control)");
  CLI::App* bench = app.add_subcommand("bench", "Attention-layer scaling benchmark");
  add_common(bench);
  CLI::App* synth = app.add_subcommand("synth", "Materialize a synthetic dataset");
  add_common(synth);
  synth->add_option("--spec", opt.spec, "Synthesis spec file")->required();
  synth->add_option("--format", opt.format, "Cloud file format (text or binary)")
      ->check(CLI::IsMember({"text", "binary"}));
  CLI::App* inspect = app.add_subcommand("inspect", "Dump nodes, adjacency, and attention CSVs");
  add_common(inspect);
  inspect->add_option("--cloud", opt.cloud, "Point cloud file to inspect")->required();
  CLI::App* ablate = app.add_subcommand("ablate", "Paired runs with/without the global point graph");
  add_common(ablate);
  ablate->add_option("--seeds", opt.ablate_seeds, "Number of paired seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  apply_threads(opt.threads);
  try {
    if (train->parsed()) {
      return with_precision(opt.precision, [&] { return run_train<float>(opt); },
                            [&] { return run_train<double>(opt); });
    }
    if (eval->parsed()) {
      return with_precision(opt.precision, [&] { return run_eval<float>(opt); },
                            [&] { return run_eval<double>(opt); });
    }
    if (gradcheck->parsed()) return run_gradcheck(opt);
    if (bench->parsed()) return run_bench(opt);
    if (synth->parsed()) return run_synth(opt);
    if (inspect->parsed()) {
      return with_precision(opt.precision, [&] { return run_inspect<float>(opt); },
                            [&] { return run_inspect<double>(opt); });
    }
    if (ablate->parsed()) {
      return with_precision(opt.precision, [&] { return run_ablate<float>(opt); },
                            [&] { return run_ablate<double>(opt); });
    }
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCheckFailed;
  }
  return kExitUsage;
}
