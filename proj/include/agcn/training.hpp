#pragma once

// Training loop, augmentation, learning-rate schedule, and the evaluation
// metrics (overall / average-class accuracy, instance and category mIoU).

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "agcn/common.hpp"
#include "agcn/dataio.hpp"
#include "agcn/diffcore.hpp"
#include "agcn/geometry.hpp"
#include "agcn/model.hpp"

namespace agcn::training {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double lr0 = 1e-3;
  double lr_decay = 0.7;
  int lr_step = 20;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool rotate_z = true;
  bool rotate_normals = true;  // rotate directional channels with the coords
  double jitter_sigma = 0.02;
  double jitter_clip = 0.0;  // 0 disables clipping (the default protocol)
  // When > 0, each training sample is randomly subsampled to a uniform count
  // in [subsample_min, N], so the model also sees sparse inputs.
  int subsample_min = 0;
  std::uint64_t rng_seed = 1;
  int precision = 64;  // 32 | 64

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (lr_decay <= 0.0 || lr_decay > 1.0) {
      throw std::invalid_argument("TrainConfig: lr_decay must be in (0, 1]");
    }
    if (lr_step < 1) throw std::invalid_argument("TrainConfig: lr_step must be >= 1");
    if (jitter_sigma < 0.0) throw std::invalid_argument("TrainConfig: jitter_sigma must be >= 0");
    if (subsample_min < 0) throw std::invalid_argument("TrainConfig: subsample_min must be >= 0");
    if (precision != 32 && precision != 64) {
      throw std::invalid_argument("TrainConfig: precision must be 32 or 64");
    }
  }

  static TrainConfig from_key_values(const KeyValueFile& kv) {
    TrainConfig c;
    c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
    c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
    c.lr0 = kv.get_real("lr0", c.lr0);
    c.lr_decay = kv.get_real("lr_decay", c.lr_decay);
    c.lr_step = static_cast<int>(kv.get_int("lr_step", c.lr_step));
    c.beta1 = kv.get_real("beta1", c.beta1);
    c.beta2 = kv.get_real("beta2", c.beta2);
    c.eps = kv.get_real("eps", c.eps);
    c.rotate_z = kv.get_bool("rotate_z", c.rotate_z);
    c.rotate_normals = kv.get_bool("rotate_normals", c.rotate_normals);
    c.jitter_sigma = kv.get_real("jitter_sigma", c.jitter_sigma);
    c.jitter_clip = kv.get_real("jitter_clip", c.jitter_clip);
    c.subsample_min = static_cast<int>(kv.get_int("subsample_min", c.subsample_min));
    c.rng_seed = static_cast<std::uint64_t>(kv.get_int("rng_seed", 1));
    c.precision = static_cast<int>(kv.get_int("precision", c.precision));
    c.validate();
    return c;
  }
  static TrainConfig load(const std::string& path) {
    return from_key_values(KeyValueFile::load(path));
  }
};

inline double lr_at(int epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.lr_decay, epoch / cfg.lr_step);
}

// Uniform-random rotation about the z axis, then i.i.d. Gaussian jitter on
// the coordinates. Directional channels (leading 3, e.g. normals) rotate
// with the coordinates.
inline geometry::PointCloud resample_cloud(const geometry::PointCloud& cloud, int n, Rng& rng);

inline geometry::PointCloud augment(const geometry::PointCloud& cloud, const TrainConfig& cfg,
                                    Rng& rng) {
  geometry::PointCloud out = cloud;
  if (cfg.subsample_min > 0 && cfg.subsample_min < cloud.size()) {
    const int span = cloud.size() - cfg.subsample_min + 1;
    const int target = cfg.subsample_min + static_cast<int>(rng.uniform_index(span));
    if (target < cloud.size()) out = resample_cloud(out, target, rng);
  }
  if (cfg.rotate_z) {
    double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    double c = std::cos(angle), s = std::sin(angle);
    for (auto& p : out.coords) {
      double x = c * p[0] - s * p[1];
      double y = s * p[0] + c * p[1];
      p[0] = x;
      p[1] = y;
    }
    if (cfg.rotate_normals && out.channel_count >= 3) {
      for (int i = 0; i < out.size(); ++i) {
        double* ch = out.channels.data() + static_cast<std::size_t>(i) * out.channel_count;
        double x = c * ch[0] - s * ch[1];
        double y = s * ch[0] + c * ch[1];
        ch[0] = x;
        ch[1] = y;
      }
    }
  }
  if (cfg.jitter_sigma > 0.0) {
    for (auto& p : out.coords) {
      for (int d = 0; d < 3; ++d) {
        double n = rng.gaussian(cfg.jitter_sigma);
        if (cfg.jitter_clip > 0.0) n = std::clamp(n, -cfg.jitter_clip, cfg.jitter_clip);
        p[d] += n;
      }
    }
  }
  return out;
}

// Uniform subsample without replacement (for the input-count robustness
// sweep); keeps channels and labels aligned.
inline geometry::PointCloud resample_cloud(const geometry::PointCloud& cloud, int n, Rng& rng) {
  if (n < 1 || n > cloud.size()) {
    throw std::invalid_argument("resample_cloud: n out of range");
  }
  std::vector<int> idx(cloud.size());
  for (int i = 0; i < cloud.size(); ++i) idx[i] = i;
  for (int i = 0; i < n; ++i) {
    int j = i + static_cast<int>(rng.uniform_index(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  geometry::PointCloud out;
  out.channel_count = cloud.channel_count;
  for (int i = 0; i < n; ++i) {
    out.coords.push_back(cloud.coords[idx[i]]);
    for (int c = 0; c < cloud.channel_count; ++c) {
      out.channels.push_back(cloud.channel_row(idx[i])[c]);
    }
    if (cloud.has_labels()) out.labels.push_back(cloud.labels[idx[i]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double overall_accuracy = 0.0;
  double avg_class_accuracy = 0.0;
  double instance_miou = 0.0;
  double category_miou = 0.0;
  std::map<int, double> per_class_iou;
  std::vector<double> loss_curve;
};

inline Metrics evaluate_classification(const std::vector<int>& predictions,
                                       const std::vector<int>& labels, int num_classes) {
  if (predictions.size() != labels.size() || predictions.empty()) {
    throw std::invalid_argument("evaluate_classification: prediction/label size mismatch");
  }
  std::vector<long> correct(num_classes, 0), total(num_classes, 0);
  long hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int t = labels[i];
    if (t < 0 || t >= num_classes) {
      throw std::invalid_argument("evaluate_classification: label out of range");
    }
    total[t] += 1;
    if (predictions[i] == t) {
      correct[t] += 1;
      ++hits;
    }
  }
  Metrics m;
  m.overall_accuracy = static_cast<double>(hits) / labels.size();
  double recall_sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (total[c] == 0) {
      AGCN_LOG_INFO("evaluate_classification: class %d absent from ground truth, excluded", c);
      continue;
    }
    recall_sum += static_cast<double>(correct[c]) / total[c];
    ++present;
  }
  m.avg_class_accuracy = present ? recall_sum / present : 0.0;
  return m;
}

// Shape IoU averaged over the parts of the shape's category (parts absent
// from both prediction and ground truth count 1); instance mIoU averages
// shapes, category mIoU averages per-category means. per_class_iou is the
// pointwise aggregate over all shapes.
inline Metrics evaluate_segmentation(const std::vector<std::vector<int>>& predictions,
                                     const std::vector<std::vector<int>>& labels,
                                     const std::vector<int>& shape_categories,
                                     const std::map<int, std::vector<int>>& part_sets) {
  const std::size_t shapes = predictions.size();
  if (shapes == 0 || labels.size() != shapes || shape_categories.size() != shapes) {
    throw std::invalid_argument("evaluate_segmentation: shape count mismatch");
  }

  std::map<int, std::vector<double>> per_category_ious;
  std::map<int, long> inter_all, union_all;
  double iou_sum = 0.0;
  for (std::size_t s = 0; s < shapes; ++s) {
    const auto& pred = predictions[s];
    const auto& truth = labels[s];
    if (pred.size() != truth.size() || pred.empty()) {
      throw std::invalid_argument("evaluate_segmentation: per-point size mismatch");
    }
    auto it = part_sets.find(shape_categories[s]);
    if (it == part_sets.end()) {
      throw std::invalid_argument("evaluate_segmentation: unknown category id " +
                                  std::to_string(shape_categories[s]));
    }
    double part_iou_sum = 0.0;
    for (int part : it->second) {
      long inter = 0, uni = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        bool p = pred[i] == part, t = truth[i] == part;
        inter += p && t;
        uni += p || t;
      }
      part_iou_sum += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
      inter_all[part] += inter;
      union_all[part] += uni;
    }
    double shape_iou = part_iou_sum / it->second.size();
    iou_sum += shape_iou;
    per_category_ious[shape_categories[s]].push_back(shape_iou);
  }

  Metrics m;
  m.instance_miou = iou_sum / shapes;
  double cat_sum = 0.0;
  for (const auto& [cat, ious] : per_category_ious) {
    double s = 0.0;
    for (double v : ious) s += v;
    cat_sum += s / ious.size();
  }
  m.category_miou = cat_sum / per_category_ious.size();
  for (const auto& [part, uni] : union_all) {
    m.per_class_iou[part] = uni == 0 ? 1.0 : static_cast<double>(inter_all[part]) / uni;
  }

  // Pointwise overall accuracy as a convenience (Table 5 style).
  long hits = 0, total = 0;
  for (std::size_t s = 0; s < shapes; ++s) {
    for (std::size_t i = 0; i < predictions[s].size(); ++i) {
      hits += predictions[s][i] == labels[s][i];
    }
    total += static_cast<long>(predictions[s].size());
  }
  m.overall_accuracy = static_cast<double>(hits) / total;
  return m;
}

// ---------------------------------------------------------------------------
// Prediction helpers (eval mode, no tape reuse outside the call)

template <class Real>
int predict_classify(model::Model<Real>& net, const geometry::PointCloud& cloud) {
  diff::Tape<Real> tape;
  diff::Tensor<Real> logits = net.classify_forward(tape, cloud, /*train=*/false);
  const Real* p = logits.data();
  int best = 0;
  for (int c = 1; c < logits.dim(1); ++c) {
    if (p[c] > p[best]) best = c;
  }
  return best;
}

template <class Real>
std::vector<int> predict_segment(model::Model<Real>& net, const geometry::PointCloud& cloud) {
  diff::Tape<Real> tape;
  diff::Tensor<Real> logits = net.segment_forward(tape, cloud, /*train=*/false);
  const int n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(n);
  const Real* p = logits.data();
  for (int i = 0; i < n; ++i) {
    const Real* row = p + static_cast<std::size_t>(i) * c;
    int best = 0;
    for (int j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[i] = best;
  }
  return out;
}

template <class Real>
Metrics evaluate_model(model::Model<Real>& net, const dataio::Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_model: empty dataset");
  if (net.config().mode == model::TaskMode::classify) {
    std::vector<int> preds, labels;
    for (const auto& s : data.samples) {
      preds.push_back(predict_classify(net, s.cloud));
      labels.push_back(s.category);
    }
    return evaluate_classification(preds, labels, net.config().num_classes);
  }
  std::vector<std::vector<int>> preds, labels;
  std::vector<int> cats;
  for (const auto& s : data.samples) {
    preds.push_back(predict_segment(net, s.cloud));
    labels.push_back(s.cloud.labels);
    cats.push_back(s.category);
  }
  return evaluate_segmentation(preds, labels, cats, data.part_sets);
}

// ---------------------------------------------------------------------------
// Fit

struct EpochRow {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_overall = 0.0;
  double val_avg_class = 0.0;
  double val_instance_miou = 0.0;
  double val_category_miou = 0.0;
};

struct FitResult {
  std::vector<EpochRow> history;
  std::vector<double> loss_curve;
  int best_epoch = -1;
  double best_score = -1.0;  // val overall accuracy (classify) or instance mIoU (segment)
  Metrics best_val_metrics;
  std::string best_checkpoint;
};

inline void write_metrics_csv(const std::string& path, const std::vector<EpochRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "epoch,lr,train_loss,val_overall,val_avg_class,val_instance_miou,val_category_miou\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.epoch << "," << r.lr << "," << r.train_loss << "," << r.val_overall << ","
        << r.val_avg_class << "," << r.val_instance_miou << "," << r.val_category_miou << "\n";
  }
}

inline void write_per_class_iou_csv(const std::string& path, const std::map<int, double>& ious) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_per_class_iou_csv: cannot open " + path);
  out << "part,iou\n";
  out.precision(17);
  for (const auto& [part, iou] : ious) out << part << "," << iou << "\n";
}

// Mini-batch Adam training. Per-sample gradients accumulate serially in a
// fixed order (scaled by 1/batch), so runs are bitwise reproducible for any
// worker count; the per-op kernels still parallelize internally.
template <class Real>
FitResult fit(model::Model<Real>& net, const dataio::Dataset& train_set,
              const dataio::Dataset& val_set, const TrainConfig& cfg,
              const std::string& out_dir = "") {
  cfg.validate();
  if (train_set.size() == 0 || val_set.size() == 0) {
    throw std::invalid_argument("fit: empty dataset");
  }
  const bool classify = net.config().mode == model::TaskMode::classify;
  Rng rng(cfg.rng_seed);
  FitResult result;

  std::vector<int> order(train_set.size());
  for (int i = 0; i < train_set.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    // Fisher-Yates from the run rng; draws happen in a fixed order.
    for (int i = train_set.size() - 1; i > 0; --i) {
      int j = static_cast<int>(rng.uniform_index(i + 1));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    long loss_count = 0;
    for (int start = 0; start < train_set.size(); start += cfg.batch_size) {
      const int end = std::min<int>(start + cfg.batch_size, train_set.size());
      const int batch = end - start;
      net.params().zero_grad();
      for (int bi = start; bi < end; ++bi) {
        const dataio::Sample& sample = train_set.samples[order[bi]];
        geometry::PointCloud cloud = augment(sample.cloud, cfg, rng);
        diff::Tape<Real> tape;
        diff::Tensor<Real> loss;
        if (classify) {
          diff::Tensor<Real> logits = net.classify_forward(tape, cloud, true, &rng);
          loss = diff::softmax_cross_entropy(tape, logits, {sample.category});
        } else {
          diff::Tensor<Real> logits = net.segment_forward(tape, cloud, true, &rng);
          loss = diff::softmax_cross_entropy(tape, logits, cloud.labels);
        }
        const double lv = static_cast<double>(loss.data()[0]);
        if (!std::isfinite(lv)) {
          throw std::runtime_error("fit: non-finite loss at epoch " + std::to_string(epoch) +
                                   " sample " + std::to_string(order[bi]));
        }
        loss_sum += lv;
        ++loss_count;
        loss.grad()[0] = Real(1) / Real(batch);
        tape.run_backward();
      }
      net.params().adam_update(lr, cfg.beta1, cfg.beta2, cfg.eps);
    }

    EpochRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = loss_sum / loss_count;
    result.loss_curve.push_back(row.train_loss);

    Metrics val = evaluate_model(net, val_set);
    row.val_overall = val.overall_accuracy;
    row.val_avg_class = val.avg_class_accuracy;
    row.val_instance_miou = val.instance_miou;
    row.val_category_miou = val.category_miou;
    result.history.push_back(row);

    const double score = classify ? val.overall_accuracy : val.instance_miou;
    if (score > result.best_score) {
      result.best_score = score;
      result.best_epoch = epoch;
      result.best_val_metrics = val;
      if (!out_dir.empty()) {
        result.best_checkpoint = out_dir + "/best.ckpt";
        diff::save_checkpoint(net.params(), result.best_checkpoint);
      }
    }
    AGCN_LOG_INFO("epoch %d lr %.3g train_loss %.5f val %.4f", epoch, lr, row.train_loss, score);
  }

  if (!out_dir.empty()) {
    diff::save_checkpoint(net.params(), out_dir + "/last.ckpt", /*include_optimizer_state=*/true);
    write_metrics_csv(out_dir + "/metrics.csv", result.history);
  }
  return result;
}

}  // namespace agcn::training
