#pragma once

// The point-cloud attention network: local structure features over FPS
// nodes, stacked point attention layers on a KNN graph, a global point
// graph side branch, a classification head, and the encoder-decoder
// segmentation pipeline with inverse-distance feature interpolation.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "agcn/common.hpp"
#include "agcn/diffcore.hpp"
#include "agcn/geometry.hpp"
#include "agcn/tensor.hpp"

namespace agcn::model {

using diff::Tape;
using diff::Tensor;

enum class TaskMode { classify, segment };

struct ModelConfig {
  int in_channels = 3;  // per-point channels beyond xyz (e.g. normals)
  int m_nodes = 256;
  int l_group = 16;
  int k_neighbors = 3;
  std::vector<int> local_mlp_widths{64, 64, 128};
  int attention_layers = 3;
  std::vector<std::vector<int>> attention_transform_widths{{128, 128}, {128, 256}, {256, 512}};
  std::vector<std::vector<int>> decoder_transform_widths{{256, 256}, {256, 128}, {128, 128}};
  std::vector<int> global_graph_mlp_widths{64, 128};
  std::vector<int> head_widths{512, 256, 40};
  double dropout = 0.5;
  double init_range = 0.001;  // uniform weight init support [-r, r]
  int idw_m = 3;
  double idw_power = 2.0;
  int num_classes = 40;
  TaskMode mode = TaskMode::classify;
  bool use_batchnorm = true;
  bool use_global_graph = true;
  bool softmax_attention = false;
  int fps_seed = 0;  // -1 selects the lexicographically smallest point

  void validate() const;
  static ModelConfig load(const std::string& path);
  static ModelConfig from_key_values(const KeyValueFile& kv);
  void save(const std::string& path) const;
};

inline void ModelConfig::validate() const {
  if (m_nodes < 2) throw std::invalid_argument("ModelConfig: m_nodes must be >= 2");
  if (l_group < 1) throw std::invalid_argument("ModelConfig: l_group must be >= 1");
  if (k_neighbors < 1 || k_neighbors > m_nodes - 1) {
    throw std::invalid_argument("ModelConfig: requires 1 <= k_neighbors <= m_nodes - 1");
  }
  if (attention_layers < 1) throw std::invalid_argument("ModelConfig: attention_layers must be >= 1");
  if (static_cast<int>(attention_transform_widths.size()) != attention_layers) {
    throw std::invalid_argument("ModelConfig: need one attention transform per layer");
  }
  for (const auto& w : attention_transform_widths) {
    if (w.size() != 2) throw std::invalid_argument("ModelConfig: attention transforms are 2-layer");
  }
  if (mode == TaskMode::segment) {
    if (static_cast<int>(decoder_transform_widths.size()) != attention_layers) {
      throw std::invalid_argument("ModelConfig: need one decoder transform per layer");
    }
    for (const auto& w : decoder_transform_widths) {
      if (w.size() != 2) throw std::invalid_argument("ModelConfig: decoder transforms are 2-layer");
    }
  }
  if (global_graph_mlp_widths.size() != 2) {
    throw std::invalid_argument("ModelConfig: global graph MLP has 2 layers");
  }
  if (local_mlp_widths.empty() || head_widths.empty()) {
    throw std::invalid_argument("ModelConfig: empty MLP width list");
  }
  if (head_widths.back() != num_classes) {
    throw std::invalid_argument("ModelConfig: last head width must equal num_classes");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("ModelConfig: dropout in [0,1)");
  if (init_range <= 0.0) throw std::invalid_argument("ModelConfig: init_range must be positive");
  if (idw_m < 1) throw std::invalid_argument("ModelConfig: idw_m must be >= 1");
  if (in_channels < 0) throw std::invalid_argument("ModelConfig: negative in_channels");
}

inline ModelConfig ModelConfig::from_key_values(const KeyValueFile& kv) {
  ModelConfig c;
  c.in_channels = static_cast<int>(kv.get_int("in_channels", c.in_channels));
  c.m_nodes = static_cast<int>(kv.get_int("m_nodes", c.m_nodes));
  c.l_group = static_cast<int>(kv.get_int("l_group", c.l_group));
  c.k_neighbors = static_cast<int>(kv.get_int("k_neighbors", c.k_neighbors));
  c.local_mlp_widths = kv.get_int_list("local_mlp_widths", c.local_mlp_widths);
  c.attention_layers = static_cast<int>(kv.get_int("attention_layers", c.attention_layers));
  c.attention_transform_widths =
      kv.get_int_list_list("attention_transform_widths", c.attention_transform_widths);
  c.decoder_transform_widths =
      kv.get_int_list_list("decoder_transform_widths", c.decoder_transform_widths);
  c.global_graph_mlp_widths = kv.get_int_list("global_graph_mlp_widths", c.global_graph_mlp_widths);
  c.num_classes = static_cast<int>(kv.get_int("num_classes", c.num_classes));
  std::vector<int> default_head = c.head_widths;
  default_head.back() = c.num_classes;
  c.head_widths = kv.get_int_list("head_widths", default_head);
  c.dropout = kv.get_real("dropout", c.dropout);
  c.init_range = kv.get_real("init_range", c.init_range);
  c.idw_m = static_cast<int>(kv.get_int("idw_m", c.idw_m));
  c.idw_power = kv.get_real("idw_power", c.idw_power);
  std::string mode = kv.get_string("mode", "classify");
  if (mode == "classify") {
    c.mode = TaskMode::classify;
  } else if (mode == "segment") {
    c.mode = TaskMode::segment;
  } else {
    throw std::invalid_argument("ModelConfig: mode must be classify or segment");
  }
  c.use_batchnorm = kv.get_bool("use_batchnorm", c.use_batchnorm);
  c.use_global_graph = kv.get_bool("use_global_graph", c.use_global_graph);
  c.softmax_attention = kv.get_bool("softmax_attention", c.softmax_attention);
  c.fps_seed = static_cast<int>(kv.get_int("fps_seed", c.fps_seed));
  c.validate();
  return c;
}

inline ModelConfig ModelConfig::load(const std::string& path) {
  return from_key_values(KeyValueFile::load(path));
}

inline void ModelConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ModelConfig::save: cannot open " + path);
  auto list = [](const std::vector<int>& v) {
    std::ostringstream ss;
    for (std::size_t i = 0; i < v.size(); ++i) ss << (i ? "," : "") << v[i];
    return ss.str();
  };
  auto list2 = [&](const std::vector<std::vector<int>>& v) {
    std::ostringstream ss;
    for (std::size_t i = 0; i < v.size(); ++i) ss << (i ? ";" : "") << list(v[i]);
    return ss.str();
  };
  out << "mode=" << (mode == TaskMode::classify ? "classify" : "segment") << "\n"
      << "in_channels=" << in_channels << "\n"
      << "m_nodes=" << m_nodes << "\n"
      << "l_group=" << l_group << "\n"
      << "k_neighbors=" << k_neighbors << "\n"
      << "local_mlp_widths=" << list(local_mlp_widths) << "\n"
      << "attention_layers=" << attention_layers << "\n"
      << "attention_transform_widths=" << list2(attention_transform_widths) << "\n"
      << "decoder_transform_widths=" << list2(decoder_transform_widths) << "\n"
      << "global_graph_mlp_widths=" << list(global_graph_mlp_widths) << "\n"
      << "head_widths=" << list(head_widths) << "\n"
      << "num_classes=" << num_classes << "\n"
      << "dropout=" << dropout << "\n"
      << "init_range=" << init_range << "\n"
      << "idw_m=" << idw_m << "\n"
      << "idw_power=" << idw_power << "\n"
      << "use_batchnorm=" << (use_batchnorm ? "true" : "false") << "\n"
      << "use_global_graph=" << (use_global_graph ? "true" : "false") << "\n"
      << "softmax_attention=" << (softmax_attention ? "true" : "false") << "\n"
      << "fps_seed=" << fps_seed << "\n";
}

// ---------------------------------------------------------------------------
// Attention score / aggregation primitives (value-level, differentiation-free)

// Ratio-form attention over each node's K neighbors. Rows whose denominator
// has magnitude below 1e-12 fall back to the uniform row 1/K. The softmax
// variant replaces the ratio with a softmax over the dot products.
template <class Real>
std::vector<Real> attention_scores(const Tensor<Real>& f, const geometry::KnnGraph& graph,
                                   bool softmax = false) {
  const int m = graph.node_count();
  const int k = graph.k;
  const int d = f.dim(1);
  if (f.dim(0) != m) throw std::invalid_argument("attention_scores: feature rows != graph nodes");

  std::vector<Real> scores(static_cast<std::size_t>(m) * k);
  const Real* fp = f.data();
#pragma omp parallel for schedule(static)
  for (int j = 0; j < m; ++j) {
    const int* nbr = graph.row(j);
    Real* row = scores.data() + static_cast<std::size_t>(j) * k;
    const Real* fj = fp + static_cast<std::size_t>(j) * d;
    if (softmax) {
      Real mx = -std::numeric_limits<Real>::infinity();
      for (int i = 0; i < k; ++i) {
        const Real* fn = fp + static_cast<std::size_t>(nbr[i]) * d;
        Real dot = 0;
        for (int c = 0; c < d; ++c) dot += fj[c] * fn[c];
        row[i] = dot;
        mx = std::max(mx, dot);
      }
      Real denom = 0;
      for (int i = 0; i < k; ++i) denom += std::exp(row[i] - mx);
      for (int i = 0; i < k; ++i) row[i] = std::exp(row[i] - mx) / denom;
    } else {
      Real denom = 0;
      for (int i = 0; i < k; ++i) {
        const Real* fn = fp + static_cast<std::size_t>(nbr[i]) * d;
        Real dot = 0;
        for (int c = 0; c < d; ++c) dot += fj[c] * fn[c];
        row[i] = dot;
        denom += dot;
      }
      if (std::abs(static_cast<double>(denom)) < 1e-12) {
        for (int i = 0; i < k; ++i) row[i] = Real(1) / Real(k);
      } else {
        for (int i = 0; i < k; ++i) row[i] /= denom;
      }
    }
  }
  return scores;
}

// Weighted neighbor sum plus residual: f'_j = sum_k alpha_jk f_{n(j,k)} + f_j.
template <class Real>
std::vector<Real> attention_aggregate(const Tensor<Real>& f, const std::vector<Real>& scores,
                                      const geometry::KnnGraph& graph) {
  const int m = graph.node_count();
  const int k = graph.k;
  const int d = f.dim(1);
  if (f.dim(0) != m) throw std::invalid_argument("attention_aggregate: feature rows != graph nodes");
  if (scores.size() != static_cast<std::size_t>(m) * k) {
    throw std::invalid_argument("attention_aggregate: score shape mismatch");
  }
  std::vector<Real> out(static_cast<std::size_t>(m) * d);
  const Real* fp = f.data();
#pragma omp parallel for schedule(static)
  for (int j = 0; j < m; ++j) {
    const int* nbr = graph.row(j);
    const Real* srow = scores.data() + static_cast<std::size_t>(j) * k;
    Real* orow = out.data() + static_cast<std::size_t>(j) * d;
    const Real* fj = fp + static_cast<std::size_t>(j) * d;
    for (int c = 0; c < d; ++c) orow[c] = fj[c];
    for (int i = 0; i < k; ++i) {
      const Real* fn = fp + static_cast<std::size_t>(nbr[i]) * d;
      Real a = srow[i];
      for (int c = 0; c < d; ++c) orow[c] += a * fn[c];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable attention aggregation (scores + weighted sum + residual in
// one tape node; the backward also differentiates through the scores).
// corrupt_backward is a test fixture that deliberately mis-scales the
// residual gradient so negative-control gradient checks fail.
template <class Real>
Tensor<Real> point_attention_aggregate(Tape<Real>& tape, Tensor<Real> f,
                                       const geometry::KnnGraph& graph, bool softmax,
                                       std::vector<Real>* scores_out = nullptr,
                                       bool corrupt_backward = false) {
  const int m = graph.node_count();
  const int k = graph.k;
  const int d = f.dim(1);
  auto scores = std::make_shared<std::vector<Real>>(attention_scores(f, graph, softmax));
  if (scores_out) *scores_out = *scores;
  Tensor<Real> y = Tensor<Real>::from({m, d}, attention_aggregate(f, *scores, graph));

  // Raw dot products and denominators are re-derivable from f; recompute in
  // the backward to keep the forward cache small.
  auto neighbors = std::make_shared<std::vector<int>>(graph.neighbor_indices);
  tape.push([f, y, scores, neighbors, m, k, d, softmax, corrupt_backward]() mutable {
    const Real* g = y.grad();
    const Real* fp = f.data();
    Real* fg = f.grad();
    const Real residual_scale = corrupt_backward ? Real(1.5) : Real(1);
    std::vector<Real> dots(k);
    std::vector<Real> dalpha(k);
    // Serial over nodes: rows scatter into shared neighbor gradients.
    for (int j = 0; j < m; ++j) {
      const int* nbr = neighbors->data() + static_cast<std::size_t>(j) * k;
      const Real* gj = g + static_cast<std::size_t>(j) * d;
      const Real* fj = fp + static_cast<std::size_t>(j) * d;
      const Real* arow = scores->data() + static_cast<std::size_t>(j) * k;

      for (int c = 0; c < d; ++c) fg[static_cast<std::size_t>(j) * d + c] += residual_scale * gj[c];
      Real denom = 0;
      for (int i = 0; i < k; ++i) {
        const Real* fn = fp + static_cast<std::size_t>(nbr[i]) * d;
        Real dot = 0, da = 0;
        for (int c = 0; c < d; ++c) {
          dot += fj[c] * fn[c];
          da += gj[c] * fn[c];
        }
        dots[i] = dot;
        dalpha[i] = da;  // dL/dalpha_ji
        denom += dot;
        Real a = arow[i];
        Real* fng = fg + static_cast<std::size_t>(nbr[i]) * d;
        for (int c = 0; c < d; ++c) fng[c] += a * gj[c];
      }

      bool fallback = !softmax && std::abs(static_cast<double>(denom)) < 1e-12;
      if (fallback) continue;  // uniform row is constant, no score gradient

      Real mix = 0;
      for (int i = 0; i < k; ++i) mix += dalpha[i] * arow[i];
      for (int i = 0; i < k; ++i) {
        Real ddot;
        if (softmax) {
          ddot = arow[i] * (dalpha[i] - mix);
        } else {
          ddot = (dalpha[i] - mix) / denom;
        }
        const Real* fn = fp + static_cast<std::size_t>(nbr[i]) * d;
        Real* fng = fg + static_cast<std::size_t>(nbr[i]) * d;
        Real* fjg = fg + static_cast<std::size_t>(j) * d;
        for (int c = 0; c < d; ++c) {
          fjg[c] += ddot * fn[c];
          fng[c] += ddot * fj[c];
        }
      }
    }
  });
  return y;
}

// IDW feature transfer from node features to destination points using
// precomputed weights. Linear in the features, so the backward scatters the
// upstream gradient by the same weights.
template <class Real>
Tensor<Real> idw_apply(Tape<Real>& tape, Tensor<Real> src_features, const geometry::IdwWeights& w,
                       int dst_count) {
  const int s = src_features.dim(0);
  const int fdim = src_features.dim(1);
  (void)s;
  Tensor<Real> y = Tensor<Real>::zeros({dst_count, fdim});
  const Real* sp = src_features.data();
  Real* yp = y.data();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < dst_count; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * w.m;
    Real* row = yp + static_cast<std::size_t>(i) * fdim;
    for (int j = 0; j < w.m; ++j) {
      Real wj = Real(w.weights[base + j]);
      if (wj == Real(0)) continue;
      const Real* src = sp + static_cast<std::size_t>(w.source_indices[base + j]) * fdim;
      for (int c = 0; c < fdim; ++c) row[c] += wj * src[c];
    }
  }

  auto weights = std::make_shared<geometry::IdwWeights>(w);
  tape.push([src_features, y, weights, dst_count, fdim]() mutable {
    const Real* g = y.grad();
    Real* sg = src_features.grad();
    for (int i = 0; i < dst_count; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * weights->m;
      const Real* gr = g + static_cast<std::size_t>(i) * fdim;
      for (int j = 0; j < weights->m; ++j) {
        Real wj = Real(weights->weights[base + j]);
        if (wj == Real(0)) continue;
        Real* src = sg + static_cast<std::size_t>(weights->source_indices[base + j]) * fdim;
        for (int c = 0; c < fdim; ++c) src[c] += wj * gr[c];
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// The model

template <class Real>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const ModelConfig& config() const { return cfg_; }
  diff::ParameterStore<Real>& params() { return store_; }
  const diff::ParameterStore<Real>& params() const { return store_; }

  // Registers and initializes every parameter from the config's init_range.
  // Gradient checking passes a larger range to stay clear of dead ReLUs and
  // degenerate attention denominators.
  void init_params(std::uint64_t seed) { init_params(seed, cfg_.init_range); }

  void init_params(std::uint64_t seed, double range) {
    const int point_dim = 3 + cfg_.in_channels;
    register_mlp("local", point_dim, cfg_.local_mlp_widths, /*with_norm=*/cfg_.use_batchnorm, seed, range);
    if (cfg_.use_global_graph) {
      register_mlp("global", 3, cfg_.global_graph_mlp_widths, cfg_.use_batchnorm, seed, range);
    }
    int cur = cfg_.local_mlp_widths.back();
    const int gpn_width = cfg_.use_global_graph ? 2 * cfg_.global_graph_mlp_widths.back() : 0;
    for (int i = 0; i < cfg_.attention_layers; ++i) {
      int in = cur + gpn_width;
      const auto& w = cfg_.attention_transform_widths[i];
      register_mlp("attn." + std::to_string(i), in, w, cfg_.use_batchnorm, seed, range);
      cur = w.back();
    }
    const int top = cur;
    if (cfg_.mode == TaskMode::classify) {
      int in = top;
      for (std::size_t i = 0; i < cfg_.head_widths.size(); ++i) {
        std::string prefix = "head." + std::to_string(i);
        store_.init_uniform(prefix + ".W", {in, cfg_.head_widths[i]}, seed, range);
        store_.init_uniform(prefix + ".b", {cfg_.head_widths[i]}, seed, range);
        in = cfg_.head_widths[i];
      }
    } else {
      int dcur = 2 * top;  // top features concatenated with the tiled global
      for (int i = 0; i < cfg_.attention_layers; ++i) {
        int in = dcur + encoder_width(cfg_.attention_layers - 1 - i) + gpn_width;
        const auto& w = cfg_.decoder_transform_widths[i];
        register_mlp("dec." + std::to_string(i), in, w, cfg_.use_batchnorm, seed, range);
        dcur = w.back();
      }
      int in = dcur + cfg_.in_channels;
      for (std::size_t i = 0; i < cfg_.head_widths.size(); ++i) {
        std::string prefix = "seghead." + std::to_string(i);
        bool last = i + 1 == cfg_.head_widths.size();
        if (last || !cfg_.use_batchnorm) {
          store_.init_uniform(prefix + ".W", {in, cfg_.head_widths[i]}, seed, range);
          store_.init_uniform(prefix + ".b", {cfg_.head_widths[i]}, seed, range);
        } else {
          register_mlp_layer(prefix, in, cfg_.head_widths[i], true, seed, range);
        }
        in = cfg_.head_widths[i];
      }
    }
  }

  // Test fixture: mis-scales part of the attention backward pass.
  void set_corrupt_attention_backward(bool v) { corrupt_attention_backward_ = v; }

  struct Activations {
    geometry::NodeSet nodes;
    geometry::KnnGraph graph;
    geometry::LocalGroup group;
    std::vector<std::vector<Real>> attention_scores;  // per encoder layer, M x K
    std::vector<std::vector<Real>> layer_values;      // per-layer node features
  };

  struct EncodeResult {
    geometry::NodeSet nodes;
    geometry::KnnGraph graph;
    geometry::LocalGroup group;
    std::vector<Tensor<Real>> layer_features;  // f0 (local) .. fT
    Tensor<Real> global_feature;               // 1 x top width
    Tensor<Real> global_graph_per_node;        // M x 2*gw (undefined when disabled)
    Tensor<Real> raw_channels;                 // N x C (undefined when C == 0)
    int point_count = 0;
  };

  // Shared per-point MLP over each node's normalized local point set,
  // max-pooled over the set members.
  Tensor<Real> local_structure_feature(Tape<Real>& tape, const geometry::LocalGroup& group,
                                       bool train) {
    const int m = group.node_count();
    const int l = group.l;
    const int c = group.channel_count;
    if (c != cfg_.in_channels) {
      throw std::invalid_argument("local_structure_feature: channel count does not match config");
    }
    const int point_dim = 3 + c;
    std::vector<Real> vals(static_cast<std::size_t>(m) * l * point_dim);
    for (int i = 0; i < m * l; ++i) {
      for (int dcoord = 0; dcoord < 3; ++dcoord) {
        vals[static_cast<std::size_t>(i) * point_dim + dcoord] =
            Real(group.normalized_coords[static_cast<std::size_t>(i) * 3 + dcoord]);
      }
      for (int ch = 0; ch < c; ++ch) {
        vals[static_cast<std::size_t>(i) * point_dim + 3 + ch] =
            Real(group.member_channels[static_cast<std::size_t>(i) * c + ch]);
      }
    }
    Tensor<Real> x = Tensor<Real>::from({m * l, point_dim}, std::move(vals));
    Tensor<Real> h = mlp_forward(tape, x, "local", static_cast<int>(cfg_.local_mlp_widths.size()),
                                 cfg_.use_batchnorm, train);
    return diff::max_reduce(tape, h, m);
  }

  // Attention aggregation followed by the layer's 2-layer transform.
  Tensor<Real> point_attention_layer(Tape<Real>& tape, Tensor<Real> f,
                                     const geometry::KnnGraph& graph, int layer_id, bool train,
                                     std::vector<Real>* scores_out = nullptr) {
    Tensor<Real> agg = point_attention_aggregate(tape, f, graph, cfg_.softmax_attention, scores_out,
                                                 corrupt_attention_backward_);
    return mlp_forward(tape, agg, "attn." + std::to_string(layer_id), 2, cfg_.use_batchnorm, train);
  }

  // Decoder-side attention layer (same form, its own parameters).
  Tensor<Real> decoder_attention_layer(Tape<Real>& tape, Tensor<Real> f,
                                       const geometry::KnnGraph& graph, int layer_id, bool train) {
    Tensor<Real> agg = point_attention_aggregate(tape, f, graph, cfg_.softmax_attention,
                                                 static_cast<std::vector<Real>*>(nullptr),
                                                 corrupt_attention_backward_);
    return mlp_forward(tape, agg, "dec." + std::to_string(layer_id), 2, cfg_.use_batchnorm, train);
  }

  // Simplified per-node pointnet on node coordinates: shared 2-layer MLP over
  // each node's centered (K+1)-point star, max over the star, then max over
  // all nodes. Returns (per-node local||global concat, global feature).
  std::pair<Tensor<Real>, Tensor<Real>> global_point_graph(Tape<Real>& tape,
                                                           const geometry::NodeSet& nodes,
                                                           const geometry::KnnGraph& graph,
                                                           bool train) {
    const int m = nodes.size();
    const int k = graph.k;
    const int star = k + 1;
    std::vector<Real> vals(static_cast<std::size_t>(m) * star * 3);
    for (int j = 0; j < m; ++j) {
      const int* nbr = graph.row(j);
      // row 0 of each star is the node itself (centered to zero)
      for (int i = 1; i < star; ++i) {
        std::size_t base = (static_cast<std::size_t>(j) * star + i) * 3;
        for (int dcoord = 0; dcoord < 3; ++dcoord) {
          vals[base + dcoord] =
              Real(nodes.coords[nbr[i - 1]][dcoord] - nodes.coords[j][dcoord]);
        }
      }
    }
    Tensor<Real> x = Tensor<Real>::from({m * star, 3}, std::move(vals));
    Tensor<Real> h = mlp_forward(tape, x, "global", 2, cfg_.use_batchnorm, train);
    Tensor<Real> local = diff::max_reduce(tape, h, m);
    Tensor<Real> global = diff::max_reduce(tape, local, 1);
    Tensor<Real> per_node = diff::concat_cols<Real>(tape, {local, diff::tile_rows(tape, global, m)});
    return {per_node, global};
  }

  EncodeResult encode(Tape<Real>& tape, const geometry::PointCloud& cloud, bool train,
                      Activations* acts = nullptr) {
    cloud.validate();
    if (cloud.size() < cfg_.m_nodes) {
      throw std::invalid_argument("encode: cloud has fewer points than m_nodes");
    }
    if (cloud.channel_count != cfg_.in_channels) {
      throw std::invalid_argument("encode: cloud channel count does not match config");
    }

    EncodeResult enc;
    enc.point_count = cloud.size();
    int seed = cfg_.fps_seed >= 0 ? cfg_.fps_seed : geometry::geometric_seed_index(cloud);
    enc.nodes = geometry::farthest_point_sample(cloud, cfg_.m_nodes, seed);
    enc.graph = geometry::knn_graph(enc.nodes, cfg_.k_neighbors);
    enc.group = geometry::group_local(cloud, enc.nodes, cfg_.l_group);

    Tensor<Real> cur = local_structure_feature(tape, enc.group, train);
    enc.layer_features.push_back(cur);

    Tensor<Real> gpn;
    if (cfg_.use_global_graph) {
      auto [per_node, global] = global_point_graph(tape, enc.nodes, enc.graph, train);
      gpn = per_node;
      enc.global_graph_per_node = per_node;
      (void)global;
    }

    if (acts) {
      acts->nodes = enc.nodes;
      acts->graph = enc.graph;
      acts->group = enc.group;
      acts->layer_values.push_back(cur.values());
    }

    for (int i = 0; i < cfg_.attention_layers; ++i) {
      Tensor<Real> fin = cfg_.use_global_graph
                             ? diff::concat_cols<Real>(tape, {cur, gpn})
                             : cur;
      std::vector<Real> scores;
      cur = point_attention_layer(tape, fin, enc.graph, i, train, acts ? &scores : nullptr);
      enc.layer_features.push_back(cur);
      if (acts) {
        acts->attention_scores.push_back(std::move(scores));
        acts->layer_values.push_back(cur.values());
      }
    }

    enc.global_feature = diff::max_reduce(tape, cur, 1);
    if (cloud.has_channels()) {
      std::vector<Real> ch(cloud.channels.begin(), cloud.channels.end());
      enc.raw_channels = Tensor<Real>::from({cloud.size(), cloud.channel_count}, std::move(ch));
    }
    return enc;
  }

  // FC head over the pooled global feature; dropout active in train mode.
  Tensor<Real> head_forward(Tape<Real>& tape, Tensor<Real> pooled, bool train, Rng* rng) {
    Tensor<Real> cur = pooled;
    for (std::size_t i = 0; i < cfg_.head_widths.size(); ++i) {
      std::string prefix = "head." + std::to_string(i);
      cur = diff::linear(tape, cur, store_.get(prefix + ".W"), store_.get(prefix + ".b"));
      if (i + 1 < cfg_.head_widths.size()) {
        cur = diff::relu(tape, cur);
        if (train && cfg_.dropout > 0.0) {
          if (!rng) throw std::invalid_argument("head_forward: dropout in train mode needs an rng");
          cur = diff::dropout(tape, cur, cfg_.dropout, true, *rng);
        }
      }
    }
    return cur;
  }

  Tensor<Real> classify_forward(Tape<Real>& tape, const geometry::PointCloud& cloud, bool train,
                                Rng* rng = nullptr, Activations* acts = nullptr) {
    if (cfg_.mode != TaskMode::classify) {
      throw std::invalid_argument("classify_forward: config mode is not classify");
    }
    EncodeResult enc = encode(tape, cloud, train, acts);
    return head_forward(tape, enc.global_feature, train, rng);
  }

  // Mirror of the encoder: attention layers on the same graph, each fed the
  // running features concatenated with the matching encoder layer (top
  // first) and the global point graph output.
  Tensor<Real> decode(Tape<Real>& tape, EncodeResult& enc, bool train) {
    if (cfg_.mode != TaskMode::segment) {
      throw std::invalid_argument("decode: config mode is not segment");
    }
    if (enc.layer_features.empty() || !enc.global_feature.defined()) {
      throw std::invalid_argument("decode: missing encoder state");
    }
    const int m = cfg_.m_nodes;
    Tensor<Real> cur = diff::concat_cols<Real>(
        tape, {enc.layer_features.back(), diff::tile_rows(tape, enc.global_feature, m)});
    for (int i = 0; i < cfg_.attention_layers; ++i) {
      std::vector<Tensor<Real>> parts{cur, enc.layer_features[cfg_.attention_layers - 1 - i]};
      if (cfg_.use_global_graph) parts.push_back(enc.global_graph_per_node);
      Tensor<Real> fin = diff::concat_cols<Real>(tape, parts);
      cur = decoder_attention_layer(tape, fin, enc.graph, i, train);
    }
    return cur;
  }

  Tensor<Real> segment_forward(Tape<Real>& tape, const geometry::PointCloud& cloud, bool train,
                               Rng* rng = nullptr, Activations* acts = nullptr) {
    (void)rng;
    if (cfg_.mode != TaskMode::segment) {
      throw std::invalid_argument("segment_forward: config mode is not segment");
    }
    EncodeResult enc = encode(tape, cloud, train, acts);
    Tensor<Real> node_features = decode(tape, enc, train);

    geometry::IdwWeights w =
        geometry::idw_weights(cloud.coords, enc.graph.node_coords, cfg_.idw_m, cfg_.idw_power);
    Tensor<Real> per_point = idw_apply(tape, node_features, w, cloud.size());
    if (enc.raw_channels.defined()) {
      per_point = diff::concat_cols<Real>(tape, {per_point, enc.raw_channels});
    }

    Tensor<Real> cur = per_point;
    for (std::size_t i = 0; i < cfg_.head_widths.size(); ++i) {
      std::string prefix = "seghead." + std::to_string(i);
      bool last = i + 1 == cfg_.head_widths.size();
      cur = diff::linear(tape, cur, store_.get(prefix + ".W"), store_.get(prefix + ".b"));
      if (!last) {
        if (cfg_.use_batchnorm) {
          diff::BatchNormState<Real> state{store_.get(prefix + ".bn.running_mean"),
                                           store_.get(prefix + ".bn.running_var")};
          cur = diff::batch_norm_ex(tape, cur, store_.get(prefix + ".bn.gamma"),
                                    store_.get(prefix + ".bn.beta"), state,
                                    /*use_batch_stats=*/true, /*update_running=*/train);
        }
        cur = diff::relu(tape, cur);
      }
    }
    return cur;
  }

 private:
  int encoder_width(int layer_index) const {
    // layer_features[i] width: f0 is the local feature, f_{i>0} comes from
    // attention layer i-1.
    if (layer_index == 0) return cfg_.local_mlp_widths.back();
    return cfg_.attention_transform_widths[layer_index - 1].back();
  }

  void register_mlp_layer(const std::string& prefix, int in, int out, bool with_norm,
                          std::uint64_t seed, double range) {
    store_.init_uniform(prefix + ".W", {in, out}, seed, range);
    store_.init_uniform(prefix + ".b", {out}, seed, range);
    if (with_norm) {
      Tensor<Real>& gamma = store_.create(prefix + ".bn.gamma", {out});
      std::fill(gamma.values().begin(), gamma.values().end(), Real(1));
      store_.create(prefix + ".bn.beta", {out});
      store_.create(prefix + ".bn.running_mean", {out}, /*trainable=*/false);
      Tensor<Real>& rv = store_.create(prefix + ".bn.running_var", {out}, /*trainable=*/false);
      std::fill(rv.values().begin(), rv.values().end(), Real(1));
    }
  }

  void register_mlp(const std::string& name, int in, const std::vector<int>& widths,
                    bool with_norm, std::uint64_t seed, double range) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
      register_mlp_layer(name + "." + std::to_string(i), in, widths[i], with_norm, seed, range);
      in = widths[i];
    }
  }

  Tensor<Real> mlp_forward(Tape<Real>& tape, Tensor<Real> x, const std::string& name, int layers,
                           bool with_norm, bool train) {
    Tensor<Real> cur = x;
    for (int i = 0; i < layers; ++i) {
      std::string prefix = name + "." + std::to_string(i);
      cur = diff::linear(tape, cur, store_.get(prefix + ".W"), store_.get(prefix + ".b"));
      if (with_norm) {
        // Each forward sees a single sample, so the row axis (nodes / group
        // members) is the statistics axis in both modes; running averages
        // are still tracked during training for external consumers.
        diff::BatchNormState<Real> state{store_.get(prefix + ".bn.running_mean"),
                                         store_.get(prefix + ".bn.running_var")};
        cur = diff::batch_norm_ex(tape, cur, store_.get(prefix + ".bn.gamma"),
                                  store_.get(prefix + ".bn.beta"), state,
                                  /*use_batch_stats=*/true, /*update_running=*/train);
      }
      cur = diff::relu(tape, cur);
    }
    return cur;
  }

  ModelConfig cfg_;
  diff::ParameterStore<Real> store_;
  bool corrupt_attention_backward_ = false;
};

}  // namespace agcn::model
