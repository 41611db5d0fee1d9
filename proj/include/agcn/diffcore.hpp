#pragma once

// Forward operators with hand-written backward passes, named parameter
// storage with Adam state, checkpoint serialization, and the central
// finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "agcn/common.hpp"
#include "agcn/tensor.hpp"

namespace agcn::diff {

// ---------------------------------------------------------------------------
// Operators

// y = x W + b for x: B x Din, W: Din x Dout, b: Dout.
template <class Real>
Tensor<Real> linear(Tape<Real>& tape, Tensor<Real> x, Tensor<Real> w, Tensor<Real> b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(0) ||
      w.dim(1) != b.dim(0)) {
    throw std::invalid_argument("linear: shape mismatch");
  }
  const int rows = x.dim(0), din = x.dim(1), dout = w.dim(1);
  Tensor<Real> y = Tensor<Real>::zeros({rows, dout});

  const Real* xp = x.data();
  const Real* wp = w.data();
  const Real* bp = b.data();
  Real* yp = y.data();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    Real* yr = yp + static_cast<std::size_t>(r) * dout;
    for (int j = 0; j < dout; ++j) yr[j] = bp[j];
    const Real* xr = xp + static_cast<std::size_t>(r) * din;
    for (int i = 0; i < din; ++i) {
      Real xi = xr[i];
      const Real* wr = wp + static_cast<std::size_t>(i) * dout;
      for (int j = 0; j < dout; ++j) yr[j] += xi * wr[j];
    }
  }

  tape.push([x, w, b, y, rows, din, dout]() mutable {
    const Real* g = y.grad();
    const Real* xp = x.data();
    const Real* wp = w.data();
    Real* xg = x.grad();
    Real* wg = w.grad();
    Real* bg = b.grad();
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
      const Real* gr = g + static_cast<std::size_t>(r) * dout;
      Real* xgr = xg + static_cast<std::size_t>(r) * din;
      for (int i = 0; i < din; ++i) {
        const Real* wr = wp + static_cast<std::size_t>(i) * dout;
        Real acc = 0;
        for (int j = 0; j < dout; ++j) acc += gr[j] * wr[j];
        xgr[i] += acc;
      }
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < din; ++i) {
      Real* wgr = wg + static_cast<std::size_t>(i) * dout;
      for (int r = 0; r < rows; ++r) {
        Real xi = xp[static_cast<std::size_t>(r) * din + i];
        const Real* gr = g + static_cast<std::size_t>(r) * dout;
        for (int j = 0; j < dout; ++j) wgr[j] += xi * gr[j];
      }
    }
    for (int j = 0; j < dout; ++j) {
      Real acc = 0;
      for (int r = 0; r < rows; ++r) acc += g[static_cast<std::size_t>(r) * dout + j];
      bg[j] += acc;
    }
  });
  return y;
}

// Elementwise max(0, x); subgradient at exactly 0 is 0.
template <class Real>
Tensor<Real> relu(Tape<Real>& tape, Tensor<Real> x) {
  Tensor<Real> y = Tensor<Real>::zeros(x.shape());
  const long n = x.size();
  const Real* xp = x.data();
  Real* yp = y.data();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) yp[i] = xp[i] > Real(0) ? xp[i] : Real(0);

  tape.push([x, y, n]() mutable {
    const Real* g = y.grad();
    const Real* xp = x.data();
    Real* xg = x.grad();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
      if (xp[i] > Real(0)) xg[i] += g[i];
    }
  });
  return y;
}

// Per-feature running statistics of a batch_norm layer.
template <class Real>
struct BatchNormState {
  Tensor<Real> running_mean;
  Tensor<Real> running_var;
};

// Normalization over the row axis with epsilon 1e-5. use_batch_stats picks
// the statistics source (current rows vs the running averages);
// update_running folds the current statistics into the running averages
// with momentum 0.9. The two-argument train/eval wrapper below maps train
// to (true, true) and eval to (false, false).
template <class Real>
Tensor<Real> batch_norm_ex(Tape<Real>& tape, Tensor<Real> x, Tensor<Real> gamma, Tensor<Real> beta,
                           BatchNormState<Real>& state, bool use_batch_stats,
                           bool update_running) {
  if (x.rank() != 2 || gamma.rank() != 1 || gamma.dim(0) != x.dim(1) ||
      beta.dim(0) != x.dim(1)) {
    throw std::invalid_argument("batch_norm: shape mismatch");
  }
  const bool train = use_batch_stats;
  const int rows = x.dim(0), d = x.dim(1);
  const Real eps = Real(1e-5);
  const Real momentum = Real(0.9);
  if (train && rows < 2) throw std::invalid_argument("batch_norm: batch statistics require B >= 2");

  Tensor<Real> y = Tensor<Real>::zeros(x.shape());
  auto xhat = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(rows) * d);
  auto inv_std = std::make_shared<std::vector<Real>>(d);

  const Real* xp = x.data();
  const Real* gp = gamma.data();
  const Real* bp = beta.data();
  Real* yp = y.data();

  if (train) {
    Real* rm = state.running_mean.data();
    Real* rv = state.running_var.data();
#pragma omp parallel for schedule(static)
    for (int j = 0; j < d; ++j) {
      Real mean = 0;
      for (int r = 0; r < rows; ++r) mean += xp[static_cast<std::size_t>(r) * d + j];
      mean /= Real(rows);
      Real var = 0;
      for (int r = 0; r < rows; ++r) {
        Real c = xp[static_cast<std::size_t>(r) * d + j] - mean;
        var += c * c;
      }
      var /= Real(rows);
      Real is = Real(1) / std::sqrt(var + eps);
      (*inv_std)[j] = is;
      for (int r = 0; r < rows; ++r) {
        std::size_t idx = static_cast<std::size_t>(r) * d + j;
        Real xh = (xp[idx] - mean) * is;
        (*xhat)[idx] = xh;
        yp[idx] = gp[j] * xh + bp[j];
      }
      if (update_running) {
        rm[j] = momentum * rm[j] + (Real(1) - momentum) * mean;
        rv[j] = momentum * rv[j] + (Real(1) - momentum) * var;
      }
    }
  } else {
    const Real* rm = state.running_mean.data();
    const Real* rv = state.running_var.data();
#pragma omp parallel for schedule(static)
    for (int j = 0; j < d; ++j) {
      Real is = Real(1) / std::sqrt(rv[j] + eps);
      (*inv_std)[j] = is;
      for (int r = 0; r < rows; ++r) {
        std::size_t idx = static_cast<std::size_t>(r) * d + j;
        Real xh = (xp[idx] - rm[j]) * is;
        (*xhat)[idx] = xh;
        yp[idx] = gp[j] * xh + bp[j];
      }
    }
  }

  tape.push([x, gamma, beta, y, xhat, inv_std, rows, d, train]() mutable {
    const Real* g = y.grad();
    const Real* gp = gamma.data();
    Real* xg = x.grad();
    Real* gg = gamma.grad();
    Real* bg = beta.grad();
#pragma omp parallel for schedule(static)
    for (int j = 0; j < d; ++j) {
      Real sum_g = 0, sum_gxh = 0;
      for (int r = 0; r < rows; ++r) {
        std::size_t idx = static_cast<std::size_t>(r) * d + j;
        sum_g += g[idx];
        sum_gxh += g[idx] * (*xhat)[idx];
      }
      gg[j] += sum_gxh;
      bg[j] += sum_g;
      Real scale = gp[j] * (*inv_std)[j];
      if (train) {
        Real mg = sum_g / Real(rows);
        Real mgxh = sum_gxh / Real(rows);
        for (int r = 0; r < rows; ++r) {
          std::size_t idx = static_cast<std::size_t>(r) * d + j;
          xg[idx] += scale * (g[idx] - mg - (*xhat)[idx] * mgxh);
        }
      } else {
        for (int r = 0; r < rows; ++r) {
          std::size_t idx = static_cast<std::size_t>(r) * d + j;
          xg[idx] += scale * g[idx];
        }
      }
    }
  });
  return y;
}

// Standard two-mode batch normalization: train normalizes with (and folds
// into the running averages) the batch statistics, eval uses the running
// averages.
template <class Real>
Tensor<Real> batch_norm(Tape<Real>& tape, Tensor<Real> x, Tensor<Real> gamma, Tensor<Real> beta,
                        BatchNormState<Real>& state, bool train) {
  return batch_norm_ex(tape, x, gamma, beta, state, train, train);
}

// Inverted dropout: train mode zeroes elements with probability p and
// scales survivors by 1/(1-p); eval mode is the identity.
template <class Real>
Tensor<Real> dropout(Tape<Real>& tape, Tensor<Real> x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (!train || p == 0.0) return x;

  const long n = x.size();
  auto mask = std::make_shared<std::vector<Real>>(n);
  const Real scale = Real(1.0 / (1.0 - p));
  // Mask generation stays serial so the rng stream is thread-independent.
  for (long i = 0; i < n; ++i) (*mask)[i] = rng.uniform(0.0, 1.0) < p ? Real(0) : scale;

  Tensor<Real> y = Tensor<Real>::zeros(x.shape());
  const Real* xp = x.data();
  Real* yp = y.data();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) yp[i] = xp[i] * (*mask)[i];

  tape.push([x, y, mask, n]() mutable {
    const Real* g = y.grad();
    Real* xg = x.grad();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) xg[i] += g[i] * (*mask)[i];
  });
  return y;
}

// Max over groups of rows: x is (G*R) x D, output G x D. Row g of the
// output is the elementwise max over rows [g*R, (g+1)*R); ties route the
// gradient to the lowest row index. argmax_out, when given, receives the
// winning absolute row per (group, feature).
template <class Real>
Tensor<Real> max_reduce(Tape<Real>& tape, Tensor<Real> x, int groups,
                        std::vector<int>* argmax_out = nullptr) {
  if (x.rank() != 2 || groups < 1 || x.dim(0) % groups != 0) {
    throw std::invalid_argument("max_reduce: rows not divisible into groups");
  }
  const int rows_per_group = x.dim(0) / groups;
  const int d = x.dim(1);
  if (rows_per_group < 1) throw std::invalid_argument("max_reduce: empty reduction axis");

  Tensor<Real> y = Tensor<Real>::zeros({groups, d});
  auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(groups) * d);

  const Real* xp = x.data();
  Real* yp = y.data();
#pragma omp parallel for schedule(static)
  for (int g = 0; g < groups; ++g) {
    for (int j = 0; j < d; ++j) {
      int base_row = g * rows_per_group;
      Real best = xp[static_cast<std::size_t>(base_row) * d + j];
      int best_row = base_row;
      for (int r = 1; r < rows_per_group; ++r) {
        Real v = xp[static_cast<std::size_t>(base_row + r) * d + j];
        if (v > best) {
          best = v;
          best_row = base_row + r;
        }
      }
      yp[static_cast<std::size_t>(g) * d + j] = best;
      (*argmax)[static_cast<std::size_t>(g) * d + j] = best_row;
    }
  }
  if (argmax_out) *argmax_out = *argmax;

  tape.push([x, y, argmax, groups, d]() mutable {
    const Real* g = y.grad();
    Real* xg = x.grad();
    for (long i = 0; i < static_cast<long>(groups) * d; ++i) {
      int row = (*argmax)[i];
      int j = static_cast<int>(i % d);
      xg[static_cast<std::size_t>(row) * d + j] += g[i];
    }
  });
  return y;
}

// Mean over the batch of -log softmax(logits)[target], with max-subtraction
// stabilization. Returns a 1x1 tensor.
template <class Real>
Tensor<Real> softmax_cross_entropy(Tape<Real>& tape, Tensor<Real> logits,
                                   const std::vector<int>& targets) {
  if (logits.rank() != 2 || static_cast<int>(targets.size()) != logits.dim(0)) {
    throw std::invalid_argument("softmax_cross_entropy: batch size mismatch");
  }
  const int b = logits.dim(0), c = logits.dim(1);
  for (int t : targets) {
    if (t < 0 || t >= c) throw std::invalid_argument("softmax_cross_entropy: target out of range");
  }

  auto probs = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(b) * c);
  const Real* lp = logits.data();
  Real total = 0;
  for (int r = 0; r < b; ++r) {
    const Real* row = lp + static_cast<std::size_t>(r) * c;
    Real mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    Real denom = 0;
    for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    Real log_denom = std::log(denom);
    for (int j = 0; j < c; ++j) {
      (*probs)[static_cast<std::size_t>(r) * c + j] = std::exp(row[j] - mx) / denom;
    }
    total += -(row[targets[r]] - mx - log_denom);
  }
  Tensor<Real> loss = Tensor<Real>::from({1}, {total / Real(b)});

  tape.push([logits, loss, probs, targets, b, c]() mutable {
    const Real g = loss.grad()[0];
    Real* lg = logits.grad();
    for (int r = 0; r < b; ++r) {
      for (int j = 0; j < c; ++j) {
        Real delta = (*probs)[static_cast<std::size_t>(r) * c + j] - (j == targets[r] ? Real(1) : Real(0));
        lg[static_cast<std::size_t>(r) * c + j] += g * delta / Real(b);
      }
    }
  });
  return loss;
}

// Column-wise concatenation of tensors with identical row counts.
template <class Real>
Tensor<Real> concat_cols(Tape<Real>& tape, const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int rows = parts[0].dim(0);
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows) throw std::invalid_argument("concat_cols: row mismatch");
    total += p.dim(1);
  }
  Tensor<Real> y = Tensor<Real>::zeros({rows, total});
  Real* yp = y.data();
  int offset = 0;
  for (const auto& p : parts) {
    const int d = p.dim(1);
    const Real* pp = p.data();
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
      std::memcpy(yp + static_cast<std::size_t>(r) * total + offset,
                  pp + static_cast<std::size_t>(r) * d, sizeof(Real) * d);
    }
    offset += d;
  }

  auto parts_copy = parts;
  tape.push([parts_copy, y, rows, total]() mutable {
    const Real* g = y.grad();
    int offset = 0;
    for (auto& p : parts_copy) {
      const int d = p.dim(1);
      Real* pg = p.grad();
      for (int r = 0; r < rows; ++r) {
        const Real* gr = g + static_cast<std::size_t>(r) * total + offset;
        Real* pr = pg + static_cast<std::size_t>(r) * d;
        for (int j = 0; j < d; ++j) pr[j] += gr[j];
      }
      offset += d;
    }
  });
  return y;
}

// Repeats a 1 x D row n times; backward sums the row gradients.
template <class Real>
Tensor<Real> tile_rows(Tape<Real>& tape, Tensor<Real> x, int n) {
  if (x.rank() != 2 || x.dim(0) != 1) throw std::invalid_argument("tile_rows: input must be 1 x D");
  const int d = x.dim(1);
  Tensor<Real> y = Tensor<Real>::zeros({n, d});
  const Real* xp = x.data();
  Real* yp = y.data();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < n; ++r) std::memcpy(yp + static_cast<std::size_t>(r) * d, xp, sizeof(Real) * d);

  tape.push([x, y, n, d]() mutable {
    const Real* g = y.grad();
    Real* xg = x.grad();
    for (int j = 0; j < d; ++j) {
      Real acc = 0;
      for (int r = 0; r < n; ++r) acc += g[static_cast<std::size_t>(r) * d + j];
      xg[j] += acc;
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Parameter storage + Adam

template <class Real>
struct ParameterEntry {
  Tensor<Real> value;
  std::vector<Real> moment1;
  std::vector<Real> moment2;
  long step = 0;
  bool trainable = true;
};

template <class Real>
class ParameterStore {
 public:
  Tensor<Real>& create(const std::string& name, std::vector<int> shape, bool trainable = true) {
    if (entries_.count(name)) throw std::invalid_argument("ParameterStore: duplicate name " + name);
    ParameterEntry<Real> e;
    e.value = Tensor<Real>::zeros(std::move(shape), true);
    e.trainable = trainable;
    if (trainable) {
      e.moment1.assign(e.value.size(), Real(0));
      e.moment2.assign(e.value.size(), Real(0));
    }
    auto [it, ok] = entries_.emplace(name, std::move(e));
    return it->second.value;
  }

  // Registers a tensor with i.i.d. uniform values on [-range, range], drawn
  // from a generator seeded by (name, seed).
  Tensor<Real>& init_uniform(const std::string& name, std::vector<int> shape, std::uint64_t seed,
                             double range = 0.001, bool trainable = true) {
    Tensor<Real>& t = create(name, std::move(shape), trainable);
    Rng rng(hash_name(name, seed));
    for (Real& v : t.values()) v = Real(rng.uniform(-range, range));
    return t;
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  Tensor<Real>& get(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("ParameterStore: unknown name " + name);
    return it->second.value;
  }
  ParameterEntry<Real>& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("ParameterStore: unknown name " + name);
    return it->second;
  }
  std::map<std::string, ParameterEntry<Real>>& entries() { return entries_; }
  const std::map<std::string, ParameterEntry<Real>>& entries() const { return entries_; }

  void zero_grad() {
    for (auto& [name, e] : entries_) e.value.zero_grad();
  }

  // Bias-corrected Adam on every trainable entry; gradients are zeroed
  // afterwards.
  void adam_update(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    for (auto& [name, e] : entries_) {
      if (!e.trainable) continue;
      e.step += 1;
      const Real b1 = Real(beta1), b2 = Real(beta2);
      const Real corr1 = Real(1) - Real(std::pow(beta1, static_cast<double>(e.step)));
      const Real corr2 = Real(1) - Real(std::pow(beta2, static_cast<double>(e.step)));
      Real* v = e.value.data();
      Real* g = e.value.grad();
      const long n = e.value.size();
      for (long i = 0; i < n; ++i) {
        e.moment1[i] = b1 * e.moment1[i] + (Real(1) - b1) * g[i];
        e.moment2[i] = b2 * e.moment2[i] + (Real(1) - b2) * g[i] * g[i];
        Real mhat = e.moment1[i] / corr1;
        Real vhat = e.moment2[i] / corr2;
        v[i] -= Real(lr) * mhat / (std::sqrt(vhat) + Real(eps));
      }
    }
    zero_grad();
  }

  long total_parameters() const {
    long n = 0;
    for (const auto& [name, e] : entries_) {
      if (e.trainable) n += e.value.size();
    }
    return n;
  }

  std::map<std::string, std::vector<Real>> snapshot() const {
    std::map<std::string, std::vector<Real>> out;
    for (const auto& [name, e] : entries_) out[name] = e.value.values();
    return out;
  }
  void restore(const std::map<std::string, std::vector<Real>>& snap) {
    for (auto& [name, e] : entries_) {
      auto it = snap.find(name);
      if (it == snap.end()) throw std::invalid_argument("restore: missing parameter " + name);
      e.value.values() = it->second;
    }
  }

 private:
  std::map<std::string, ParameterEntry<Real>> entries_;
};

// ---------------------------------------------------------------------------
// Checkpoint format: "AGCNCKPT\n" magic, int32 version (1 = values only,
// 2 = values + optimizer state), then per parameter: uint32 name length,
// name bytes, uint32 rank, uint32 dims, float32 little-endian values.
// Version 2 appends int64 step and the two float32 moment arrays.

inline constexpr char kCheckpointMagic[] = "AGCNCKPT\n";

template <class Real>
void save_checkpoint(const ParameterStore<Real>& store, const std::string& path,
                     bool include_optimizer_state = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, 9);
  std::int32_t version = include_optimizer_state ? 2 : 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  for (const auto& [name, e] : store.entries()) {
    std::uint32_t len = static_cast<std::uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(name.data(), len);
    std::uint32_t rank = static_cast<std::uint32_t>(e.value.rank());
    out.write(reinterpret_cast<const char*>(&rank), 4);
    for (int i = 0; i < e.value.rank(); ++i) {
      std::uint32_t dim = static_cast<std::uint32_t>(e.value.dim(i));
      out.write(reinterpret_cast<const char*>(&dim), 4);
    }
    for (Real v : e.value.values()) {
      float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
    if (include_optimizer_state) {
      std::int64_t step = e.step;
      out.write(reinterpret_cast<const char*>(&step), 8);
      auto write_moments = [&](const std::vector<Real>& m) {
        std::uint32_t count = static_cast<std::uint32_t>(m.size());
        out.write(reinterpret_cast<const char*>(&count), 4);
        for (Real v : m) {
          float f = static_cast<float>(v);
          out.write(reinterpret_cast<const char*>(&f), 4);
        }
      };
      write_moments(e.moment1);
      write_moments(e.moment2);
    }
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

struct RawCheckpointEntry {
  std::vector<int> dims;
  std::vector<float> values;
  std::int64_t step = 0;
  std::vector<float> moment1;
  std::vector<float> moment2;
};

struct RawCheckpoint {
  std::int32_t version = 0;
  std::map<std::string, RawCheckpointEntry> entries;
};

inline RawCheckpoint read_checkpoint_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_checkpoint: cannot open " + path);
  char magic[9];
  in.read(magic, 9);
  if (!in || std::memcmp(magic, kCheckpointMagic, 9) != 0) {
    throw std::runtime_error("read_checkpoint: bad magic in " + path);
  }
  RawCheckpoint raw;
  in.read(reinterpret_cast<char*>(&raw.version), 4);
  if (!in || (raw.version != 1 && raw.version != 2)) {
    throw std::runtime_error("read_checkpoint: unsupported version in " + path);
  }
  while (true) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    if (in.eof()) break;
    if (!in) throw std::runtime_error("read_checkpoint: truncated file " + path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint32_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), 4);
    RawCheckpointEntry entry;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint32_t dim = 0;
      in.read(reinterpret_cast<char*>(&dim), 4);
      entry.dims.push_back(static_cast<int>(dim));
      count *= dim;
    }
    entry.values.resize(count);
    in.read(reinterpret_cast<char*>(entry.values.data()), 4 * count);
    if (raw.version >= 2) {
      in.read(reinterpret_cast<char*>(&entry.step), 8);
      auto read_moments = [&](std::vector<float>& m) {
        std::uint32_t mc = 0;
        in.read(reinterpret_cast<char*>(&mc), 4);
        m.resize(mc);
        in.read(reinterpret_cast<char*>(m.data()), 4 * mc);
      };
      read_moments(entry.moment1);
      read_moments(entry.moment2);
    }
    if (!in) throw std::runtime_error("read_checkpoint: truncated file " + path);
    raw.entries[name] = std::move(entry);
  }
  return raw;
}

// Fills the store's existing entries from a checkpoint file; every store
// entry must be present with matching shape.
template <class Real>
void load_checkpoint(ParameterStore<Real>& store, const std::string& path) {
  RawCheckpoint raw = read_checkpoint_raw(path);
  for (auto& [name, e] : store.entries()) {
    auto it = raw.entries.find(name);
    if (it == raw.entries.end()) {
      throw std::runtime_error("load_checkpoint: parameter " + name + " missing from " + path);
    }
    if (it->second.dims != e.value.shape()) {
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    }
    auto& vals = e.value.values();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = Real(it->second.values[i]);
    if (raw.version >= 2 && e.trainable) {
      e.step = it->second.step;
      for (std::size_t i = 0; i < e.moment1.size(); ++i) {
        e.moment1[i] = Real(it->second.moment1[i]);
        e.moment2[i] = Real(it->second.moment2[i]);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  long elements_checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  bool all_below(double tol) const { return max_rel_err <= tol; }
};

// loss_fn(with_grad) evaluates the model loss; when with_grad it must also
// run the backward pass so analytic gradients land in the parameter grads.
// Checks a deterministic evenly spaced subsample of each trainable
// parameter's elements against central finite differences.
template <class Real>
GradCheckReport gradient_check(ParameterStore<Real>& store,
                               const std::function<Real(bool)>& loss_fn, double step = 1e-5,
                               int max_elems_per_param = 5) {
  store.zero_grad();
  loss_fn(true);

  // Snapshot analytic grads before FD evaluations disturb anything.
  std::map<std::string, std::vector<Real>> analytic;
  for (auto& [name, e] : store.entries()) {
    if (e.trainable) analytic[name] = e.value.grad_values();
  }

  GradCheckReport report;
  for (auto& [name, e] : store.entries()) {
    if (!e.trainable) continue;
    GradCheckEntry entry;
    entry.name = name;
    const long n = e.value.size();
    const long count = std::min<long>(n, max_elems_per_param);
    for (long s = 0; s < count; ++s) {
      long i = count == 1 ? 0 : s * (n - 1) / (count - 1);
      Real saved = e.value.data()[i];
      e.value.data()[i] = saved + Real(step);
      double lp = static_cast<double>(loss_fn(false));
      e.value.data()[i] = saved - Real(step);
      double lm = static_cast<double>(loss_fn(false));
      e.value.data()[i] = saved;
      double fd = (lp - lm) / (2.0 * step);
      double a = static_cast<double>(analytic[name][i]);
      double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-2});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      ++entry.elements_checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  store.zero_grad();
  return report;
}

}  // namespace agcn::diff
