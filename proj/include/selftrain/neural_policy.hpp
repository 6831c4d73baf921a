#pragma once

// Neural autoregressive policy: one tanh hidden layer over a fixed window of
// embedded tokens, projected to vocabulary logits. Small enough that the
// gradient of the weighted negative log-likelihood is derived by hand, which
// keeps training dependency-free and exactly checkable against finite
// differences.
//
//   window ids -> embed rows (left-padded with zeros)
//   u = concat of W embeddings            (W*d)
//   h = tanh(Wh u + bh)                   (H)
//   z = Wo h + bo                         (V logits)

#include <cmath>
#include <span>
#include <vector>

#include "selftrain/common.hpp"
#include "selftrain/rng.hpp"
#include "selftrain/types.hpp"

namespace selftrain {

struct Matrix {
  size_t rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& at(size_t r, size_t c) { return a[r * cols + c]; }
  double at(size_t r, size_t c) const { return a[r * cols + c]; }
  std::span<double> row(size_t r) { return {a.data() + r * cols, cols}; }
  std::span<const double> row(size_t r) const { return {a.data() + r * cols, cols}; }
};

class NeuralPolicy;

// Mirrors the parameter shapes of NeuralPolicy.
struct NeuralGradient {
  Matrix d_embed;
  Matrix d_hidden_w;
  std::vector<double> d_hidden_b;
  Matrix d_out_w;
  std::vector<double> d_out_b;

  void scale(double s) {
    for (double& v : d_embed.a) v *= s;
    for (double& v : d_hidden_w.a) v *= s;
    for (double& v : d_hidden_b) v *= s;
    for (double& v : d_out_w.a) v *= s;
    for (double& v : d_out_b) v *= s;
  }

  void add(const NeuralGradient& o) {
    for (size_t i = 0; i < d_embed.a.size(); ++i) d_embed.a[i] += o.d_embed.a[i];
    for (size_t i = 0; i < d_hidden_w.a.size(); ++i) d_hidden_w.a[i] += o.d_hidden_w.a[i];
    for (size_t i = 0; i < d_hidden_b.size(); ++i) d_hidden_b[i] += o.d_hidden_b[i];
    for (size_t i = 0; i < d_out_w.a.size(); ++i) d_out_w.a[i] += o.d_out_w.a[i];
    for (size_t i = 0; i < d_out_b.size(); ++i) d_out_b[i] += o.d_out_b[i];
  }
};

class NeuralPolicy {
 public:
  NeuralPolicy() = default;

  NeuralPolicy(Vocab vocab, int window, int embed_dim, int hidden_dim,
               uint64_t init_seed)
      : vocab_(std::move(vocab)),
        window_(window),
        embed_dim_(embed_dim),
        hidden_dim_(hidden_dim) {
    vocab_.validate();
    if (window_ < 1 || embed_dim_ < 1 || hidden_dim_ < 1)
      throw InvalidArgument("neural policy: dimensions must be positive");
    const size_t v = static_cast<size_t>(vocab_.size());
    embed_ = Matrix(v, static_cast<size_t>(embed_dim_));
    hidden_w_ = Matrix(static_cast<size_t>(hidden_dim_),
                       static_cast<size_t>(window_ * embed_dim_));
    hidden_b_.assign(static_cast<size_t>(hidden_dim_), 0.0);
    out_w_ = Matrix(v, static_cast<size_t>(hidden_dim_));
    out_b_.assign(v, 0.0);

    auto engine = rng::make_engine(init_seed);
    auto init = [&engine](std::vector<double>& w, double scale) {
      for (double& x : w) x = (rng::unit(engine) - 0.5) * 2.0 * scale;
    };
    init(embed_.a, 0.5);
    init(hidden_w_.a, 1.0 / std::sqrt(static_cast<double>(window_ * embed_dim_)));
    init(out_w_.a, 1.0 / std::sqrt(static_cast<double>(hidden_dim_)));
  }

  const Vocab& vocab() const { return vocab_; }
  int window() const { return window_; }
  int embed_dim() const { return embed_dim_; }
  int hidden_dim() const { return hidden_dim_; }

  Matrix& embed() { return embed_; }
  const Matrix& embed() const { return embed_; }
  Matrix& hidden_w() { return hidden_w_; }
  const Matrix& hidden_w() const { return hidden_w_; }
  std::vector<double>& hidden_b() { return hidden_b_; }
  const std::vector<double>& hidden_b() const { return hidden_b_; }
  Matrix& out_w() { return out_w_; }
  const Matrix& out_w() const { return out_w_; }
  std::vector<double>& out_b() { return out_b_; }
  const std::vector<double>& out_b() const { return out_b_; }

  NeuralGradient zero_gradient() const {
    NeuralGradient g;
    g.d_embed = Matrix(embed_.rows, embed_.cols);
    g.d_hidden_w = Matrix(hidden_w_.rows, hidden_w_.cols);
    g.d_hidden_b.assign(hidden_b_.size(), 0.0);
    g.d_out_w = Matrix(out_w_.rows, out_w_.cols);
    g.d_out_b.assign(out_b_.size(), 0.0);
    return g;
  }

  // Scratch buffers reused across forward/backward calls in hot loops.
  struct Workspace {
    std::vector<double> input;   // W*d, zero-padded on the left
    std::vector<double> hidden;  // H, tanh activations
    std::vector<double> logits;  // V
    std::vector<double> probs;   // V (backward only)
    std::vector<double> d_hidden;
    std::vector<double> d_pre;
    std::vector<double> d_input;
  };

  // Windowed ids shorter than the window occupy the rightmost slots; padded
  // positions contribute zero input (and receive no embedding gradient).
  void forward(std::span<const TokenId> window_ids, Workspace& ws) const {
    const size_t wd = static_cast<size_t>(window_ * embed_dim_);
    ws.input.assign(wd, 0.0);
    const size_t n = window_ids.size();
    const size_t offset = static_cast<size_t>(window_) - n;
    for (size_t j = 0; j < n; ++j) {
      auto e = embed_.row(static_cast<size_t>(window_ids[j]));
      std::copy(e.begin(), e.end(),
                ws.input.begin() + static_cast<std::ptrdiff_t>(
                                       (offset + j) * static_cast<size_t>(embed_dim_)));
    }
    const size_t H = hidden_b_.size();
    ws.hidden.resize(H);
    for (size_t i = 0; i < H; ++i) {
      double acc = hidden_b_[i];
      auto wrow = hidden_w_.row(i);
      for (size_t j = 0; j < wd; ++j) acc += wrow[j] * ws.input[j];
      ws.hidden[i] = std::tanh(acc);
    }
    const size_t V = out_b_.size();
    ws.logits.resize(V);
    for (size_t i = 0; i < V; ++i) {
      double acc = out_b_[i];
      auto wrow = out_w_.row(i);
      for (size_t j = 0; j < H; ++j) acc += wrow[j] * ws.hidden[j];
      ws.logits[i] = acc;
    }
  }

  std::vector<double> context_logits(std::span<const TokenId> ctx) const {
    thread_local Workspace ws;
    std::span<const TokenId> w = ctx;
    if (w.size() > static_cast<size_t>(window_))
      w = w.subspan(w.size() - static_cast<size_t>(window_));
    forward(w, ws);
    return ws.logits;
  }

 private:
  Vocab vocab_;
  int window_ = 8;
  int embed_dim_ = 8;
  int hidden_dim_ = 32;
  Matrix embed_;
  Matrix hidden_w_;
  std::vector<double> hidden_b_;
  Matrix out_w_;
  std::vector<double> out_b_;
};

// Gradient of the summed weighted negative log-likelihood
//   f(theta) = -sum_i w_i * log p_theta(y_i | x_i)
// over the batch (no normalization: duplicating examples while halving their
// weights leaves the gradient unchanged). Callers that want a mean divide by
// the batch size themselves. When loss_sum is given it receives f(theta),
// computed from the same forward passes.
inline NeuralGradient weighted_nll_gradient(const NeuralPolicy& policy,
                                            std::span<const TrainExample> batch,
                                            NeuralPolicy::Workspace& ws,
                                            double* loss_sum = nullptr) {
  if (batch.empty()) throw InvalidArgument("weighted_nll_gradient: empty batch");
  for (const auto& ex : batch)
    if (!(ex.weight >= 0.0) || !std::isfinite(ex.weight))
      throw InvalidArgument("weighted_nll_gradient: weights must be finite and >= 0");

  NeuralGradient grad = policy.zero_gradient();
  if (loss_sum) *loss_sum = 0.0;
  const size_t V = static_cast<size_t>(policy.vocab().size());
  const size_t H = static_cast<size_t>(policy.hidden_dim());
  const size_t d = static_cast<size_t>(policy.embed_dim());
  const size_t W = static_cast<size_t>(policy.window());

  for (const auto& ex : batch) {
    if (ex.weight == 0.0) continue;
    for (size_t t = 0; t < ex.target.ids.size(); ++t) {
      auto win = context_window(ex.input.ids,
                                std::span<const TokenId>(ex.target.ids.data(), t),
                                policy.window());
      policy.forward(win, ws);

      // softmax at temperature 1
      double mx = ws.logits[0];
      for (double z : ws.logits) mx = std::max(mx, z);
      ws.probs.resize(V);
      double total = 0.0;
      for (size_t i = 0; i < V; ++i) {
        ws.probs[i] = std::exp(ws.logits[i] - mx);
        total += ws.probs[i];
      }
      for (double& p : ws.probs) p /= total;

      // d f / d logits = w * (p - onehot(y_t))
      const size_t target = static_cast<size_t>(ex.target.ids[t]);
      if (loss_sum) *loss_sum -= ex.weight * std::log(ws.probs[target]);
      ws.d_hidden.assign(H, 0.0);
      for (size_t i = 0; i < V; ++i) {
        double dz = ex.weight * (ws.probs[i] - (i == target ? 1.0 : 0.0));
        grad.d_out_b[i] += dz;
        auto gw = grad.d_out_w.row(i);
        auto ow = policy.out_w().row(i);
        for (size_t j = 0; j < H; ++j) {
          gw[j] += dz * ws.hidden[j];
          ws.d_hidden[j] += dz * ow[j];
        }
      }

      // through tanh
      ws.d_pre.resize(H);
      for (size_t i = 0; i < H; ++i)
        ws.d_pre[i] = ws.d_hidden[i] * (1.0 - ws.hidden[i] * ws.hidden[i]);

      const size_t wd = W * d;
      ws.d_input.assign(wd, 0.0);
      for (size_t i = 0; i < H; ++i) {
        double dp = ws.d_pre[i];
        if (dp == 0.0) continue;
        grad.d_hidden_b[i] += dp;
        auto gw = grad.d_hidden_w.row(i);
        auto hw = policy.hidden_w().row(i);
        for (size_t j = 0; j < wd; ++j) {
          gw[j] += dp * ws.input[j];
          ws.d_input[j] += dp * hw[j];
        }
      }

      // scatter into embeddings of the real (non-padded) window positions
      const size_t n = win.size();
      const size_t offset = W - n;
      for (size_t j = 0; j < n; ++j) {
        auto ge = grad.d_embed.row(static_cast<size_t>(win[j]));
        const size_t base = (offset + j) * d;
        for (size_t k = 0; k < d; ++k) ge[k] += ws.d_input[base + k];
      }
    }
  }
  return grad;
}

inline NeuralGradient weighted_nll_gradient(const NeuralPolicy& policy,
                                            std::span<const TrainExample> batch) {
  NeuralPolicy::Workspace ws;
  return weighted_nll_gradient(policy, batch, ws);
}

// theta <- theta - step * gradient. Descent on the NLL, ascent on the
// reward-weighted log-likelihood objective.
inline void apply_update(NeuralPolicy& policy, const NeuralGradient& g, double step) {
  auto axpy = [step](std::vector<double>& w, const std::vector<double>& gv) {
    for (size_t i = 0; i < w.size(); ++i) {
      w[i] -= step * gv[i];
      if (!std::isfinite(w[i]))
        throw TrainingDiverged("apply_update: non-finite parameter");
    }
  };
  axpy(policy.embed().a, g.d_embed.a);
  axpy(policy.hidden_w().a, g.d_hidden_w.a);
  axpy(policy.hidden_b(), g.d_hidden_b);
  axpy(policy.out_w().a, g.d_out_w.a);
  axpy(policy.out_b(), g.d_out_b);
}

}  // namespace selftrain
