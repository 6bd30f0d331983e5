// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Desk-scale training harness. Every quantized linear layer runs its forward
// (FPROP), input-gradient (DGRAD) and weight-gradient (WGRAD) products
// through mx_matmul, each operand taken from the MX copy blocked along that
// product's contraction dimension:
//
//   FPROP  Y  = X  . W^T     A_row x transpose(W_row)
//   DGRAD  dX = dY . W       G_row x W_col
//   WGRAD  dW = dY^T . X     transpose(G_col) x A_col
//
// All six copies are quantized from the binary32 masters at every use.
// Master weights, biases and optimizer state stay binary32.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <type_traits>
#include <utility>
#include <vector>

#include "mxfp/block_quant.hpp"
#include "mxfp/error.hpp"
#include "mxfp/matrix.hpp"
#include "mxfp/minifloat.hpp"
#include "mxfp/mx_linalg.hpp"
#include "mxfp/random.hpp"
#include "mxfp/scaling.hpp"

namespace mxfp::train {

/// Per-role element formats. An empty role is a pass-through quantizer: the
/// binary32 tensor is used as-is but still carries its axis tag, so operand
/// selection is checked the same way with quantization disabled.
struct QuantConfig {
  std::optional<Format> weight;
  std::optional<Format> activation;
  std::optional<Format> gradient;
  ScaleRounding mode = ScaleRounding::RoundUp;
  MmaPath path = MmaPath::ExactScaled;

  static QuantConfig pass_through() { return {}; }
  /// cfg1: one format for W, A and G.
  static QuantConfig uniform(Format f, ScaleRounding mode = ScaleRounding::RoundUp) {
    return {f, f, f, mode, MmaPath::ExactScaled};
  }
  /// cfg2: E4M3 for W and A, E5M2 for G.
  static QuantConfig e5m2_gradients(ScaleRounding mode = ScaleRounding::RoundUp) {
    return {Format::E4M3, Format::E4M3, Format::E5M2, mode, MmaPath::ExactScaled};
  }

  bool enabled() const { return weight || activation || gradient; }
};

/// A GEMM operand: a tensor plus the axis its copy was blocked along.
template <typename Real>
struct Operand {
  Axis axis = Axis::Row;
  Matrix<Real> dense;          // pass-through values (empty when mx is set)
  std::optional<MxTensor> mx;  // quantized copy

  std::size_t rows() const { return mx ? mx->rows : dense.rows(); }
  std::size_t cols() const { return mx ? mx->cols : dense.cols(); }

  Matrix<Real> values() const { return mx ? matrix_cast<Real>(dequantize_tensor(*mx)) : dense; }
};

template <typename Real>
Operand<Real> make_operand(const Matrix<Real>& m, Axis axis, std::optional<Format> format, ScaleRounding mode,
                           QuantStats* stats = nullptr) {
  Operand<Real> op;
  op.axis = axis;
  if (!format) {
    op.dense = m;
    return op;
  }
  Matrix<float> source;
  if constexpr (std::is_same_v<Real, float>) source = m;
  else source = matrix_cast<float>(m);
  auto q = quantize_tensor(source, axis, *format, mode);
  if (stats) *stats += q.stats;
  op.mx = std::move(q.tensor);
  return op;
}

template <typename Real>
Operand<Real> transpose(const Operand<Real>& op) {
  Operand<Real> t;
  t.axis = flip(op.axis);
  if (op.mx) t.mx = transpose(*op.mx);
  else t.dense = mxfp::transpose(op.dense);
  return t;
}

/// a x b with a blocked along rows and b along columns; AxisMismatch otherwise.
/// Two MX operands go through mx_matmul; anything else runs the same blocked
/// accumulation order in Real.
template <typename Real>
Matrix<Real> operand_matmul(const Operand<Real>& a, const Operand<Real>& b, MmaPath path) {
  if (a.axis != Axis::Row)
    throw Error(ErrorCode::AxisMismatch, "left operand must be the row-blocked copy", "a.axis");
  if (b.axis != Axis::Col)
    throw Error(ErrorCode::AxisMismatch, "right operand must be the column-blocked copy", "b.axis");
  if (a.cols() != b.rows()) throw Error(ErrorCode::AxisMismatch, "contraction lengths differ", "shape");
  if (a.mx && b.mx) {
    auto c = mx_matmul(*a.mx, *b.mx, MmaConfig{path});
    if constexpr (std::is_same_v<Real, float>) return c;
    else return matrix_cast<Real>(c);
  }
  return blocked_matmul(a.values(), b.values());
}

/// FNV-1a over a copy's codes and scales (or raw bytes when pass-through).
template <typename Real>
std::uint64_t content_hash(const Operand<Real>& op) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint8_t byte) {
    h ^= byte;
    h *= 1099511628211ull;
  };
  if (op.mx) {
    for (auto s : op.mx->scales) mix(s.bits);
    for (auto c : op.mx->codes) mix(c);
  } else {
    for (Real v : op.dense.values()) {
      const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
      for (std::size_t i = 0; i < sizeof(Real); ++i) mix(p[i]);
    }
  }
  return h;
}

/// Which stored weight copy feeds FPROP/DGRAD. SwapWeightCopies exists to
/// show that picking the wrong copy is rejected.
enum class CopyWiring { Correct, SwapWeightCopies };

template <typename Real>
struct Param {
  std::string name;
  Matrix<Real>* value;
  Matrix<Real>* grad;
};

/// Y = X W^T + b with W stored (out x in). Layers built with
/// quantizable=false always run in full precision regardless of config.
template <typename Real>
class QuantizedLinear {
 public:
  QuantizedLinear(std::size_t in, std::size_t out, GaussianSource& rng, bool quantizable = true,
                  std::string name = "linear")
      : name_(std::move(name)),
        quantizable_(quantizable),
        weight_(out, in),
        bias_(1, out),
        grad_weight_(out, in),
        grad_bias_(1, out) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (auto& w : weight_.values()) w = static_cast<Real>(stddev * rng());
  }

  void set_config(const QuantConfig& cfg) { cfg_ = cfg; }
  void set_wiring(CopyWiring wiring) { wiring_ = wiring; }
  bool quantizable() const { return quantizable_; }
  const QuantConfig& effective_config() const { return quantizable_ ? cfg_ : kFullPrecision; }

  Matrix<Real> forward(const Matrix<Real>& x) {
    if (x.cols() != weight_.cols()) throw Error(ErrorCode::LengthMismatch, "input width mismatch", name_);
    const QuantConfig& cfg = effective_config();
    stats_ = {};
    act_row_ = make_operand(x, Axis::Row, cfg.activation, cfg.mode, &stats_);
    act_col_ = make_operand(x, Axis::Col, cfg.activation, cfg.mode, &stats_);
    weight_row_ = make_operand(weight_, Axis::Row, cfg.weight, cfg.mode, &stats_);
    weight_col_ = make_operand(weight_, Axis::Col, cfg.weight, cfg.mode, &stats_);

    const auto& fprop_weight = wiring_ == CopyWiring::Correct ? weight_row_ : weight_col_;
    Matrix<Real> y = operand_matmul(act_row_, transpose(fprop_weight), cfg.path);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += bias_(0, j);
    return y;
  }

  /// Fills grad_weight/grad_bias and returns dL/dX.
  Matrix<Real> backward(const Matrix<Real>& grad_out) {
    const QuantConfig& cfg = effective_config();
    grad_row_ = make_operand(grad_out, Axis::Row, cfg.gradient, cfg.mode, &stats_);
    grad_col_ = make_operand(grad_out, Axis::Col, cfg.gradient, cfg.mode, &stats_);

    const auto& dgrad_weight = wiring_ == CopyWiring::Correct ? weight_col_ : weight_row_;
    Matrix<Real> grad_in = operand_matmul(grad_row_, dgrad_weight, cfg.path);
    grad_weight_ = operand_matmul(transpose(grad_col_), act_col_, cfg.path);
    grad_bias_ = Matrix<Real>(1, bias_.cols());
    for (std::size_t i = 0; i < grad_out.rows(); ++i)
      for (std::size_t j = 0; j < grad_out.cols(); ++j) grad_bias_(0, j) += grad_out(i, j);
    return grad_in;
  }

  Matrix<Real>& weight() { return weight_; }
  const Matrix<Real>& weight() const { return weight_; }
  Matrix<Real>& bias() { return bias_; }
  const Matrix<Real>& bias() const { return bias_; }
  const Matrix<Real>& grad_weight() const { return grad_weight_; }
  const Matrix<Real>& grad_bias() const { return grad_bias_; }
  const QuantStats& step_stats() const { return stats_; }
  const std::string& name() const { return name_; }

  std::uint64_t weight_row_hash() const { return content_hash(weight_row_); }
  std::uint64_t weight_col_hash() const { return content_hash(weight_col_); }

  void append_params(std::vector<Param<Real>>& out) {
    out.push_back({name_ + ".weight", &weight_, &grad_weight_});
    out.push_back({name_ + ".bias", &bias_, &grad_bias_});
  }

 private:
  inline static const QuantConfig kFullPrecision{};

  std::string name_;
  bool quantizable_;
  QuantConfig cfg_;
  CopyWiring wiring_ = CopyWiring::Correct;
  Matrix<Real> weight_, bias_, grad_weight_, grad_bias_;
  Operand<Real> weight_row_, weight_col_, act_row_, act_col_, grad_row_, grad_col_;
  QuantStats stats_;
};

namespace detail {

template <typename Real>
Matrix<Real> relu(const Matrix<Real>& x) {
  Matrix<Real> y = x;
  for (auto& v : y.values()) v = v > Real(0) ? v : Real(0);
  return y;
}

template <typename Real>
Matrix<Real> relu_backward(const Matrix<Real>& grad, const Matrix<Real>& pre) {
  Matrix<Real> g = grad;
  auto gv = g.values();
  auto pv = pre.values();
  for (std::size_t i = 0; i < gv.size(); ++i)
    if (!(pv[i] > Real(0))) gv[i] = Real(0);
  return g;
}

template <typename Real>
void add_into(Matrix<Real>& dst, const Matrix<Real>& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace detail

/// input -> [linear -> relu] x hidden_layers -> linear. Every linear layer is
/// quantized when the config enables it.
template <typename Real>
class Mlp {
 public:
  Mlp(std::size_t input, std::size_t hidden, std::size_t hidden_layers, std::size_t output, GaussianSource& rng) {
    if (hidden_layers < 1 || hidden_layers > 2)
      throw Error(ErrorCode::InvalidField, "hidden_layers must be 1 or 2", "hidden_layers");
    std::size_t width = input;
    for (std::size_t l = 0; l < hidden_layers; ++l) {
      layers_.emplace_back(width, hidden, rng, true, "fc" + std::to_string(l));
      width = hidden;
    }
    layers_.emplace_back(width, output, rng, true, "fc" + std::to_string(hidden_layers));
  }

  void set_config(const QuantConfig& cfg) {
    for (auto& l : layers_) l.set_config(cfg);
  }

  Matrix<Real> forward(const Matrix<Real>& x) {
    pre_.clear();
    Matrix<Real> h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = layers_[l].forward(h);
      if (l + 1 < layers_.size()) {
        pre_.push_back(h);
        h = detail::relu(h);
      }
    }
    return h;
  }

  void backward(const Matrix<Real>& grad_out) {
    Matrix<Real> g = grad_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      g = layers_[l].backward(g);
      if (l > 0) g = detail::relu_backward(g, pre_[l - 1]);
    }
  }

  std::vector<Param<Real>> params() {
    std::vector<Param<Real>> p;
    for (auto& l : layers_) l.append_params(p);
    return p;
  }

  QuantStats step_stats() const {
    QuantStats s;
    for (const auto& l : layers_) s += l.step_stats();
    return s;
  }

  std::vector<QuantizedLinear<Real>>& layers() { return layers_; }
  QuantizedLinear<Real>& first_quantized_layer() { return layers_.front(); }

 private:
  std::vector<QuantizedLinear<Real>> layers_;
  std::vector<Matrix<Real>> pre_;
};

/// One single-head transformer block between a full-precision input
/// embedding and a full-precision output head:
///
///   h0 = embed(x)
///   h1 = h0 + proj(attention(qkv(h0)))
///   h2 = h1 + down(relu(up(h1)))
///   y  = head(h2)
///
/// qkv, proj, up and down are quantized; the score/value products, softmax,
/// activation, residual adds, embed and head stay full precision. Rows of x
/// are grouped into consecutive sequences of seq_len tokens.
template <typename Real>
class AttentionBlock {
 public:
  AttentionBlock(std::size_t input, std::size_t model_dim, std::size_t ffn_dim, std::size_t output,
                 std::size_t seq_len, GaussianSource& rng)
      : seq_len_(seq_len),
        model_dim_(model_dim),
        embed_(input, model_dim, rng, false, "embed"),
        qkv_(model_dim, 3 * model_dim, rng, true, "qkv"),
        proj_(model_dim, model_dim, rng, true, "proj"),
        up_(model_dim, ffn_dim, rng, true, "ffn_up"),
        down_(ffn_dim, model_dim, rng, true, "ffn_down"),
        head_(model_dim, output, rng, false, "head") {
    if (seq_len == 0) throw Error(ErrorCode::InvalidField, "seq_len must be positive", "seq_len");
    // Residual branches start small so the block begins near identity.
    for (auto* l : {&proj_, &down_})
      for (auto& w : l->weight().values()) w *= Real(0.5);
  }

  void set_config(const QuantConfig& cfg) {
    for (auto* l : all_layers()) l->set_config(cfg);
  }

  Matrix<Real> forward(const Matrix<Real>& x) {
    if (x.rows() % seq_len_ != 0)
      throw Error(ErrorCode::LengthMismatch, "row count is not a multiple of seq_len", "x");
    h0_ = embed_.forward(x);
    qkv_out_ = qkv_.forward(h0_);
    attn_ = Matrix<Real>(x.rows(), model_dim_);
    probs_.clear();
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(model_dim_));
    for (std::size_t s = 0; s < x.rows() / seq_len_; ++s) {
      auto [q, k, v] = split_qkv(s);
      Matrix<Real> scores = matmul(q, mxfp::transpose(k));
      for (auto& e : scores.values()) e *= scale;
      Matrix<Real> p = softmax_rows(scores);
      Matrix<Real> o = matmul(p, v);
      for (std::size_t t = 0; t < seq_len_; ++t)
        for (std::size_t d = 0; d < model_dim_; ++d) attn_(s * seq_len_ + t, d) = o(t, d);
      probs_.push_back(std::move(p));
    }
    h1_ = h0_;
    detail::add_into(h1_, proj_.forward(attn_));
    up_pre_ = up_.forward(h1_);
    h2_ = h1_;
    detail::add_into(h2_, down_.forward(detail::relu(up_pre_)));
    return head_.forward(h2_);
  }

  void backward(const Matrix<Real>& grad_out) {
    Matrix<Real> dh2 = head_.backward(grad_out);
    Matrix<Real> dh1 = dh2;
    detail::add_into(dh1, up_.backward(detail::relu_backward(down_.backward(dh2), up_pre_)));
    Matrix<Real> dattn = proj_.backward(dh1);
    Matrix<Real> dh0 = dh1;

    const Real scale = Real(1) / std::sqrt(static_cast<Real>(model_dim_));
    Matrix<Real> dqkv(qkv_out_.rows(), qkv_out_.cols());
    for (std::size_t s = 0; s < probs_.size(); ++s) {
      auto [q, k, v] = split_qkv(s);
      const Matrix<Real>& p = probs_[s];
      Matrix<Real> d_o(seq_len_, model_dim_);
      for (std::size_t t = 0; t < seq_len_; ++t)
        for (std::size_t d = 0; d < model_dim_; ++d) d_o(t, d) = dattn(s * seq_len_ + t, d);
      Matrix<Real> dv = matmul(mxfp::transpose(p), d_o);
      Matrix<Real> dp = matmul(d_o, mxfp::transpose(v));
      Matrix<Real> ds(seq_len_, seq_len_);
      for (std::size_t i = 0; i < seq_len_; ++i) {
        Real dot = 0;
        for (std::size_t j = 0; j < seq_len_; ++j) dot += dp(i, j) * p(i, j);
        for (std::size_t j = 0; j < seq_len_; ++j) ds(i, j) = p(i, j) * (dp(i, j) - dot) * scale;
      }
      Matrix<Real> dq = matmul(ds, k);
      Matrix<Real> dk = matmul(mxfp::transpose(ds), q);
      for (std::size_t t = 0; t < seq_len_; ++t)
        for (std::size_t d = 0; d < model_dim_; ++d) {
          dqkv(s * seq_len_ + t, d) = dq(t, d);
          dqkv(s * seq_len_ + t, model_dim_ + d) = dk(t, d);
          dqkv(s * seq_len_ + t, 2 * model_dim_ + d) = dv(t, d);
        }
    }
    detail::add_into(dh0, qkv_.backward(dqkv));
    embed_.backward(dh0);
  }

  std::vector<Param<Real>> params() {
    std::vector<Param<Real>> p;
    for (auto* l : all_layers()) l->append_params(p);
    return p;
  }

  QuantStats step_stats() const {
    QuantStats s;
    for (const auto* l : {&embed_, &qkv_, &proj_, &up_, &down_, &head_}) s += l->step_stats();
    return s;
  }

  QuantizedLinear<Real>& first_quantized_layer() { return qkv_; }
  std::vector<QuantizedLinear<Real>*> all_layers() { return {&embed_, &qkv_, &proj_, &up_, &down_, &head_}; }

 private:
  std::tuple<Matrix<Real>, Matrix<Real>, Matrix<Real>> split_qkv(std::size_t s) const {
    Matrix<Real> q(seq_len_, model_dim_), k(seq_len_, model_dim_), v(seq_len_, model_dim_);
    for (std::size_t t = 0; t < seq_len_; ++t)
      for (std::size_t d = 0; d < model_dim_; ++d) {
        q(t, d) = qkv_out_(s * seq_len_ + t, d);
        k(t, d) = qkv_out_(s * seq_len_ + t, model_dim_ + d);
        v(t, d) = qkv_out_(s * seq_len_ + t, 2 * model_dim_ + d);
      }
    return {std::move(q), std::move(k), std::move(v)};
  }

  static Matrix<Real> softmax_rows(const Matrix<Real>& x) {
    Matrix<Real> y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      Real m = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < x.cols(); ++j) m = std::max(m, x(i, j));
      Real sum = 0;
      for (std::size_t j = 0; j < x.cols(); ++j) sum += (y(i, j) = std::exp(x(i, j) - m));
      for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) /= sum;
    }
    return y;
  }

  std::size_t seq_len_;
  std::size_t model_dim_;
  QuantizedLinear<Real> embed_, qkv_, proj_, up_, down_, head_;
  Matrix<Real> h0_, qkv_out_, attn_, h1_, up_pre_, h2_;
  std::vector<Matrix<Real>> probs_;
};

/// Mean squared error over all elements and its gradient.
template <typename Real>
Real mse_loss(const Matrix<Real>& pred, const Matrix<Real>& target, Matrix<Real>* grad = nullptr) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error(ErrorCode::LengthMismatch, "prediction and target shapes differ", "target");
  const auto p = pred.values();
  const auto t = target.values();
  const Real n = static_cast<Real>(p.size());
  Real sum = 0;
  if (grad) *grad = Matrix<Real>(pred.rows(), pred.cols());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Real d = p[i] - t[i];
    sum += d * d;
    if (grad) grad->values()[i] = Real(2) * d / n;
  }
  return sum / n;
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradcheckReport {
  double weight_deviation = 0.0;
  double bias_deviation = 0.0;
  double input_deviation = 0.0;

  double max_deviation() const { return std::max({weight_deviation, bias_deviation, input_deviation}); }
  std::string worst_role() const {
    if (weight_deviation >= bias_deviation && weight_deviation >= input_deviation) return "weight";
    return bias_deviation >= input_deviation ? "bias" : "input";
  }
};

namespace detail {

// ||analytic - numeric||_inf / ||numeric||_inf
inline double relative_deviation(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::fabs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::fabs(numeric[i]));
  }
  return diff / std::max(scale, 1e-30);
}

template <typename Real>
std::vector<double> central_differences(Matrix<Real>& target, double step, const auto& loss) {
  std::vector<double> out(target.size());
  auto values = target.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Real saved = values[i];
    values[i] = static_cast<Real>(saved + step);
    const double up = loss();
    values[i] = static_cast<Real>(saved - step);
    const double down = loss();
    values[i] = saved;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

template <typename Real>
std::vector<double> to_doubles(const Matrix<Real>& m) {
  return {m.values().begin(), m.values().end()};
}

}  // namespace detail

/// Compare the layer's analytic gradients against central finite
/// differences of L = sum(R * Y) + 0.5 * sum(Y^2) with a fixed random R.
/// Exact in pass-through mode; with quantization on, the result only
/// reports how far the quantized backward pass is from the true slope.
template <typename Real>
GradcheckReport gradcheck(QuantizedLinear<Real> layer, Matrix<Real> input, std::uint64_t seed = 17,
                          double step = std::is_same_v<Real, double> ? 1e-5 : 1e-2) {
  GaussianSource rng(seed);
  Matrix<Real> probe(input.rows(), layer.weight().rows());
  for (auto& v : probe.values()) v = static_cast<Real>(rng());

  auto loss = [&]() {
    const Matrix<Real> y = layer.forward(input);
    double l = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double yi = y.values()[i];
      l += static_cast<double>(probe.values()[i]) * yi + 0.5 * yi * yi;
    }
    return l;
  };

  const Matrix<Real> y = layer.forward(input);
  Matrix<Real> dy = probe;
  detail::add_into(dy, y);
  const Matrix<Real> dx = layer.backward(dy);
  const auto analytic_w = detail::to_doubles(layer.grad_weight());
  const auto analytic_b = detail::to_doubles(layer.grad_bias());
  const auto analytic_x = detail::to_doubles(dx);

  GradcheckReport r;
  r.weight_deviation = detail::relative_deviation(analytic_w, detail::central_differences(layer.weight(), step, loss));
  r.bias_deviation = detail::relative_deviation(analytic_b, detail::central_differences(layer.bias(), step, loss));
  r.input_deviation = detail::relative_deviation(analytic_x, detail::central_differences(input, step, loss));
  return r;
}

/// Throws GradcheckFailure naming the worst tensor role if over threshold.
inline void require_gradcheck(const GradcheckReport& r, double threshold = 1e-4) {
  if (!(r.max_deviation() < threshold))
    throw Error(ErrorCode::GradcheckFailure,
                r.worst_role() + " gradient deviates by " + std::to_string(r.max_deviation()), r.worst_role());
}

/// Finite-difference check over every parameter of a model under MSE loss.
/// Returns the worst per-parameter relative deviation and its name.
template <typename Model, typename Real>
std::pair<double, std::string> gradcheck_model(Model& model, const Matrix<Real>& x, const Matrix<Real>& target,
                                               double step = 1e-5) {
  auto loss = [&]() { return static_cast<double>(mse_loss(model.forward(x), target)); };
  Matrix<Real> grad;
  mse_loss(model.forward(x), target, &grad);
  model.backward(grad);
  double worst = 0.0;
  std::string worst_name;
  for (auto& p : model.params()) {
    const auto analytic = detail::to_doubles(*p.grad);
    const double dev = detail::relative_deviation(analytic, detail::central_differences(*p.value, step, loss));
    if (dev > worst || worst_name.empty()) {
      worst = dev;
      worst_name = p.name;
    }
  }
  return {worst, worst_name};
}

// ---------------------------------------------------------------------------
// Training loop

enum class ModelKind { Mlp, Attention };

struct TrainConfig {
  ModelKind model = ModelKind::Mlp;
  std::size_t input_dim = 16;
  std::size_t hidden_dim = 64;
  std::size_t hidden_layers = 2;
  std::size_t output_dim = 4;
  std::size_t seq_len = 8;    // attention only; batch counts sequences
  std::size_t ffn_dim = 64;   // attention only
  std::size_t batch = 64;
  std::size_t steps = 2000;
  std::size_t eval_samples = 512;
  float learning_rate = 0.01f;
  float momentum = 0.9f;
  std::uint64_t seed = 1;
  QuantConfig quant;
};

struct TrainResult {
  std::vector<float> loss;            // quantized run, one entry per completed step
  std::vector<float> reference_loss;  // binary32 run on the same data and initialization
  std::vector<float> grad_norm;       // quantized run
  bool diverged = false;
  std::optional<std::size_t> diverged_step;
  float final_eval_loss = 0.0f;
  float reference_final_eval_loss = 0.0f;
  QuantStats quant_stats;  // summed over every quantization of the quantized run
  std::vector<std::pair<std::uint64_t, std::uint64_t>> weight_copy_hashes;  // (W_row, W_col) per step
};

namespace detail {

template <typename Model>
Model build_model(const TrainConfig& cfg, std::uint64_t seed) {
  GaussianSource rng(seed);
  if constexpr (std::is_same_v<Model, Mlp<float>>) {
    return Mlp<float>(cfg.input_dim, cfg.hidden_dim, cfg.hidden_layers, cfg.output_dim, rng);
  } else {
    return AttentionBlock<float>(cfg.input_dim, cfg.hidden_dim, cfg.ffn_dim, cfg.output_dim, cfg.seq_len, rng);
  }
}

inline void check_config(const TrainConfig& cfg) {
  if (cfg.hidden_dim == 0 || cfg.hidden_dim > 256)
    throw Error(ErrorCode::InvalidField, "hidden_dim must be in [1, 256]", "hidden_dim");
  if (cfg.input_dim == 0 || cfg.output_dim == 0 || cfg.batch == 0)
    throw Error(ErrorCode::InvalidField, "dimensions and batch must be positive", "batch");
  if (cfg.steps > 5000) throw Error(ErrorCode::InvalidField, "steps must be at most 5000", "steps");
}

template <typename Model>
void sgd_step(Model& model, std::vector<Matrix<float>>& velocity, float lr, float momentum) {
  auto params = model.params();
  if (velocity.empty())
    for (auto& p : params) velocity.emplace_back(p.value->rows(), p.value->cols());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto v = velocity[i].values();
    auto w = params[i].value->values();
    auto g = params[i].grad->values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = momentum * v[k] + g[k];
      w[k] -= lr * v[k];
    }
  }
}

template <typename Model>
float grad_norm(Model& model) {
  double s = 0.0;
  for (auto& p : model.params())
    for (float g : p.grad->values()) s += static_cast<double>(g) * g;
  return static_cast<float>(std::sqrt(s));
}

template <typename Model>
float eval_loss(Model model, const Matrix<float>& x, const Matrix<float>& y) {
  model.set_config(QuantConfig::pass_through());
  return mse_loss(model.forward(x), y);
}

template <typename Model>
TrainResult run_training(const TrainConfig& cfg) {
  const std::size_t rows_per_sample = cfg.model == ModelKind::Attention ? cfg.seq_len : 1;
  Model teacher = build_model<Model>(cfg, cfg.seed ^ 0x9E3779B97F4A7C15ull);
  teacher.set_config(QuantConfig::pass_through());
  Model reference = build_model<Model>(cfg, cfg.seed);
  reference.set_config(QuantConfig::pass_through());
  Model quantized = reference;
  quantized.set_config(cfg.quant);

  GaussianSource data(cfg.seed + 1);
  auto sample = [&](std::size_t n) {
    Matrix<float> x(n * rows_per_sample, cfg.input_dim);
    for (auto& v : x.values()) v = static_cast<float>(data());
    return std::pair{x, teacher.forward(x)};
  };
  const auto [eval_x, eval_y] = sample(cfg.eval_samples);

  TrainResult result;
  std::vector<Matrix<float>> vel_ref, vel_q;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto [x, y] = sample(cfg.batch);

    Matrix<float> grad;
    const float ref_loss = mse_loss(reference.forward(x), y, &grad);
    reference.backward(grad);
    sgd_step(reference, vel_ref, cfg.learning_rate, cfg.momentum);

    const float q_loss = mse_loss(quantized.forward(x), y, &grad);
    result.reference_loss.push_back(ref_loss);
    result.loss.push_back(q_loss);
    if (!std::isfinite(q_loss)) {
      result.diverged = true;
      result.diverged_step = step;
      break;
    }
    quantized.backward(grad);
    result.quant_stats += quantized.step_stats();
    result.grad_norm.push_back(grad_norm(quantized));
    auto& probe = quantized.first_quantized_layer();
    result.weight_copy_hashes.emplace_back(probe.weight_row_hash(), probe.weight_col_hash());
    sgd_step(quantized, vel_q, cfg.learning_rate, cfg.momentum);
  }

  result.reference_final_eval_loss = eval_loss(reference, eval_x, eval_y);
  result.final_eval_loss = result.diverged ? std::numeric_limits<float>::quiet_NaN()
                                           : eval_loss(quantized, eval_x, eval_y);
  return result;
}

}  // namespace detail

/// Train a quantized model and a binary32 reference side by side on a
/// synthetic teacher-student regression task. A non-finite quantized loss
/// stops the run and sets `diverged`; the traces up to that step are kept.
inline TrainResult train(const TrainConfig& cfg) {
  detail::check_config(cfg);
  if (cfg.model == ModelKind::Mlp) return detail::run_training<Mlp<float>>(cfg);
  return detail::run_training<AttentionBlock<float>>(cfg);
}

}  // namespace mxfp::train
