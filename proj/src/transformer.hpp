// Forward/backward kernels of the toy vision-language model. Private to the
// library: callers go through model.hpp, loss.hpp and train.hpp.
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "esiii/error.hpp"
#include "esiii/model.hpp"

namespace esiii::detail {

inline constexpr double kLnEps = 1e-5;

struct LossTarget {
  std::size_t position = 0;  // row whose logits predict `token`
  TokenId token = 0;
  double weight = 1.0;
};

template <typename T>
Matrix<T> extract_patches(const ModelConfig& cfg, const FloatImage& img) {
  const int p = cfg.patch_size;
  const int g = cfg.grid();
  Matrix<T> out(cfg.num_patches(), cfg.patch_dim());
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      const int row = gy * g + gx;
      int col = 0;
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          for (int c = 0; c < kChannels; ++c)
            out(row, col++) = static_cast<T>(img.at(gx * p + dx, gy * p + dy, c));
    }
  return out;
}

template <typename T>
FloatImage scatter_patches(const ModelConfig& cfg, const Matrix<T>& patches) {
  const int p = cfg.patch_size;
  const int g = cfg.grid();
  FloatImage out(cfg.input_resolution, cfg.input_resolution);
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      const int row = gy * g + gx;
      int col = 0;
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          for (int c = 0; c < kChannels; ++c)
            out.at(gx * p + dx, gy * p + dy, c) = static_cast<double>(patches(row, col++));
    }
  return out;
}

template <typename T>
inline T gelu(T x) {
  constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + std::tanh(k * (x + T(0.044715) * x * x * x)));
}

template <typename T>
inline T gelu_grad(T x) {
  constexpr T k = T(0.7978845608028654);
  const T inner = k * (x + T(0.044715) * x * x * x);
  const T t = std::tanh(inner);
  const T dinner = k * (T(1) + T(3 * 0.044715) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * dinner;
}

// Row-wise layer norm; statistics accumulate in double.
template <typename T>
void layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, Matrix<T>& xhat,
                std::vector<T>& rstd, Matrix<T>& y) {
  const Eigen::Index n = x.rows(), d = x.cols();
  xhat.resize(n, d);
  y.resize(n, d);
  rstd.resize(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    double mean = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) mean += double(x(r, c));
    mean /= double(d);
    double var = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      const double dv = double(x(r, c)) - mean;
      var += dv * dv;
    }
    var /= double(d);
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd[static_cast<std::size_t>(r)] = T(rs);
    for (Eigen::Index c = 0; c < d; ++c) {
      const T h = T((double(x(r, c)) - mean) * rs);
      xhat(r, c) = h;
      y(r, c) = h * gain(0, c) + bias(0, c);
    }
  }
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& xhat, const std::vector<T>& rstd,
                              const Matrix<T>& gain, Matrix<T>* dgain, Matrix<T>* dbias) {
  const Eigen::Index n = dy.rows(), d = dy.cols();
  Matrix<T> dx(n, d);
  if (dgain) {
    dgain->array() += (dy.array() * xhat.array()).colwise().sum();
    dbias->array() += dy.array().colwise().sum();
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    double m1 = 0.0, m2 = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      const double g = double(dy(r, c)) * double(gain(0, c));
      m1 += g;
      m2 += g * double(xhat(r, c));
    }
    m1 /= double(d);
    m2 /= double(d);
    const double rs = double(rstd[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < d; ++c) {
      const double g = double(dy(r, c)) * double(gain(0, c));
      dx(r, c) = T(rs * (g - m1 - double(xhat(r, c)) * m2));
    }
  }
  return dx;
}

template <typename T>
struct LayerCache {
  Matrix<T> x_in, a_hat, a, q, k, v, attn, x_mid, b_hat, b, h_pre, h;
  std::vector<T> rstd1, rstd2;
  std::vector<Matrix<T>> probs;  // per head, causal (lower triangular)
};

template <typename T>
struct ForwardPass {
  Matrix<T> patches;  // num_patches x patch_dim
  Matrix<T> z;        // E(i)
  std::vector<TokenId> ids;
  std::vector<LayerCache<T>> layers;
  Matrix<T> x_final, f_hat, f;
  std::vector<T> rstd_f;
  std::vector<LossTarget> targets;
  std::vector<std::vector<double>> log_probs;  // per target, full row
  std::vector<double> target_logprob;
};

template <typename T>
class Transformer {
 public:
  Transformer(const ModelConfig& cfg, const Weights<T>& w) : cfg_(cfg), w_(w) {}

  Matrix<T> encode(const Matrix<T>& patches, Matrix<T>* z_out = nullptr) const {
    Matrix<T> z = patches * w_.enc_w;
    z.rowwise() += w_.enc_b.row(0);
    Matrix<T> h = z * w_.proj_w;
    h.rowwise() += w_.proj_b.row(0);
    if (z_out) *z_out = std::move(z);
    return h;
  }

  std::size_t sequence_length(std::size_t n_text) const {
    return static_cast<std::size_t>(cfg_.num_patches()) + n_text;
  }

  ForwardPass<T> forward(const Matrix<T>& patches, std::span<const TokenId> ids,
                         std::span<const LossTarget> targets) const {
    ForwardPass<T> fp;
    fp.patches = patches;
    fp.ids.assign(ids.begin(), ids.end());
    fp.targets.assign(targets.begin(), targets.end());
    const int np = cfg_.num_patches();
    const int d = cfg_.d_model;
    const Eigen::Index len = np + static_cast<Eigen::Index>(ids.size());
    if (len > cfg_.max_positions)
      throw ConfigError("sequence of " + std::to_string(len) + " positions exceeds max_positions " +
                        std::to_string(cfg_.max_positions));

    Matrix<T> x(len, d);
    x.topRows(np) = encode(patches, &fp.z);
    for (std::size_t i = 0; i < ids.size(); ++i) x.row(np + Eigen::Index(i)) = w_.tok_emb.row(ids[i]);
    x += w_.pos_emb.topRows(len);

    fp.layers.resize(w_.blocks.size());
    for (std::size_t l = 0; l < w_.blocks.size(); ++l) x = block_forward(w_.blocks[l], x, fp.layers[l]);
    fp.x_final = x;
    layer_norm(x, w_.lnf_g, w_.lnf_b, fp.f_hat, fp.rstd_f, fp.f);

    fp.log_probs.reserve(targets.size());
    for (const auto& t : targets) {
      std::vector<double> logits = head_row(fp.f.row(Eigen::Index(t.position)));
      auto lp = log_softmax(logits);
      fp.target_logprob.push_back(lp[static_cast<std::size_t>(t.token)]);
      fp.log_probs.push_back(std::move(lp));
    }
    return fp;
  }

  // Backward of loss = -sum_t weight_t * log p(token_t). Parameter gradients
  // are accumulated into `grads` when non-null; returns d loss / d patches.
  Matrix<T> backward(const ForwardPass<T>& fp, Weights<T>* grads) const {
    const int np = cfg_.num_patches();
    const Eigen::Index len = fp.f.rows();
    const Eigen::Index vocab = w_.head_w.cols();
    Matrix<T> df = Matrix<T>::Zero(len, cfg_.d_model);
    for (std::size_t i = 0; i < fp.targets.size(); ++i) {
      const auto& t = fp.targets[i];
      Matrix<T> dlogits(1, vocab);
      for (Eigen::Index v = 0; v < vocab; ++v)
        dlogits(0, v) = T(t.weight * std::exp(fp.log_probs[i][static_cast<std::size_t>(v)]));
      dlogits(0, t.token) -= T(t.weight);
      const auto row = Eigen::Index(t.position);
      if (grads) {
        grads->head_w.noalias() += fp.f.row(row).transpose() * dlogits;
        grads->head_b += dlogits;
      }
      df.row(row).noalias() += dlogits * w_.head_w.transpose();
    }
    Matrix<T> dx = layer_norm_backward(df, fp.f_hat, fp.rstd_f, w_.lnf_g,
                                       grads ? &grads->lnf_g : nullptr,
                                       grads ? &grads->lnf_b : nullptr);
    for (std::size_t l = w_.blocks.size(); l-- > 0;)
      dx = block_backward(w_.blocks[l], fp.layers[l], dx, grads ? &grads->blocks[l] : nullptr);

    if (grads) {
      grads->pos_emb.topRows(len) += dx;
      for (std::size_t i = 0; i < fp.ids.size(); ++i)
        grads->tok_emb.row(fp.ids[i]) += dx.row(np + Eigen::Index(i));
    }
    const Matrix<T> dh = dx.topRows(np);
    if (grads) {
      grads->proj_w.noalias() += fp.z.transpose() * dh;
      grads->proj_b += dh.colwise().sum();
    }
    const Matrix<T> dz = dh * w_.proj_w.transpose();
    if (grads) {
      grads->enc_w.noalias() += fp.patches.transpose() * dz;
      grads->enc_b += dz.colwise().sum();
    }
    return dz * w_.enc_w.transpose();
  }

  std::vector<double> head_row(const Eigen::Ref<const Matrix<T>>& f_row) const {
    Matrix<T> logits = f_row * w_.head_w + w_.head_b;
    std::vector<double> out(static_cast<std::size_t>(logits.cols()));
    for (Eigen::Index v = 0; v < logits.cols(); ++v) out[static_cast<std::size_t>(v)] = double(logits(0, v));
    return out;
  }

  // Key/value cache for incremental decoding.
  struct KvCache {
    std::vector<Matrix<T>> k, v;
    Eigen::Index length = 0;
  };

  KvCache make_cache() const {
    KvCache c;
    for (std::size_t l = 0; l < w_.blocks.size(); ++l) {
      c.k.emplace_back(cfg_.max_positions, cfg_.d_model);
      c.v.emplace_back(cfg_.max_positions, cfg_.d_model);
    }
    return c;
  }

  // Appends rows (already embedded, without positions) to the cache and
  // returns their final normalized hidden states.
  Matrix<T> extend(KvCache& cache, Matrix<T> x) const {
    const Eigen::Index n = x.rows();
    const Eigen::Index p0 = cache.length;
    if (p0 + n > cfg_.max_positions)
      throw ConfigError("decode length exceeds max_positions " + std::to_string(cfg_.max_positions));
    x += w_.pos_emb.middleRows(p0, n);
    const int dh = cfg_.head_dim();
    const T scale = T(1.0 / std::sqrt(double(dh)));
    for (std::size_t l = 0; l < w_.blocks.size(); ++l) {
      const auto& b = w_.blocks[l];
      Matrix<T> a_hat, a;
      std::vector<T> rstd;
      layer_norm(x, b.ln1_g, b.ln1_b, a_hat, rstd, a);
      Matrix<T> q = a * b.wq;
      q.rowwise() += b.bq.row(0);
      Matrix<T> k = a * b.wk;
      k.rowwise() += b.bk.row(0);
      Matrix<T> v = a * b.wv;
      v.rowwise() += b.bv.row(0);
      cache.k[l].middleRows(p0, n) = k;
      cache.v[l].middleRows(p0, n) = v;
      const Eigen::Index total = p0 + n;
      Matrix<T> attn(n, cfg_.d_model);
      for (int h = 0; h < cfg_.n_heads; ++h) {
        Matrix<T> s = q.middleCols(h * dh, dh) *
                      cache.k[l].topRows(total).middleCols(h * dh, dh).transpose() * scale;
        for (Eigen::Index i = 0; i < n; ++i) softmax_row(s, i, p0 + i);
        attn.middleCols(h * dh, dh) = s * cache.v[l].topRows(total).middleCols(h * dh, dh);
      }
      Matrix<T> o = attn * b.wo;
      o.rowwise() += b.bo.row(0);
      x += o;
      Matrix<T> bh, bn;
      layer_norm(x, b.ln2_g, b.ln2_b, bh, rstd, bn);
      Matrix<T> hp = bn * b.w1;
      hp.rowwise() += b.b1.row(0);
      hp = hp.unaryExpr([](T t) { return gelu(t); });
      Matrix<T> f = hp * b.w2;
      f.rowwise() += b.b2.row(0);
      x += f;
    }
    cache.length = p0 + n;
    Matrix<T> fh, out;
    std::vector<T> rs;
    layer_norm(x, w_.lnf_g, w_.lnf_b, fh, rs, out);
    return out;
  }

  Matrix<T> embed_tokens(std::span<const TokenId> ids) const {
    Matrix<T> x(Eigen::Index(ids.size()), cfg_.d_model);
    for (std::size_t i = 0; i < ids.size(); ++i) x.row(Eigen::Index(i)) = w_.tok_emb.row(ids[i]);
    return x;
  }

 private:
  // Causal softmax of row i over columns [0, last]; columns beyond are zeroed.
  static void softmax_row(Matrix<T>& s, Eigen::Index i, Eigen::Index last) {
    T mx = -std::numeric_limits<T>::infinity();
    for (Eigen::Index j = 0; j <= last; ++j) mx = std::max(mx, s(i, j));
    double sum = 0.0;
    for (Eigen::Index j = 0; j <= last; ++j) {
      const T e = std::exp(s(i, j) - mx);
      s(i, j) = e;
      sum += double(e);
    }
    const T inv = T(1.0 / sum);
    for (Eigen::Index j = 0; j <= last; ++j) s(i, j) *= inv;
    for (Eigen::Index j = last + 1; j < s.cols(); ++j) s(i, j) = T(0);
  }

  Matrix<T> block_forward(const BlockWeights<T>& b, const Matrix<T>& x, LayerCache<T>& c) const {
    const Eigen::Index len = x.rows();
    const int dh = cfg_.head_dim();
    const T scale = T(1.0 / std::sqrt(double(dh)));
    c.x_in = x;
    layer_norm(x, b.ln1_g, b.ln1_b, c.a_hat, c.rstd1, c.a);
    c.q = c.a * b.wq;
    c.q.rowwise() += b.bq.row(0);
    c.k = c.a * b.wk;
    c.k.rowwise() += b.bk.row(0);
    c.v = c.a * b.wv;
    c.v.rowwise() += b.bv.row(0);
    c.attn.resize(len, cfg_.d_model);
    c.probs.resize(std::size_t(cfg_.n_heads));
    for (int h = 0; h < cfg_.n_heads; ++h) {
      Matrix<T>& p = c.probs[std::size_t(h)];
      p = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose() * scale;
      for (Eigen::Index i = 0; i < len; ++i) softmax_row(p, i, i);
      c.attn.middleCols(h * dh, dh) = p * c.v.middleCols(h * dh, dh);
    }
    c.x_mid = c.attn * b.wo;
    c.x_mid.rowwise() += b.bo.row(0);
    c.x_mid += x;
    layer_norm(c.x_mid, b.ln2_g, b.ln2_b, c.b_hat, c.rstd2, c.b);
    c.h_pre = c.b * b.w1;
    c.h_pre.rowwise() += b.b1.row(0);
    c.h = c.h_pre.unaryExpr([](T t) { return gelu(t); });
    Matrix<T> out = c.h * b.w2;
    out.rowwise() += b.b2.row(0);
    out += c.x_mid;
    return out;
  }

  Matrix<T> block_backward(const BlockWeights<T>& b, const LayerCache<T>& c, const Matrix<T>& dout,
                           BlockWeights<T>* g) const {
    const int dh = cfg_.head_dim();
    const T scale = T(1.0 / std::sqrt(double(dh)));
    // FFN branch.
    if (g) {
      g->w2.noalias() += c.h.transpose() * dout;
      g->b2 += dout.colwise().sum();
    }
    Matrix<T> dh_act = dout * b.w2.transpose();
    Matrix<T> dh_pre = dh_act.cwiseProduct(c.h_pre.unaryExpr([](T t) { return gelu_grad(t); }));
    if (g) {
      g->w1.noalias() += c.b.transpose() * dh_pre;
      g->b1 += dh_pre.colwise().sum();
    }
    Matrix<T> db = dh_pre * b.w1.transpose();
    Matrix<T> dx_mid = dout + layer_norm_backward(db, c.b_hat, c.rstd2, b.ln2_g,
                                                  g ? &g->ln2_g : nullptr, g ? &g->ln2_b : nullptr);
    // Attention branch.
    if (g) {
      g->wo.noalias() += c.attn.transpose() * dx_mid;
      g->bo += dx_mid.colwise().sum();
    }
    const Matrix<T> dattn = dx_mid * b.wo.transpose();
    const Eigen::Index len = dattn.rows();
    Matrix<T> dq(len, cfg_.d_model), dk(len, cfg_.d_model), dv(len, cfg_.d_model);
    for (int h = 0; h < cfg_.n_heads; ++h) {
      const Matrix<T>& p = c.probs[std::size_t(h)];
      const Matrix<T> dout_h = dattn.middleCols(h * dh, dh);
      Matrix<T> dp = dout_h * c.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = p.transpose() * dout_h;
      for (Eigen::Index i = 0; i < len; ++i) {
        double dot = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) dot += double(p(i, j)) * double(dp(i, j));
        for (Eigen::Index j = 0; j <= i; ++j) dp(i, j) = p(i, j) * (dp(i, j) - T(dot)) * scale;
        for (Eigen::Index j = i + 1; j < len; ++j) dp(i, j) = T(0);
      }
      dq.middleCols(h * dh, dh) = dp * c.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = dp.transpose() * c.q.middleCols(h * dh, dh);
    }
    if (g) {
      g->wq.noalias() += c.a.transpose() * dq;
      g->bq += dq.colwise().sum();
      g->wk.noalias() += c.a.transpose() * dk;
      g->bk += dk.colwise().sum();
      g->wv.noalias() += c.a.transpose() * dv;
      g->bv += dv.colwise().sum();
    }
    Matrix<T> da = dq * b.wq.transpose();
    da.noalias() += dk * b.wk.transpose();
    da.noalias() += dv * b.wv.transpose();
    return dx_mid + layer_norm_backward(da, c.a_hat, c.rstd1, b.ln1_g, g ? &g->ln1_g : nullptr,
                                        g ? &g->ln1_b : nullptr);
  }

  const ModelConfig& cfg_;
  const Weights<T>& w_;
};

}  // namespace esiii::detail
