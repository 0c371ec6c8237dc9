#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sardiff/rng.hpp"
#include "sardiff/tensor.hpp"

// Trainable layers with explicit forward/backward passes. Forward passes are
// const and write activations into caller-owned cache structs, so a model can
// be shared read-only across threads; backward passes accumulate parameter
// gradients and require exclusive access.
namespace sardiff::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapRM = Eigen::Map<const RowMat<T>>;

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <typename T>
void init_normal(Tensor<T>& t, Rng& rng, double stddev) {
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal() * stddev);
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

template <typename T>
class Conv2d {
 public:
  struct Cache {
    Tensor<T> input;
  };

  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad)
      : in_ch_(in_ch), out_ch_(out_ch), ksize_(ksize), stride_(stride), pad_(pad),
        weight_({out_ch, in_ch, ksize, ksize}), bias_({out_ch}),
        grad_weight_({out_ch, in_ch, ksize, ksize}), grad_bias_({out_ch}) {}

  // He-style init; `scale` damps layers that feed residual sums.
  void init(Rng& rng, double scale = 1.0) {
    const double fan_in = static_cast<double>(in_ch_) * ksize_ * ksize_;
    init_normal(weight_, rng, scale * std::sqrt(2.0 / fan_in));
    bias_.zero();
  }

  int out_size(int in_size) const { return (in_size + 2 * pad_ - ksize_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
    const int64_t B = x.dim(0), H = x.dim(2), W = x.dim(3);
    require(x.dim(1) == in_ch_, "Conv2d: input channel mismatch");
    const int OH = out_size(static_cast<int>(H)), OW = out_size(static_cast<int>(W));
    Tensor<T> y({B, out_ch_, OH, OW});
    const int64_t ckk = static_cast<int64_t>(in_ch_) * ksize_ * ksize_;
    const int64_t npix = static_cast<int64_t>(OH) * OW;
    std::vector<T> col(static_cast<size_t>(ckk * npix));
    CMapRM<T> wmat(weight_.data(), out_ch_, ckk);
    for (int64_t b = 0; b < B; ++b) {
      im2col(x.data() + b * in_ch_ * H * W, static_cast<int>(H), static_cast<int>(W),
             col.data());
      MapRM<T> ymat(y.data() + b * out_ch_ * npix, out_ch_, npix);
      CMapRM<T> cmat(col.data(), ckk, npix);
      ymat.noalias() = wmat * cmat;
      for (int oc = 0; oc < out_ch_; ++oc) ymat.row(oc).array() += bias_[oc];
    }
    if (cache) cache->input = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache) {
    const Tensor<T>& x = cache.input;
    const int64_t B = x.dim(0), H = x.dim(2), W = x.dim(3);
    const int OH = out_size(static_cast<int>(H)), OW = out_size(static_cast<int>(W));
    const int64_t ckk = static_cast<int64_t>(in_ch_) * ksize_ * ksize_;
    const int64_t npix = static_cast<int64_t>(OH) * OW;
    Tensor<T> gx(x.shape());
    std::vector<T> col(static_cast<size_t>(ckk * npix));
    std::vector<T> gcol(static_cast<size_t>(ckk * npix));
    CMapRM<T> wmat(weight_.data(), out_ch_, ckk);
    MapRM<T> gwmat(grad_weight_.data(), out_ch_, ckk);
    for (int64_t b = 0; b < B; ++b) {
      im2col(x.data() + b * in_ch_ * H * W, static_cast<int>(H), static_cast<int>(W),
             col.data());
      CMapRM<T> gymat(gy.data() + b * out_ch_ * npix, out_ch_, npix);
      CMapRM<T> cmat(col.data(), ckk, npix);
      gwmat.noalias() += gymat * cmat.transpose();
      // fixed-order accumulation: SIMD reductions round differently
      // depending on buffer alignment, which breaks bit-reproducibility
      for (int oc = 0; oc < out_ch_; ++oc) {
        const T* gp = gy.data() + (b * out_ch_ + oc) * npix;
        T s = T(0);
        for (int64_t i = 0; i < npix; ++i) s += gp[i];
        grad_bias_[oc] += s;
      }
      MapRM<T> gcmat(gcol.data(), ckk, npix);
      gcmat.noalias() = wmat.transpose() * gymat;
      col2im(gcol.data(), static_cast<int>(H), static_cast<int>(W),
             gx.data() + b * in_ch_ * H * W);
    }
    return gx;
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &weight_, &grad_weight_});
    out.push_back({prefix + ".bias", &bias_, &grad_bias_});
  }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

 private:
  void im2col(const T* x, int H, int W, T* col) const {
    const int OH = out_size(H), OW = out_size(W);
    int64_t r = 0;
    for (int ic = 0; ic < in_ch_; ++ic) {
      const T* plane = x + static_cast<int64_t>(ic) * H * W;
      for (int kh = 0; kh < ksize_; ++kh) {
        for (int kw = 0; kw < ksize_; ++kw, ++r) {
          T* dst = col + r * OH * OW;
          for (int oh = 0; oh < OH; ++oh) {
            const int ih = oh * stride_ + kh - pad_;
            if (ih < 0 || ih >= H) {
              std::fill(dst + oh * OW, dst + (oh + 1) * OW, T(0));
              continue;
            }
            for (int ow = 0; ow < OW; ++ow) {
              const int iw = ow * stride_ + kw - pad_;
              dst[oh * OW + ow] = (iw >= 0 && iw < W) ? plane[ih * W + iw] : T(0);
            }
          }
        }
      }
    }
  }

  void col2im(const T* col, int H, int W, T* gx) const {
    const int OH = out_size(H), OW = out_size(W);
    std::fill(gx, gx + static_cast<int64_t>(in_ch_) * H * W, T(0));
    int64_t r = 0;
    for (int ic = 0; ic < in_ch_; ++ic) {
      T* plane = gx + static_cast<int64_t>(ic) * H * W;
      for (int kh = 0; kh < ksize_; ++kh) {
        for (int kw = 0; kw < ksize_; ++kw, ++r) {
          const T* src = col + r * OH * OW;
          for (int oh = 0; oh < OH; ++oh) {
            const int ih = oh * stride_ + kh - pad_;
            if (ih < 0 || ih >= H) continue;
            for (int ow = 0; ow < OW; ++ow) {
              const int iw = ow * stride_ + kw - pad_;
              if (iw >= 0 && iw < W) plane[ih * W + iw] += src[oh * OW + ow];
            }
          }
        }
      }
    }
  }

  int in_ch_ = 0, out_ch_ = 0, ksize_ = 0, stride_ = 1, pad_ = 0;
  Tensor<T> weight_, bias_, grad_weight_, grad_bias_;
};

// ---------------------------------------------------------------------------
// GroupNorm
// ---------------------------------------------------------------------------

template <typename T>
class GroupNorm {
 public:
  struct Cache {
    Tensor<T> xhat;
    std::vector<double> inv_std;   // per (batch, group)
  };

  static constexpr double kEps = 1e-5;

  GroupNorm() = default;
  explicit GroupNorm(int channels)
      : channels_(channels), gamma_({channels}), beta_({channels}),
        grad_gamma_({channels}), grad_beta_({channels}) {
    groups_ = std::min(32, channels);
    while (channels % groups_ != 0) --groups_;
    gamma_.fill(T(1));
    beta_.zero();
  }

  int groups() const { return groups_; }

  // `cache` may be null in inference; when `normalized_only` the affine
  // scale/shift is skipped (used by tests probing the normalization itself).
  Tensor<T> forward(const Tensor<T>& x, Cache* cache, bool normalized_only = false) const {
    const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    require(C == channels_, "GroupNorm: channel mismatch");
    const int64_t cg = C / groups_;
    const int64_t m = cg * HW;
    Tensor<T> y(x.shape());
    Tensor<T> xhat(x.shape());
    std::vector<double> inv_stds(static_cast<size_t>(B * groups_));
    for (int64_t b = 0; b < B; ++b) {
      for (int g = 0; g < groups_; ++g) {
        const T* xp = x.data() + (b * C + g * cg) * HW;
        double mean = 0;
        for (int64_t i = 0; i < m; ++i) mean += xp[i];
        mean /= static_cast<double>(m);
        double var = 0;
        for (int64_t i = 0; i < m; ++i) {
          const double d = xp[i] - mean;
          var += d * d;
        }
        var /= static_cast<double>(m);
        const double inv_std = 1.0 / std::sqrt(var + kEps);
        inv_stds[static_cast<size_t>(b * groups_ + g)] = inv_std;
        T* hp = xhat.data() + (b * C + g * cg) * HW;
        for (int64_t i = 0; i < m; ++i)
          hp[i] = static_cast<T>((xp[i] - mean) * inv_std);
        T* yp = y.data() + (b * C + g * cg) * HW;
        for (int64_t c = 0; c < cg; ++c) {
          const int64_t ch = g * cg + c;
          const T gm = normalized_only ? T(1) : gamma_[ch];
          const T bt = normalized_only ? T(0) : beta_[ch];
          for (int64_t i = 0; i < HW; ++i)
            yp[c * HW + i] = gm * hp[c * HW + i] + bt;
        }
      }
    }
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv_stds);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache) {
    const Tensor<T>& xhat = cache.xhat;
    const int64_t B = gy.dim(0), C = gy.dim(1), HW = gy.dim(2) * gy.dim(3);
    const int64_t cg = C / groups_;
    const int64_t m = cg * HW;
    Tensor<T> gx(gy.shape());
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t c = 0; c < C; ++c) {
        const T* gp = gy.data() + (b * C + c) * HW;
        const T* hp = xhat.data() + (b * C + c) * HW;
        double dg = 0, db = 0;
        for (int64_t i = 0; i < HW; ++i) {
          dg += static_cast<double>(gp[i]) * hp[i];
          db += gp[i];
        }
        grad_gamma_[c] += static_cast<T>(dg);
        grad_beta_[c] += static_cast<T>(db);
      }
      for (int g = 0; g < groups_; ++g) {
        const T* gp = gy.data() + (b * C + g * cg) * HW;
        const T* hp = xhat.data() + (b * C + g * cg) * HW;
        double sum_t = 0, sum_th = 0;
        for (int64_t c = 0; c < cg; ++c) {
          const double gm = gamma_[g * cg + c];
          for (int64_t i = 0; i < HW; ++i) {
            const double t = gp[c * HW + i] * gm;
            sum_t += t;
            sum_th += t * hp[c * HW + i];
          }
        }
        const double mean_t = sum_t / static_cast<double>(m);
        const double mean_th = sum_th / static_cast<double>(m);
        const double inv_std = cache.inv_std[static_cast<size_t>(b * groups_ + g)];
        T* xp = gx.data() + (b * C + g * cg) * HW;
        for (int64_t c = 0; c < cg; ++c) {
          const double gm = gamma_[g * cg + c];
          for (int64_t i = 0; i < HW; ++i) {
            const double t = gp[c * HW + i] * gm;
            xp[c * HW + i] =
                static_cast<T>(inv_std * (t - mean_t - hp[c * HW + i] * mean_th));
          }
        }
      }
    }
    return gx;
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".gamma", &gamma_, &grad_gamma_});
    out.push_back({prefix + ".beta", &beta_, &grad_beta_});
  }

 private:
  int channels_ = 0, groups_ = 1;
  Tensor<T> gamma_, beta_, grad_gamma_, grad_beta_;
};

// ---------------------------------------------------------------------------
// SiLU (Swish), Dropout
// ---------------------------------------------------------------------------

template <typename T>
struct SiLU {
  struct Cache {
    Tensor<T> input;
  };

  static Tensor<T> forward(const Tensor<T>& x, Cache* cache) {
    Tensor<T> y(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x[i])));
      y[i] = static_cast<T>(x[i] * s);
    }
    if (cache) cache->input = x;
    return y;
  }

  static Tensor<T> backward(const Tensor<T>& gy, const Cache& cache) {
    Tensor<T> gx(gy.shape());
    for (int64_t i = 0; i < gy.size(); ++i) {
      const double x = cache.input[i];
      const double s = 1.0 / (1.0 + std::exp(-x));
      gx[i] = static_cast<T>(gy[i] * s * (1.0 + x * (1.0 - s)));
    }
    return gx;
  }
};

template <typename T>
class Dropout {
 public:
  struct Cache {
    Tensor<T> mask;   // empty in inference
  };

  Dropout() = default;
  explicit Dropout(double p) : p_(p) { require(p >= 0.0 && p < 1.0, "Dropout: p in [0,1)"); }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache, bool train_mode, Rng* rng) const {
    if (!train_mode || p_ == 0.0) {
      if (cache) cache->mask = Tensor<T>();
      return x;
    }
    require(rng != nullptr, "Dropout: training mode needs an rng");
    Tensor<T> mask(x.shape());
    const T keep_inv = static_cast<T>(1.0 / (1.0 - p_));
    for (int64_t i = 0; i < mask.size(); ++i)
      mask[i] = rng->uniform() < p_ ? T(0) : keep_inv;
    Tensor<T> y(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
    if (cache) cache->mask = std::move(mask);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache) const {
    if (cache.mask.empty()) return gy;
    Tensor<T> gx(gy.shape());
    for (int64_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * cache.mask[i];
    return gx;
  }

  double p() const { return p_; }

 private:
  double p_ = 0.0;
};

// ---------------------------------------------------------------------------
// Linear, Embedding
// ---------------------------------------------------------------------------

template <typename T>
class Linear {
 public:
  struct Cache {
    Tensor<T> input;
  };

  Linear() = default;
  Linear(int in_dim, int out_dim)
      : in_dim_(in_dim), out_dim_(out_dim), weight_({out_dim, in_dim}),
        bias_({out_dim}), grad_weight_({out_dim, in_dim}), grad_bias_({out_dim}) {}

  void init(Rng& rng, double scale = 1.0) {
    init_normal(weight_, rng, scale * std::sqrt(1.0 / in_dim_));
    bias_.zero();
  }

  // x: [B, in_dim] -> [B, out_dim]
  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
    const int64_t B = x.dim(0);
    require(x.dim(1) == in_dim_, "Linear: input dim mismatch");
    Tensor<T> y({B, out_dim_});
    CMapRM<T> xm(x.data(), B, in_dim_);
    CMapRM<T> wm(weight_.data(), out_dim_, in_dim_);
    MapRM<T> ym(y.data(), B, out_dim_);
    ym.noalias() = xm * wm.transpose();
    for (int64_t b = 0; b < B; ++b)
      for (int o = 0; o < out_dim_; ++o) ym(b, o) += bias_[o];
    if (cache) cache->input = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache) {
    const int64_t B = gy.dim(0);
    CMapRM<T> gym(gy.data(), B, out_dim_);
    CMapRM<T> xm(cache.input.data(), B, in_dim_);
    MapRM<T> gwm(grad_weight_.data(), out_dim_, in_dim_);
    gwm.noalias() += gym.transpose() * xm;
    for (int64_t b = 0; b < B; ++b)
      for (int o = 0; o < out_dim_; ++o) grad_bias_[o] += gym(b, o);
    Tensor<T> gx({B, in_dim_});
    MapRM<T> gxm(gx.data(), B, in_dim_);
    CMapRM<T> wm(weight_.data(), out_dim_, in_dim_);
    gxm.noalias() = gym * wm;
    return gx;
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &weight_, &grad_weight_});
    out.push_back({prefix + ".bias", &bias_, &grad_bias_});
  }

 private:
  int in_dim_ = 0, out_dim_ = 0;
  Tensor<T> weight_, bias_, grad_weight_, grad_bias_;
};

template <typename T>
class Embedding {
 public:
  struct Cache {
    std::vector<int32_t> ids;
  };

  Embedding() = default;
  Embedding(int num_entries, int dim)
      : num_entries_(num_entries), dim_(dim), table_({num_entries, dim}),
        grad_table_({num_entries, dim}) {}

  void init(Rng& rng) { init_normal(table_, rng, 1.0); }

  Tensor<T> forward(const std::vector<int32_t>& ids, Cache* cache) const {
    Tensor<T> y({static_cast<int64_t>(ids.size()), dim_});
    for (size_t b = 0; b < ids.size(); ++b) {
      require(ids[b] >= 0 && ids[b] < num_entries_, "Embedding: id out of range");
      std::copy(table_.data() + static_cast<int64_t>(ids[b]) * dim_,
                table_.data() + static_cast<int64_t>(ids[b] + 1) * dim_,
                y.data() + static_cast<int64_t>(b) * dim_);
    }
    if (cache) cache->ids = ids;
    return y;
  }

  void backward(const Tensor<T>& gy, const Cache& cache) {
    for (size_t b = 0; b < cache.ids.size(); ++b) {
      T* gp = grad_table_.data() + static_cast<int64_t>(cache.ids[b]) * dim_;
      const T* src = gy.data() + static_cast<int64_t>(b) * dim_;
      for (int i = 0; i < dim_; ++i) gp[i] += src[i];
    }
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".table", &table_, &grad_table_});
  }

  int num_entries() const { return num_entries_; }
  int dim() const { return dim_; }

 private:
  int num_entries_ = 0, dim_ = 0;
  Tensor<T> table_, grad_table_;
};

// ---------------------------------------------------------------------------
// Nearest-neighbor 2x upsampling
// ---------------------------------------------------------------------------

template <typename T>
struct Upsample2x {
  static Tensor<T> forward(const Tensor<T>& x) {
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> y({B, C, 2 * H, 2 * W});
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const T* src = x.data() + bc * H * W;
      T* dst = y.data() + bc * 4 * H * W;
      for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w) {
          const T v = src[h * W + w];
          dst[(2 * h) * 2 * W + 2 * w] = v;
          dst[(2 * h) * 2 * W + 2 * w + 1] = v;
          dst[(2 * h + 1) * 2 * W + 2 * w] = v;
          dst[(2 * h + 1) * 2 * W + 2 * w + 1] = v;
        }
    }
    return y;
  }

  static Tensor<T> backward(const Tensor<T>& gy) {
    const int64_t B = gy.dim(0), C = gy.dim(1), H2 = gy.dim(2), W2 = gy.dim(3);
    const int64_t H = H2 / 2, W = W2 / 2;
    Tensor<T> gx({B, C, H, W});
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const T* src = gy.data() + bc * H2 * W2;
      T* dst = gx.data() + bc * H * W;
      for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w)
          dst[h * W + w] = src[(2 * h) * W2 + 2 * w] + src[(2 * h) * W2 + 2 * w + 1] +
                           src[(2 * h + 1) * W2 + 2 * w] +
                           src[(2 * h + 1) * W2 + 2 * w + 1];
    }
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Single-head self-attention over flattened spatial positions
// ---------------------------------------------------------------------------

template <typename T>
class AttentionBlock {
 public:
  struct Cache {
    typename GroupNorm<T>::Cache norm;
    std::vector<RowMat<T>> h, q, k, v, attn;   // per batch element
  };

  AttentionBlock() = default;
  explicit AttentionBlock(int channels)
      : channels_(channels), norm_(channels),
        wq_({channels, channels}), wk_({channels, channels}), wv_({channels, channels}),
        wo_({channels, channels}), bq_({channels}), bk_({channels}), bv_({channels}),
        bo_({channels}), gwq_({channels, channels}), gwk_({channels, channels}),
        gwv_({channels, channels}), gwo_({channels, channels}), gbq_({channels}),
        gbk_({channels}), gbv_({channels}), gbo_({channels}) {}

  void init(Rng& rng, double proj_scale = 0.1) {
    const double std = std::sqrt(1.0 / channels_);
    init_normal(wq_, rng, std);
    init_normal(wk_, rng, std);
    init_normal(wv_, rng, std);
    init_normal(wo_, rng, proj_scale * std);
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
    const int64_t B = x.dim(0), C = x.dim(1), N = x.dim(2) * x.dim(3);
    typename GroupNorm<T>::Cache norm_cache;
    Tensor<T> hn = norm_.forward(x, cache ? &norm_cache : nullptr);
    Tensor<T> y(x.shape());
    const double scale = 1.0 / std::sqrt(static_cast<double>(C));
    CMapRM<T> wq(wq_.data(), C, C), wk(wk_.data(), C, C), wv(wv_.data(), C, C),
        wo(wo_.data(), C, C);
    if (cache) {
      cache->norm = std::move(norm_cache);
      cache->h.resize(B);
      cache->q.resize(B);
      cache->k.resize(B);
      cache->v.resize(B);
      cache->attn.resize(B);
    }
    for (int64_t b = 0; b < B; ++b) {
      CMapRM<T> h(hn.data() + b * C * N, C, N);
      RowMat<T> q = wq * h, k = wk * h, v = wv * h;
      for (int64_t c = 0; c < C; ++c) {
        q.row(c).array() += bq_[c];
        k.row(c).array() += bk_[c];
        v.row(c).array() += bv_[c];
      }
      RowMat<T> scores = (q.transpose() * k) * static_cast<T>(scale);   // [N, N]
      for (int64_t i = 0; i < N; ++i) {
        T* row = scores.data() + i * N;
        T mx = row[0];
        for (int64_t j = 1; j < N; ++j) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (int64_t j = 0; j < N; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        const T inv = T(1) / sum;
        for (int64_t j = 0; j < N; ++j) row[j] *= inv;
      }
      RowMat<T> attended = v * scores.transpose();                     // [C, N]
      MapRM<T> ym(y.data() + b * C * N, C, N);
      ym.noalias() = wo * attended;
      for (int64_t c = 0; c < C; ++c) ym.row(c).array() += bo_[c];
      ym += CMapRM<T>(x.data() + b * C * N, C, N);
      if (cache) {
        cache->h[static_cast<size_t>(b)] = h;
        cache->q[static_cast<size_t>(b)] = std::move(q);
        cache->k[static_cast<size_t>(b)] = std::move(k);
        cache->v[static_cast<size_t>(b)] = std::move(v);
        cache->attn[static_cast<size_t>(b)] = std::move(scores);
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache) {
    const int64_t B = gy.dim(0), C = gy.dim(1), N = gy.dim(2) * gy.dim(3);
    const double scale = 1.0 / std::sqrt(static_cast<double>(C));
    Tensor<T> ghn(gy.shape());
    CMapRM<T> wq(wq_.data(), C, C), wk(wk_.data(), C, C), wv(wv_.data(), C, C),
        wo(wo_.data(), C, C);
    MapRM<T> gwq(gwq_.data(), C, C), gwk(gwk_.data(), C, C), gwv(gwv_.data(), C, C),
        gwo(gwo_.data(), C, C);
    for (int64_t b = 0; b < B; ++b) {
      const size_t sb = static_cast<size_t>(b);
      CMapRM<T> gym(gy.data() + b * C * N, C, N);
      const RowMat<T>& h = cache.h[sb];
      const RowMat<T>& q = cache.q[sb];
      const RowMat<T>& k = cache.k[sb];
      const RowMat<T>& v = cache.v[sb];
      const RowMat<T>& a = cache.attn[sb];
      RowMat<T> attended = v * a.transpose();
      gwo.noalias() += gym * attended.transpose();
      auto row_sum = [](const RowMat<T>& m, int64_t r) {
        const T* p = m.data() + r * m.cols();
        T s = T(0);
        for (int64_t j = 0; j < m.cols(); ++j) s += p[j];
        return s;
      };
      for (int64_t c = 0; c < C; ++c) {
        const T* p = gy.data() + (b * C + c) * N;
        T s = T(0);
        for (int64_t j = 0; j < N; ++j) s += p[j];
        gbo_[c] += s;
      }
      RowMat<T> gattended = wo.transpose() * gym;                       // [C, N]
      RowMat<T> gv = gattended * a;                                     // [C, N]
      RowMat<T> ga = gattended.transpose() * v;                         // [N, N]
      // softmax rows, fixed-order dot
      RowMat<T> gs(N, N);
      for (int64_t i = 0; i < N; ++i) {
        const T* ap = a.data() + i * N;
        const T* gp = ga.data() + i * N;
        T dot = T(0);
        for (int64_t j = 0; j < N; ++j) dot += ap[j] * gp[j];
        T* sp = gs.data() + i * N;
        for (int64_t j = 0; j < N; ++j) sp[j] = ap[j] * (gp[j] - dot);
      }
      RowMat<T> gq = (k * gs.transpose()) * static_cast<T>(scale);
      RowMat<T> gk = (q * gs) * static_cast<T>(scale);
      gwq.noalias() += gq * h.transpose();
      gwk.noalias() += gk * h.transpose();
      gwv.noalias() += gv * h.transpose();
      for (int64_t c = 0; c < C; ++c) {
        gbq_[c] += row_sum(gq, c);
        gbk_[c] += row_sum(gk, c);
        gbv_[c] += row_sum(gv, c);
      }
      MapRM<T> ghm(ghn.data() + b * C * N, C, N);
      ghm.noalias() = wq.transpose() * gq;
      ghm.noalias() += wk.transpose() * gk;
      ghm.noalias() += wv.transpose() * gv;
    }
    Tensor<T> gx = norm_.backward(ghn, cache.norm);
    gx += gy;   // residual path
    return gx;
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    norm_.collect_params(prefix + ".norm", out);
    out.push_back({prefix + ".wq", &wq_, &gwq_});
    out.push_back({prefix + ".bq", &bq_, &gbq_});
    out.push_back({prefix + ".wk", &wk_, &gwk_});
    out.push_back({prefix + ".bk", &bk_, &gbk_});
    out.push_back({prefix + ".wv", &wv_, &gwv_});
    out.push_back({prefix + ".bv", &bv_, &gbv_});
    out.push_back({prefix + ".wo", &wo_, &gwo_});
    out.push_back({prefix + ".bo", &bo_, &gbo_});
  }

 private:
  int channels_ = 0;
  GroupNorm<T> norm_;
  Tensor<T> wq_, wk_, wv_, wo_, bq_, bk_, bv_, bo_;
  Tensor<T> gwq_, gwk_, gwv_, gwo_, gbq_, gbk_, gbv_, gbo_;
};

// ---------------------------------------------------------------------------
// Sinusoidal timestep embedding (fixed, no parameters)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sinusoidal_embedding(const std::vector<int>& t, int dim) {
  require(dim >= 2 && dim % 2 == 0, "sinusoidal_embedding: dim must be even and >= 2");
  const int half = dim / 2;
  Tensor<T> out({static_cast<int64_t>(t.size()), dim});
  for (size_t b = 0; b < t.size(); ++b) {
    for (int i = 0; i < half; ++i) {
      const double freq =
          half > 1 ? std::exp(-std::log(10000.0) * i / (half - 1)) : 1.0;
      const double arg = static_cast<double>(t[b]) * freq;
      out[static_cast<int64_t>(b) * dim + i] = static_cast<T>(std::sin(arg));
      out[static_cast<int64_t>(b) * dim + half + i] = static_cast<T>(std::cos(arg));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
class Adam {
 public:
  struct Options {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(Options opts) : opts_(opts) {}

  void step(std::vector<ParamRef<T>>& params) {
    if (m_.empty()) {
      for (auto& p : params) {
        m_.emplace_back(p.value->shape());
        v_.emplace_back(p.value->shape());
      }
    }
    require(m_.size() == params.size(), "Adam: parameter set changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, t_);
    const double bc2 = 1.0 - std::pow(opts_.beta2, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& w = *params[i].value;
      Tensor<T>& g = *params[i].grad;
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      for (int64_t j = 0; j < w.size(); ++j) {
        const double gj = g[j];
        const double mj = opts_.beta1 * m[j] + (1.0 - opts_.beta1) * gj;
        const double vj = opts_.beta2 * v[j] + (1.0 - opts_.beta2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        w[j] -= static_cast<T>(opts_.learning_rate * (mj / bc1) /
                               (std::sqrt(vj / bc2) + opts_.eps));
      }
    }
  }

  const Options& options() const { return opts_; }
  int64_t step_count() const { return t_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  Options opts_;
  int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

// Global gradient-norm clipping; returns the pre-clip norm.
template <typename T>
double clip_grad_norm(std::vector<ParamRef<T>>& params, double max_norm) {
  double sq = 0;
  for (auto& p : params)
    for (int64_t i = 0; i < p.grad->size(); ++i)
      sq += static_cast<double>((*p.grad)[i]) * static_cast<double>((*p.grad)[i]);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& p : params) *p.grad *= s;
  }
  return norm;
}

}  // namespace sardiff::nn
