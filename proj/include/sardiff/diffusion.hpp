#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "sardiff/rng.hpp"
#include "sardiff/schedule.hpp"
#include "sardiff/tensor.hpp"

namespace sardiff {

// [B, C, H, W] image tensor with optional per-element class labels.
template <typename T>
struct ImageBatch {
  Tensor<T> data;
  std::optional<std::vector<int32_t>> labels;

  int64_t batch() const { return data.dim(0); }
  int64_t channels() const { return data.dim(1); }
  int64_t height() const { return data.dim(2); }
  int64_t width() const { return data.dim(3); }
};

template <typename T>
using NoiseBatch = Tensor<T>;

namespace detail {

inline void check_timestep(int t, const NoiseSchedule& schedule) {
  require(t >= 1 && t <= schedule.num_steps(), "diffusion: timestep out of range [1,T]");
}

}  // namespace detail

// Draws standard-normal noise matching shape; one value per element in
// row-major order.
template <typename T>
NoiseBatch<T> draw_noise(const Shape& shape, Rng& rng) {
  Tensor<T> eps(shape);
  for (int64_t i = 0; i < eps.size(); ++i) eps[i] = static_cast<T>(rng.normal());
  return eps;
}

// Closed-form forward noising: x_t = sqrt(abar_t) x_0 + sqrt(1-abar_t) eps,
// with a per-batch-element timestep.
template <typename T>
ImageBatch<T> forward_sample(const ImageBatch<T>& x0, const std::vector<int>& t,
                             const NoiseBatch<T>& eps, const NoiseSchedule& schedule) {
  require(static_cast<int64_t>(t.size()) == x0.batch(),
          "forward_sample: timestep vector length must equal batch size");
  require(eps.same_shape(x0.data), "forward_sample: noise shape mismatch");
  ImageBatch<T> out{Tensor<T>(x0.data.shape()), x0.labels};
  const int64_t stride = x0.channels() * x0.height() * x0.width();
  for (int64_t b = 0; b < x0.batch(); ++b) {
    detail::check_timestep(t[static_cast<size_t>(b)], schedule);
    const double abar = schedule.alpha_bar(t[static_cast<size_t>(b)]);
    const T cs = static_cast<T>(std::sqrt(abar));
    const T cn = static_cast<T>(std::sqrt(1.0 - abar));
    const T* xp = x0.data.data() + b * stride;
    const T* ep = eps.data() + b * stride;
    T* op = out.data.data() + b * stride;
    for (int64_t i = 0; i < stride; ++i) op[i] = cs * xp[i] + cn * ep[i];
  }
  return out;
}

// Posterior mean mu_tilde_t(x_t, x_0) of q(x_{t-1} | x_t, x_0).
template <typename T>
ImageBatch<T> posterior_mean(const ImageBatch<T>& x0, const ImageBatch<T>& xt, int t,
                             const NoiseSchedule& schedule) {
  detail::check_timestep(t, schedule);
  require(x0.data.same_shape(xt.data), "posterior_mean: shape mismatch");
  const double abar_prev = schedule.alpha_bar(t - 1);
  const double abar = schedule.alpha_bar(t);
  const double beta = schedule.beta(t);
  const double alpha = schedule.alpha(t);
  // At t = 1 the coefficients reduce to exactly (1, 0); evaluating the
  // quotient form there only adds cancellation noise.
  const T c0 = t == 1 ? T(1) : static_cast<T>(std::sqrt(abar_prev) * beta / (1.0 - abar));
  const T ct = t == 1 ? T(0)
                      : static_cast<T>(std::sqrt(alpha) * (1.0 - abar_prev) / (1.0 - abar));
  ImageBatch<T> out{Tensor<T>(xt.data.shape()), xt.labels};
  for (int64_t i = 0; i < out.data.size(); ++i)
    out.data[i] = c0 * x0.data[i] + ct * xt.data[i];
  return out;
}

// Inverts the closed-form forward step: x0_hat = (x_t - sqrt(1-abar_t) eps_hat) / sqrt(abar_t).
template <typename T>
ImageBatch<T> predict_x0_from_eps(const ImageBatch<T>& xt, int t,
                                  const NoiseBatch<T>& eps_hat, const NoiseSchedule& schedule) {
  detail::check_timestep(t, schedule);
  require(eps_hat.same_shape(xt.data), "predict_x0_from_eps: shape mismatch");
  const double abar = schedule.alpha_bar(t);
  const T cn = static_cast<T>(std::sqrt(1.0 - abar));
  const T inv = static_cast<T>(1.0 / std::sqrt(abar));
  ImageBatch<T> out{Tensor<T>(xt.data.shape()), xt.labels};
  for (int64_t i = 0; i < out.data.size(); ++i)
    out.data[i] = (xt.data[i] - cn * eps_hat[i]) * inv;
  return out;
}

// Reverse-transition variance: sigma_t^2 = posterior variance (default) or
// the alternative sigma_t^2 = beta_t.
enum class SigmaKind { PosteriorVariance, Beta };

inline double sigma_for_step(int t, const NoiseSchedule& schedule, SigmaKind kind) {
  return std::sqrt(kind == SigmaKind::PosteriorVariance ? schedule.posterior_variance(t)
                                                        : schedule.beta(t));
}

// One denoising step:
//   x_{t-1} = (x_t - (1-alpha_t)/sqrt(1-abar_t) eps_hat) / sqrt(alpha_t) + sigma_t z.
// At t = 1 the noise z must be the zero tensor.
template <typename T>
ImageBatch<T> reverse_step(const ImageBatch<T>& xt, int t, const NoiseBatch<T>& eps_hat,
                           const NoiseBatch<T>& z, const NoiseSchedule& schedule,
                           SigmaKind sigma_kind = SigmaKind::PosteriorVariance) {
  detail::check_timestep(t, schedule);
  require(eps_hat.same_shape(xt.data) && z.same_shape(xt.data),
          "reverse_step: shape mismatch");
  if (t == 1) {
    for (int64_t i = 0; i < z.size(); ++i)
      require(z[i] == T(0), "reverse_step: z must be zero at t = 1");
  }
  const double alpha = schedule.alpha(t);
  const double abar = schedule.alpha_bar(t);
  const T inv_sqrt_alpha = static_cast<T>(1.0 / std::sqrt(alpha));
  const T eps_coef = static_cast<T>((1.0 - alpha) / std::sqrt(1.0 - abar));
  const T sigma = static_cast<T>(sigma_for_step(t, schedule, sigma_kind));
  ImageBatch<T> out{Tensor<T>(xt.data.shape()), xt.labels};
  for (int64_t i = 0; i < out.data.size(); ++i)
    out.data[i] = inv_sqrt_alpha * (xt.data[i] - eps_coef * eps_hat[i]) + sigma * z[i];
  return out;
}

struct SampleOptions {
  SigmaKind sigma_kind = SigmaKind::PosteriorVariance;
  bool clamp_output = true;     // clamp to [-1,1] once, at the end
  int chunk_size = 128;         // predictor batch size; does not affect results
};

// Ancestral sampling: x_T ~ N(0,I), then reverse_step for t = T..1, querying
// the predictor for eps_hat each step. The predictor is any callable
//   Tensor<T>(const Tensor<T>& xt, const std::vector<int>& t, const int32_t* labels)
// where labels is null for unconditional models. Each batch element owns an
// RNG stream derived from (seed, element index), so results are
// bit-reproducible and independent of chunking.
template <typename T, typename Predictor>
ImageBatch<T> sample(Predictor&& predict_eps, int n, int channels, int height, int width,
                     const std::optional<std::vector<int32_t>>& class_ids,
                     const NoiseSchedule& schedule, uint64_t seed,
                     const SampleOptions& options = {}) {
  require(n >= 0, "sample: n must be >= 0");
  if (class_ids)
    require(static_cast<int64_t>(class_ids->size()) == n,
            "sample: class_ids length must equal n");
  ImageBatch<T> out{Tensor<T>({n, channels, height, width}), class_ids};
  if (n == 0) return out;

  const int64_t elem = static_cast<int64_t>(channels) * height * width;
  const int T_steps = schedule.num_steps();
  for (int64_t lo = 0; lo < n; lo += options.chunk_size) {
    const int64_t hi = std::min<int64_t>(n, lo + options.chunk_size);
    const int64_t bs = hi - lo;
    std::vector<Rng> rngs;
    rngs.reserve(static_cast<size_t>(bs));
    for (int64_t b = lo; b < hi; ++b)
      rngs.emplace_back(Rng::derive(seed, static_cast<uint64_t>(b)));

    Tensor<T> x({bs, channels, height, width});
    for (int64_t b = 0; b < bs; ++b) {
      T* xp = x.data() + b * elem;
      for (int64_t i = 0; i < elem; ++i) xp[i] = static_cast<T>(rngs[static_cast<size_t>(b)].normal());
    }
    std::vector<int32_t> chunk_labels;
    const int32_t* labels_ptr = nullptr;
    if (class_ids) {
      chunk_labels.assign(class_ids->begin() + lo, class_ids->begin() + hi);
      labels_ptr = chunk_labels.data();
    }

    Tensor<T> z({bs, channels, height, width});
    std::vector<int> tvec(static_cast<size_t>(bs));
    for (int t = T_steps; t >= 1; --t) {
      std::fill(tvec.begin(), tvec.end(), t);
      Tensor<T> eps_hat = predict_eps(x, tvec, labels_ptr);
      require(eps_hat.same_shape(x), "sample: predictor output shape mismatch");
      if (t > 1) {
        for (int64_t b = 0; b < bs; ++b) {
          T* zp = z.data() + b * elem;
          for (int64_t i = 0; i < elem; ++i) zp[i] = static_cast<T>(rngs[static_cast<size_t>(b)].normal());
        }
      } else {
        z.zero();
      }
      const double alpha = schedule.alpha(t);
      const double abar = schedule.alpha_bar(t);
      const T inv_sqrt_alpha = static_cast<T>(1.0 / std::sqrt(alpha));
      const T eps_coef = static_cast<T>((1.0 - alpha) / std::sqrt(1.0 - abar));
      const T sigma = static_cast<T>(sigma_for_step(t, schedule, options.sigma_kind));
      for (int64_t i = 0; i < x.size(); ++i)
        x[i] = inv_sqrt_alpha * (x[i] - eps_coef * eps_hat[i]) + sigma * z[i];
      ensure(x.all_finite(), "sample: non-finite value at timestep " + std::to_string(t));
    }
    if (options.clamp_output)
      for (int64_t i = 0; i < x.size(); ++i)
        x[i] = std::clamp(x[i], T(-1), T(1));
    std::copy(x.data(), x.data() + x.size(), out.data.data() + lo * elem);
  }
  return out;
}

}  // namespace sardiff
