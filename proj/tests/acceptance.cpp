// Acceptance suite: one check per release criterion, each printed as a
// single [PASS]/[FAIL] line with the measured values. Exit code is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "sardiff/sardiff.hpp"

using namespace sardiff;
namespace fs = std::filesystem;

namespace {

struct Moments {
  double mean, var;
};

Moments moments(const double* p, int64_t n) {
  double mean = 0;
  for (int64_t i = 0; i < n; ++i) mean += p[i];
  mean /= static_cast<double>(n);
  double var = 0;
  for (int64_t i = 0; i < n; ++i) var += (p[i] - mean) * (p[i] - mean);
  var /= static_cast<double>(n - 1);
  return {mean, var};
}

// ---------------------------------------------------------------------------
// 1. schedule correctness
// ---------------------------------------------------------------------------
bool criterion_schedule(std::ostream& log) {
  auto lin = NoiseSchedule::linear(1000, 1e-4, 0.02);
  bool ok = lin.alpha_bar(1) == 1.0 - 1e-4;
  log << "alpha_bar(1) = " << std::setprecision(17) << lin.alpha_bar(1)
      << " (exact 0.9999: " << (ok ? "yes" : "NO") << ")\n";

  long double prod = 1.0L;
  for (int t = 1; t <= 1000; ++t) {
    const long double beta =
        t == 1000 ? 0.02L : 1e-4L + (0.02L - 1e-4L) * (t - 1) / 999.0L;
    prod *= 1.0L - beta;
  }
  const double diff = std::abs(lin.alpha_bar(1000) - static_cast<double>(prod));
  log << "alpha_bar(1000) = " << lin.alpha_bar(1000) << ", extended-precision oracle "
      << static_cast<double>(prod) << ", |diff| = " << diff << "\n";
  ok = ok && diff < 1e-8;

  for (auto kind : {ScheduleKind::Linear, ScheduleKind::Cosine, ScheduleKind::Sigmoid}) {
    auto s = NoiseSchedule::make(kind, 1000, 1e-4, 0.02);
    for (int t = 1; t <= 1000; ++t)
      if (!(s.alpha_bar(t) < s.alpha_bar(t - 1))) {
        log << to_string(kind) << " not strictly decreasing at t=" << t << "\n";
        ok = false;
        break;
      }
  }
  log << "alpha_bar strictly decreasing for linear/cosine/sigmoid\n";
  return ok;
}

// ---------------------------------------------------------------------------
// 2. forward-process marginal moments
// ---------------------------------------------------------------------------
bool criterion_forward_marginal(std::ostream& log) {
  auto sched = NoiseSchedule::linear(1000, 1e-4, 0.02);
  const int n = 10000;
  const double x0v = 0.7;
  ImageBatch<double> x0{Tensor<double>::full({n, 1, 1, 1}, x0v), std::nullopt};
  Rng rng(1234);
  bool ok = true;
  for (int t : {1, 500, 1000}) {
    Tensor<double> eps = draw_noise<double>({n, 1, 1, 1}, rng);
    auto xt = forward_sample(x0, std::vector<int>(n, t), eps, sched);
    const Moments m = moments(xt.data.data(), n);
    const double abar = sched.alpha_bar(t);
    const double se_mean = std::sqrt(1.0 - abar) / std::sqrt(static_cast<double>(n));
    const double se_var = (1.0 - abar) * std::sqrt(2.0 / (n - 1));
    const bool mean_ok = std::abs(m.mean - std::sqrt(abar) * x0v) <= 3 * se_mean;
    const bool var_ok = std::abs(m.var - (1.0 - abar)) <= 3 * se_var;
    log << "t=" << t << ": mean " << m.mean << " vs " << std::sqrt(abar) * x0v
        << " (3se " << 3 * se_mean << "), var " << m.var << " vs " << 1.0 - abar
        << " (3se " << 3 * se_var << ")" << (mean_ok && var_ok ? "" : "  <-- FAIL")
        << "\n";
    ok = ok && mean_ok && var_ok;
  }
  return ok;
}

// ---------------------------------------------------------------------------
// 3. reverse-step identity at t = 1
// ---------------------------------------------------------------------------
bool criterion_reverse_identity(std::ostream& log) {
  auto sched = NoiseSchedule::linear(1000, 1e-4, 0.02);
  Rng rng(77);
  ImageBatch<float> x0{draw_noise<float>({8, 1, 8, 8}, rng), std::nullopt};
  for (int64_t i = 0; i < x0.data.size(); ++i)
    x0.data[i] = std::clamp(x0.data[i], -1.0f, 1.0f);
  Tensor<float> eps = draw_noise<float>({8, 1, 8, 8}, rng);
  auto x1 = forward_sample(x0, std::vector<int>(8, 1), eps, sched);
  Tensor<float> z({8, 1, 8, 8});
  auto rec = reverse_step(x1, 1, eps, z, sched);
  const double err = max_abs_diff(rec.data, x0.data);
  log << "max |reconstruction - x0| = " << err << " (tolerance 1e-5)\n";
  return err <= 1e-5;
}

// ---------------------------------------------------------------------------
// 4. analytic sampler oracle
// ---------------------------------------------------------------------------
bool criterion_analytic_sampler(std::ostream& log) {
  auto sched = NoiseSchedule::linear(1000, 1e-4, 0.02);
  struct Predictor {
    const NoiseSchedule* s;
    Tensor<double> operator()(const Tensor<double>& xt, const std::vector<int>& t,
                              const int32_t*) const {
      Tensor<double> out(xt.shape());
      for (int64_t b = 0; b < xt.dim(0); ++b)
        out[b] = std::sqrt(1.0 - s->alpha_bar(t[static_cast<size_t>(b)])) * xt[b];
      return out;
    }
  } pred{&sched};
  SampleOptions opts;
  opts.clamp_output = false;
  opts.chunk_size = 10000;
  auto out = sample<double>(pred, 10000, 1, 1, 1, std::nullopt, sched, 2024, opts);
  const Moments m = moments(out.data.data(), out.data.size());
  log << "10k-sample mean " << m.mean << " (|mean| < 0.05), variance " << m.var
      << " (within [0.9, 1.1])\n";
  return std::abs(m.mean) < 0.05 && m.var > 0.9 && m.var < 1.1;
}

// ---------------------------------------------------------------------------
// 5. gradient fidelity on the training objective
// ---------------------------------------------------------------------------
bool criterion_gradients(std::ostream& log) {
  UNetConfig cfg;
  cfg.in_channels = 1;
  cfg.base_channels = 8;
  cfg.channel_multipliers = {1, 2};
  cfg.res_blocks_total_per_side = 2;
  cfg.attention_resolution = 8;
  cfg.dropout_p = 0.0;
  cfg.num_classes = 3;
  cfg.image_size = 16;
  auto model = DenoiserModel<double>::build(cfg, 11);
  auto sched = NoiseSchedule::linear(1000, 1e-4, 0.02);

  Rng data_rng(5);
  Tensor<double> x0 = draw_noise<double>({2, 1, 16, 16}, data_rng);
  for (int64_t i = 0; i < x0.size(); ++i) x0[i] = std::clamp(x0[i], -1.0, 1.0);
  std::vector<int32_t> labels = {0, 2};

  Rng rng(99);
  const std::string state = rng.save_state();
  model.zero_grad();
  loss_step(model, x0, &labels, sched, rng, false);
  auto params = model.parameters();

  auto loss_replay = [&](DenoiserModel<double>& m) {
    Rng r(0);
    r.load_state(state);
    DenoiserModel<double> probe = m;
    probe.zero_grad();
    return loss_step(probe, x0, &labels, sched, r, false);
  };

  Rng pick(13);
  const double h = 1e-3;
  int checked = 0;
  double worst = 0;
  bool ok = true;
  while (checked < 20) {
    auto& p = params[static_cast<size_t>(
        pick.uniform_int(0, static_cast<int64_t>(params.size()) - 1))];
    const int64_t idx = pick.uniform_int(0, p.value->size() - 1);
    const double saved = (*p.value)[idx];
    (*p.value)[idx] = saved + h;
    const double lp = loss_replay(model);
    (*p.value)[idx] = saved - h;
    const double lm = loss_replay(model);
    (*p.value)[idx] = saved;
    const double fd = (lp - lm) / (2 * h);
    const double an = (*p.grad)[idx];
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
    worst = std::max(worst, rel);
    if (rel > 1e-3) {
      log << "FAIL " << p.name << "[" << idx << "]: analytic " << an << " fd " << fd
          << " rel " << rel << "\n";
      ok = false;
    }
    ++checked;
  }
  log << checked << " random parameters checked, worst relative error " << worst
      << " (tolerance 1e-3)\n";
  return ok;
}

// ---------------------------------------------------------------------------
// 6. training smoke: loss halves within 200 steps
// ---------------------------------------------------------------------------
bool criterion_training_smoke(std::ostream& log) {
  Dataset ds = generate_synthetic_dataset(10, 64, 16, 321);
  UNetConfig cfg;
  cfg.base_channels = 16;
  cfg.channel_multipliers = {1, 2};
  cfg.res_blocks_total_per_side = 2;
  cfg.attention_resolution = 8;
  cfg.dropout_p = 0.1;
  cfg.num_classes = 10;
  cfg.image_size = 16;
  TrainConfig tc;
  tc.epochs = 10;   // 640 images / batch 32 = 20 steps per epoch
  tc.batch_size = 32;
  tc.learning_rate = 1e-3;
  tc.seed = 7;
  tc.num_steps = 1000;
  tc.conditional = true;
  auto model = DenoiserModel<float>::build(cfg, 7);
  TrainReport rep = fit(model, ds, tc);
  if (rep.step_losses.size() < 200) {
    log << "expected 200 steps, got " << rep.step_losses.size() << "\n";
    return false;
  }
  auto mean_range = [&](size_t lo, size_t hi) {
    double s = 0;
    for (size_t i = lo; i < hi; ++i) s += rep.step_losses[i];
    return s / static_cast<double>(hi - lo);
  };
  const double first10 = mean_range(0, 10);
  const double last10 = mean_range(190, 200);
  log << "mean loss steps 1-10: " << first10 << ", steps 191-200: " << last10
      << " (ratio " << last10 / first10 << ", need <= 0.5)\n";

  // zero-predictor baseline: E||eps||^2 = 1
  auto sched = NoiseSchedule::linear(1000, 1e-4, 0.02);
  Rng rng(55);
  double zero_loss = 0;
  const int batches = 20;
  int64_t total = 0;
  for (int b = 0; b < batches; ++b) {
    Tensor<float> x0({32, 1, 16, 16});
    auto batch = make_training_batch(x0, sched, rng);
    Tensor<float> zeros(batch.eps.shape());
    zero_loss += mse_and_grad(zeros, batch.eps).first;
    total += batch.eps.size();
  }
  zero_loss /= batches;
  const double se = std::sqrt(2.0 / static_cast<double>(total));
  log << "zero-predictor loss " << zero_loss << " vs 1.0 (3se " << 3 * se << ")\n";
  return last10 <= 0.5 * first10 && std::abs(zero_loss - 1.0) <= 3 * se;
}

// ---------------------------------------------------------------------------
// 7. metric identities
// ---------------------------------------------------------------------------
bool criterion_metric_identities(std::ostream& log) {
  bool ok = true;

  Eigen::MatrixXd same(4, 3);
  for (int i = 0; i < 4; ++i) {
    same(i, 0) = 0.5;
    same(i, 1) = 0.3;
    same(i, 2) = 0.2;
  }
  const double is_same = inception_score(same);
  Eigen::MatrixXd onehot(2, 2);
  onehot << 1, 0, 0, 1;
  const double is_onehot = inception_score(onehot);
  log << "IS identical rows = " << is_same << " (want 1), one-hot pair = " << is_onehot
      << " (want 2)\n";
  ok = ok && std::abs(is_same - 1.0) < 1e-9 && std::abs(is_onehot - 2.0) < 1e-9;

  Rng rng(3);
  Eigen::MatrixXd f(64, 16);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 16; ++j) f(i, j) = rng.normal();
  FeatureSet fs_a{f, {}};
  const double fid_self = frechet_distance(fs_a, fs_a);
  const double a = std::sqrt(0.5);
  Eigen::MatrixXd x(2, 1), y(2, 1);
  x << -a, a;
  y << 1 - a, 1 + a;
  const double fid_1d = frechet_distance(FeatureSet{x, {}}, FeatureSet{y, {}});
  log << "FID self = " << fid_self << " (<= 1e-6), 1-D (0,1)-vs-(1,1) case = " << fid_1d
      << " (1.0 +- 1e-6)\n";
  ok = ok && std::abs(fid_self) <= 1e-6 && std::abs(fid_1d - 1.0) <= 1e-6;

  Eigen::MatrixXd kx(2, 1), ky(2, 1);
  kx << 0, 1;
  ky << 0, 1;
  const double kid_hand = kernel_distance(FeatureSet{kx, {}}, FeatureSet{ky, {}}, 2, 1, 0);
  log << "KID two-point hand example = " << kid_hand << " (want exactly -3.5)\n";
  ok = ok && kid_hand == -3.5;

  // unbiasedness: same-distribution KID within 3 standard errors of 0
  const int trials = 20, n = 256, d = 4;
  Rng krng(17);
  std::vector<double> vals;
  for (int trial = 0; trial < trials; ++trial) {
    Eigen::MatrixXd u(n, d), v(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        u(i, j) = krng.normal();
        v(i, j) = krng.normal();
      }
    vals.push_back(mmd2_polynomial(u, v));
  }
  const Moments m = moments(vals.data(), trials);
  const double se = std::sqrt(m.var / trials);
  log << "same-distribution KID mean " << m.mean << " (3se " << 3 * se << ")\n";
  ok = ok && std::abs(m.mean) <= 3 * se;
  return ok;
}

// ---------------------------------------------------------------------------
// 8. tiling arithmetic
// ---------------------------------------------------------------------------
bool criterion_tiling(std::ostream& log) {
  Tensor<float> scene({1784, 1476});
  const auto tiles = tile_scene(scene, TilingSpec{128});
  log << "1784x1476 scene -> " << tiles.size() << " tiles of 128x128; 100 scenes -> "
      << tiles.size() * 100 << " samples (want 143 / 14300)\n";
  return tiles.size() == 143 && tiles[0].dim(0) == 128;
}

// ---------------------------------------------------------------------------
// 9. end-to-end ordering at desk scale
// ---------------------------------------------------------------------------
double per_class_fid(const Eigen::MatrixXd& gen_feats, const std::vector<int32_t>& gen_labels,
                     const Eigen::MatrixXd& real_feats,
                     const std::vector<int32_t>& real_labels, int num_classes,
                     int label_shift, std::ostream& log, const char* tag) {
  double total = 0;
  for (int c = 0; c < num_classes; ++c) {
    const int source_class = (c + label_shift) % num_classes;
    std::vector<int> gi, ri;
    for (size_t i = 0; i < gen_labels.size(); ++i)
      if (gen_labels[i] == source_class) gi.push_back(static_cast<int>(i));
    for (size_t i = 0; i < real_labels.size(); ++i)
      if (real_labels[i] == c) ri.push_back(static_cast<int>(i));
    Eigen::MatrixXd g(gi.size(), gen_feats.cols()), r(ri.size(), real_feats.cols());
    for (size_t i = 0; i < gi.size(); ++i) g.row(static_cast<Eigen::Index>(i)) = gen_feats.row(gi[i]);
    for (size_t i = 0; i < ri.size(); ++i) r.row(static_cast<Eigen::Index>(i)) = real_feats.row(ri[i]);
    total += frechet_distance(FeatureSet{r, {}}, FeatureSet{g, {}});
  }
  const double mean = total / num_classes;
  log << "  mean per-class FID [" << tag << "] = " << mean << "\n";
  return mean;
}

bool criterion_end_to_end(std::ostream& log) {
  log << "note: absolute reference-scale scores are not reproducible at desk scale\n"
      << "      (they need the original 128x128 corpus and GPU-scale training);\n"
      << "      this criterion checks the quality ORDERING instead.\n";
  const int classes = 10, image_size = 32;
  Dataset train = generate_synthetic_dataset(classes, 100, image_size, 900);
  Dataset heldout = generate_synthetic_dataset(classes, 40, image_size, 901, &train.norm);

  ExtractorConfig xcfg;
  xcfg.feature_dim = 64;
  xcfg.epochs = 12;
  xcfg.seed = 5;
  SmallCnnExtractor extractor = train_feature_extractor(train, xcfg);
  {
    auto preds = extractor.predict_classes(heldout.images);
    int correct = 0;
    for (size_t i = 0; i < preds.size(); ++i)
      if (preds[i] == heldout.labels[i]) ++correct;
    log << "extractor held-out accuracy: "
        << static_cast<double>(correct) / static_cast<double>(preds.size()) << "\n";
  }

  UNetConfig cfg;
  cfg.base_channels = 16;
  cfg.channel_multipliers = {1, 2, 4};
  cfg.res_blocks_total_per_side = 3;
  cfg.attention_resolution = 8;
  cfg.dropout_p = 0.1;
  cfg.num_classes = classes;
  cfg.image_size = image_size;
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 32;
  tc.learning_rate = 1e-3;
  tc.seed = 42;
  tc.num_steps = 1000;
  tc.conditional = true;
  auto model = DenoiserModel<float>::build(cfg, 42);
  log << "training conditional model (" << model.parameter_count() << " parameters, "
      << tc.epochs << " epochs)...\n";
  TrainReport rep = fit(model, train, tc);
  log << "  first-epoch loss " << rep.epoch_losses.front() << ", last-epoch loss "
      << rep.epoch_losses.back() << "\n";

  auto sched = NoiseSchedule::linear(tc.num_steps, tc.beta_1, tc.beta_T);
  const int per_class = 20;
  std::vector<int32_t> gen_labels;
  for (int c = 0; c < classes; ++c)
    for (int k = 0; k < per_class; ++k) gen_labels.push_back(c);
  log << "sampling " << gen_labels.size() << " images over " << tc.num_steps
      << " steps...\n";
  ModelPredictor<float> pred{&model};
  ImageBatch<float> generated =
      sample<float>(pred, static_cast<int>(gen_labels.size()), 1, image_size, image_size,
                    gen_labels, sched, 1001);

  // pure-noise baseline
  Rng nrng(31);
  Tensor<float> noise = draw_noise<float>(generated.data.shape(), nrng);
  for (int64_t i = 0; i < noise.size(); ++i) noise[i] = std::clamp(noise[i], -1.0f, 1.0f);

  Eigen::MatrixXd gen_f, gen_p, real_f, real_p, noise_f, noise_p;
  extractor.extract(generated.data, gen_f, gen_p);
  extractor.extract(heldout.images, real_f, real_p);
  extractor.extract(noise, noise_f, noise_p);

  const double fid_gen =
      frechet_distance(FeatureSet{real_f, {}}, FeatureSet{gen_f, {}});
  const double fid_noise =
      frechet_distance(FeatureSet{real_f, {}}, FeatureSet{noise_f, {}});
  log << "global FID: generated " << fid_gen << "  vs pure-noise " << fid_noise << "\n";

  // class-scrambled baseline: real images presented as the wrong class
  const double fid_cond = per_class_fid(gen_f, gen_labels, real_f, heldout.labels,
                                        classes, 0, log, "generated vs matching class");
  const double fid_scrambled =
      per_class_fid(real_f, heldout.labels, real_f, heldout.labels, classes, 1, log,
                    "class-scrambled real vs real");

  const bool beats_noise = fid_gen < fid_noise;
  const bool beats_scrambled = fid_cond < fid_scrambled;
  log << "ordering: FID(gen) < FID(noise): " << (beats_noise ? "yes" : "NO")
      << "; per-class FID(gen) < FID(class-scrambled real): "
      << (beats_scrambled ? "yes" : "NO") << "\n";
  return beats_noise && beats_scrambled;
}

// ---------------------------------------------------------------------------
// 10. bit-identical reruns of randomized stages
// ---------------------------------------------------------------------------
bool criterion_determinism(std::ostream& log) {
  const fs::path dir = fs::temp_directory_path() / "sardiff_acceptance";
  fs::create_directories(dir);
  auto files_equal = [](const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    return sa.str() == sb.str() && sa.str().size() > 0;
  };
  bool ok = true;

  // dataset preparation
  for (int r = 0; r < 2; ++r) {
    Dataset ds = generate_synthetic_dataset(4, 10, 16, 77);
    save_tensor(dir / ("prep_" + std::to_string(r) + ".ten"), ds.images);
  }
  const bool prep_ok = files_equal(dir / "prep_0.ten", dir / "prep_1.ten");
  log << "dataset generation rerun bit-identical: " << (prep_ok ? "yes" : "NO") << "\n";
  ok = ok && prep_ok;

  // training
  Dataset ds = generate_synthetic_dataset(3, 16, 16, 31);
  UNetConfig cfg;
  cfg.base_channels = 8;
  cfg.channel_multipliers = {1, 2};
  cfg.res_blocks_total_per_side = 2;
  cfg.attention_resolution = 8;
  cfg.num_classes = 3;
  cfg.image_size = 16;
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 16;
  tc.learning_rate = 1e-3;
  tc.seed = 3;
  tc.num_steps = 100;
  tc.conditional = true;
  for (int r = 0; r < 2; ++r) {
    auto model = DenoiserModel<float>::build(cfg, 3);
    fit(model, ds, tc);
    Checkpoint ck;
    ck.kind = kDenoiserKind;
    ck.config = unet_config_to_json(cfg);
    for (auto& p : model.parameters()) ck.tensors.emplace_back(p.name, *p.value);
    save_checkpoint(dir / ("train_" + std::to_string(r) + ".ckpt"), ck);
  }
  const bool train_ok = files_equal(dir / "train_0.ckpt", dir / "train_1.ckpt");
  log << "training rerun bit-identical checkpoint: " << (train_ok ? "yes" : "NO") << "\n";
  ok = ok && train_ok;

  // sampling (also across different chunk sizes)
  auto model = DenoiserModel<float>::build(cfg, 3);
  auto sched = NoiseSchedule::linear(100, 1e-4, 0.02);
  ModelPredictor<float> pred{&model};
  std::vector<int32_t> labels = {0, 1, 2, 0, 1, 2};
  for (int r = 0; r < 2; ++r) {
    SampleOptions opts;
    opts.chunk_size = r == 0 ? 4 : 6;
    auto out = sample<float>(pred, 6, 1, 16, 16, labels, sched, 55, opts);
    save_tensor(dir / ("sample_" + std::to_string(r) + ".ten"), out.data);
  }
  const bool sample_ok = files_equal(dir / "sample_0.ten", dir / "sample_1.ten");
  log << "sampling rerun bit-identical (across chunk sizes): "
      << (sample_ok ? "yes" : "NO") << "\n";
  return ok && sample_ok;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::ostream&)> fn;
  };
  // optional arguments: criterion ids to run (default all)
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const std::vector<Criterion> criteria = {
      {1, "schedule correctness", criterion_schedule},
      {2, "forward-process marginal", criterion_forward_marginal},
      {3, "reverse-step identity", criterion_reverse_identity},
      {4, "analytic sampler oracle", criterion_analytic_sampler},
      {5, "gradient fidelity", criterion_gradients},
      {6, "training smoke", criterion_training_smoke},
      {7, "metric identities", criterion_metric_identities},
      {8, "tiling arithmetic", criterion_tiling},
      {9, "end-to-end ordering", criterion_end_to_end},
      {10, "determinism", criterion_determinism},
  };

  int failures = 0;
  int ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end())
      continue;
    ++ran;
    std::ostringstream detail;
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail << "exception: " << e.what() << "\n";
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": " << c.name
              << " (" << std::fixed << std::setprecision(1) << seconds << " s)\n";
    std::istringstream lines(detail.str());
    std::string line;
    while (std::getline(lines, line)) std::cout << "    " << line << "\n";
    std::cout.unsetf(std::ios::fixed);
    std::cout.flush();
    if (!ok) ++failures;
  }
  if (failures == 0)
    std::cout << "ALL " << ran << " CRITERIA PASSED\n";
  else
    std::cout << failures << " of " << ran << " CRITERIA FAILED\n";
  return failures;
}
