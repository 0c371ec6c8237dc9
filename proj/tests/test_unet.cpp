#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sardiff/checkpoint.hpp"
#include "sardiff/diffusion.hpp"
#include "sardiff/unet.hpp"

using namespace sardiff;
namespace fs = std::filesystem;

namespace {

UNetConfig tiny_config(int image_size = 16, int base = 8, int num_classes = 0) {
  UNetConfig c;
  c.in_channels = 1;
  c.base_channels = base;
  c.channel_multipliers = {1, 2};
  c.res_blocks_total_per_side = 2;
  c.attention_resolution = image_size / 2;
  c.dropout_p = 0.1;
  c.num_classes = num_classes;
  c.image_size = image_size;
  return c;
}

template <typename T>
double param_checksum(DenoiserModel<T>& m) {
  double s = 0;
  for (auto& p : m.parameters())
    for (int64_t i = 0; i < p.value->size(); ++i)
      s += static_cast<double>((*p.value)[i]) * static_cast<double>((i % 13) + 1);
  return s;
}

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "sardiff_unet_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(UNetConfig, PaperDefaultsProduceExpectedGeometry) {
  UNetConfig c;   // defaults
  c.validate();
  EXPECT_EQ(c.levels(), 4);
  EXPECT_EQ(c.level_resolution(0), 128);
  EXPECT_EQ(c.level_resolution(1), 64);
  EXPECT_EQ(c.level_resolution(2), 32);
  EXPECT_EQ(c.level_resolution(3), 16);
  EXPECT_EQ(c.level_channels(0), 64);
  EXPECT_EQ(c.level_channels(1), 128);
  EXPECT_EQ(c.level_channels(2), 256);
  EXPECT_EQ(c.level_channels(3), 512);
  EXPECT_EQ(c.attention_resolution, 32);
  const auto blocks = c.blocks_per_level();
  EXPECT_EQ(blocks, (std::vector<int>{2, 2, 2, 2}));
  EXPECT_EQ(c.effective_time_dim(), 256);
}

TEST(UNetConfig, ValidationRejectsBadSetups) {
  UNetConfig c = tiny_config();
  c.image_size = 15;   // not divisible by 2
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.attention_resolution = 5;   // not a produced resolution
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.res_blocks_total_per_side = 1;   // fewer than levels
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.dropout_p = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(UNetConfig, RemainderBlocksGoToDeeperLevels) {
  UNetConfig c = tiny_config();
  c.channel_multipliers = {1, 2, 4};
  c.res_blocks_total_per_side = 8;
  c.image_size = 16;
  c.attention_resolution = 4;
  EXPECT_EQ(c.blocks_per_level(), (std::vector<int>{2, 3, 3}));
}

TEST(DenoiserModel, BuildIsDeterministicPerSeed) {
  auto cfg = tiny_config();
  auto a = DenoiserModel<float>::build(cfg, 42);
  auto b = DenoiserModel<float>::build(cfg, 42);
  auto c = DenoiserModel<float>::build(cfg, 43);
  EXPECT_EQ(param_checksum(a), param_checksum(b));
  EXPECT_NE(param_checksum(a), param_checksum(c));
}

TEST(DenoiserModel, ShapePreservedAcrossSizes) {
  for (int size : {16, 32}) {
    auto cfg = tiny_config(size);
    auto model = DenoiserModel<float>::build(cfg, 1);
    Rng rng(4);
    Tensor<float> x = draw_noise<float>({3, 1, size, size}, rng);
    Tensor<float> y = model.predict_noise(x, {1, 10, 99});
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_TRUE(y.all_finite());
  }
}

TEST(DenoiserModel, InferenceIsDeterministic) {
  auto model = DenoiserModel<float>::build(tiny_config(), 7);
  Rng rng(2);
  Tensor<float> x = draw_noise<float>({2, 1, 16, 16}, rng);
  Tensor<float> y1 = model.predict_noise(x, {5, 7});
  Tensor<float> y2 = model.predict_noise(x, {5, 7});
  EXPECT_EQ(max_abs_diff(y1, y2), 0.0);
}

TEST(DenoiserModel, ClassConditioningReachesOutput) {
  auto model = DenoiserModel<float>::build(tiny_config(16, 8, 4), 11);
  Rng rng(5);
  Tensor<float> x = draw_noise<float>({2, 1, 16, 16}, rng);
  std::vector<int32_t> ci = {0, 0}, cj = {3, 3};
  Tensor<float> yi = model.predict_noise(x, {10, 10}, &ci);
  Tensor<float> yj = model.predict_noise(x, {10, 10}, &cj);
  EXPECT_GT(max_abs_diff(yi, yj), 0.0);

  EXPECT_THROW(model.predict_noise(x, {10, 10}, nullptr), std::invalid_argument);
  std::vector<int32_t> bad = {0, 4};
  EXPECT_THROW(model.predict_noise(x, {10, 10}, &bad), std::invalid_argument);
  EXPECT_THROW(model.predict_noise(x, {0, 10}, &ci), std::invalid_argument);
}

TEST(DenoiserModel, TimestepChangesOutput) {
  auto model = DenoiserModel<float>::build(tiny_config(), 3);
  Rng rng(6);
  Tensor<float> x = draw_noise<float>({1, 1, 16, 16}, rng);
  Tensor<float> y1 = model.predict_noise(x, {1});
  Tensor<float> y2 = model.predict_noise(x, {999});
  EXPECT_GT(max_abs_diff(y1, y2), 0.0);
}

// Independent parameter accounting for the reference architecture.
TEST(DenoiserModel, ParameterCountClosedForm) {
  auto conv = [](int64_t in, int64_t out, int64_t k) { return out * in * k * k + out; };
  auto gn = [](int64_t ch) { return 2 * ch; };
  auto linear = [](int64_t in, int64_t out) { return out * in + out; };
  auto resblock = [&](int64_t in, int64_t out, int64_t tdim) {
    int64_t n = gn(in) + conv(in, out, 3) + linear(tdim, out) + gn(out) + conv(out, out, 3);
    if (in != out) n += conv(in, out, 1);
    return n;
  };
  auto attn = [&](int64_t ch) { return gn(ch) + 4 * (ch * ch + ch); };

  UNetConfig c;   // paper defaults: base 64, mults 1/2/4/8, 8 blocks/side
  const int64_t tdim = 256;
  const std::vector<int64_t> ch = {64, 128, 256, 512};
  int64_t expected = 0;
  expected += conv(1, 64, 3);                 // stem
  expected += linear(64, tdim) + linear(tdim, tdim);
  int64_t prev = 64;
  for (int i = 0; i < 4; ++i) {
    expected += resblock(prev, ch[i], tdim) + resblock(ch[i], ch[i], tdim);
    if (i == 2) expected += 2 * attn(ch[i]);   // 32x32 level
    if (i < 3) expected += conv(ch[i], ch[i], 3);   // downsample
    prev = ch[i];
  }
  expected += resblock(512, 512, tdim) + attn(512) + resblock(512, 512, tdim);
  for (int i = 3; i >= 0; --i) {
    expected += 2 * resblock(2 * ch[i], ch[i], tdim);
    if (i == 2) expected += 2 * attn(ch[i]);
    if (i > 0) expected += conv(ch[i], ch[i - 1], 3);   // post-upsample conv
  }
  expected += gn(64) + conv(64, 1, 3);        // output head

  auto model = DenoiserModel<float>::build(c, 0);
  EXPECT_EQ(model.parameter_count(), expected);
}

// Full-model gradient check on the tiny configuration: mean-squared output
// against central finite differences.
TEST(DenoiserModel, GradientMatchesFiniteDifferences) {
  auto cfg = tiny_config(16, 8, 3);   // conditional: exercises the class table
  cfg.dropout_p = 0.0;
  auto model = DenoiserModel<double>::build(cfg, 21);
  Rng rng(9);
  Tensor<double> x = draw_noise<double>({2, 1, 16, 16}, rng);
  std::vector<int> t = {3, 47};
  std::vector<int32_t> labels = {1, 2};

  auto loss_of = [&](DenoiserModel<double>& m) {
    Tensor<double> y = m.forward(x, t, &labels, nullptr, false, nullptr);
    double s = 0;
    for (int64_t i = 0; i < y.size(); ++i) s += y[i] * y[i];
    return s / static_cast<double>(y.size());
  };

  typename DenoiserModel<double>::Cache cache;
  Tensor<double> y = model.forward(x, t, &labels, &cache, false, nullptr);
  Tensor<double> grad(y.shape());
  for (int64_t i = 0; i < y.size(); ++i)
    grad[i] = 2.0 * y[i] / static_cast<double>(y.size());
  model.zero_grad();
  model.backward(grad, cache);

  auto params = model.parameters();
  Rng pick(33);
  int checked = 0;
  const double h = 1e-3;
  for (int trial = 0; trial < 25; ++trial) {
    auto& p = params[static_cast<size_t>(pick.uniform_int(0, static_cast<int64_t>(params.size()) - 1))];
    const int64_t idx = pick.uniform_int(0, p.value->size() - 1);
    const double saved = (*p.value)[idx];
    (*p.value)[idx] = saved + h;
    const double lp = loss_of(model);
    (*p.value)[idx] = saved - h;
    const double lm = loss_of(model);
    (*p.value)[idx] = saved;
    const double fd = (lp - lm) / (2 * h);
    const double analytic = (*p.grad)[idx];
    const double err = std::abs(fd - analytic);
    EXPECT_LE(err, 1e-3 * std::max({std::abs(fd), std::abs(analytic), 1e-4}))
        << p.name << "[" << idx << "] analytic=" << analytic << " fd=" << fd;
    ++checked;
  }
  EXPECT_GE(checked, 20);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  auto cfg = tiny_config(16, 8, 2);
  auto model = DenoiserModel<float>::build(cfg, 55);
  const auto path = temp_dir() / "model.ckpt";
  save_model(path, model);
  auto back = load_model(path);

  EXPECT_EQ(back.config().num_classes, 2);
  EXPECT_EQ(back.parameter_count(), model.parameter_count());
  Rng rng(8);
  Tensor<float> x = draw_noise<float>({2, 1, 16, 16}, rng);
  std::vector<int32_t> ids = {0, 1};
  Tensor<float> y1 = model.predict_noise(x, {4, 9}, &ids);
  Tensor<float> y2 = back.predict_noise(x, {4, 9}, &ids);
  EXPECT_EQ(max_abs_diff(y1, y2), 0.0);
}

TEST(Checkpoint, TruncatedAndCorruptFilesRejected) {
  auto model = DenoiserModel<float>::build(tiny_config(), 1);
  const auto path = temp_dir() / "trunc.ckpt";
  save_model(path, model);

  const auto truncated = temp_dir() / "cut.ckpt";
  fs::copy_file(path, truncated, fs::copy_options::overwrite_existing);
  fs::resize_file(truncated, fs::file_size(truncated) / 2);
  EXPECT_THROW(load_model(truncated), std::runtime_error);

  // flip one payload byte: checksum must catch it
  const auto corrupt = temp_dir() / "corrupt.ckpt";
  fs::copy_file(path, corrupt, fs::copy_options::overwrite_existing);
  {
    std::fstream f(corrupt, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(fs::file_size(corrupt) / 2));
    char b = 0x5A;
    f.write(&b, 1);
  }
  EXPECT_THROW(load_model(corrupt), std::runtime_error);
}

TEST(Checkpoint, ConfigConflictDetected) {
  auto model = DenoiserModel<float>::build(tiny_config(16, 8, 0), 2);
  // manifest says one thing, config another
  Checkpoint ck;
  ck.kind = kDenoiserKind;
  UNetConfig other = tiny_config(16, 8, 0);
  other.base_channels = 16;
  ck.config = unet_config_to_json(other);
  for (auto& p : model.parameters()) ck.tensors.emplace_back(p.name, *p.value);
  const auto path = temp_dir() / "conflict.ckpt";
  save_checkpoint(path, ck);
  EXPECT_THROW(load_model(path), std::runtime_error);
}

TEST(Checkpoint, TransferKeepsSharedParameters) {
  auto uncond = DenoiserModel<float>::build(tiny_config(16, 8, 0), 77);
  auto cond = DenoiserModel<float>::build(tiny_config(16, 8, 5), 78);
  cond.load_matching_params(uncond);
  // every shared tensor equal; class table present only in the conditional
  auto up = uncond.parameters();
  auto cp = cond.parameters();
  EXPECT_EQ(cp.size(), up.size() + 1);
  int matched = 0;
  bool found_class_table = false;
  for (auto& c : cp) {
    bool shared = false;
    for (auto& u : up) {
      if (u.name == c.name) {
        EXPECT_EQ(max_abs_diff(*u.value, *c.value), 0.0) << c.name;
        shared = true;
        ++matched;
        break;
      }
    }
    if (!shared) {
      EXPECT_EQ(c.name, "class_embed.table");
      found_class_table = true;
    }
  }
  EXPECT_EQ(matched, static_cast<int>(up.size()));
  EXPECT_TRUE(found_class_table);
}
