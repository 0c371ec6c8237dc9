#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sardiff/nn.hpp"
#include "sardiff/rng.hpp"
#include "sardiff/tensor.hpp"

namespace sardiff {

// Architecture of the noise predictor. Defaults follow the reference setup:
// 128x128 inputs, 64 base channels doubling at each of three downsamplings,
// eight residual blocks per side, self-attention at the 32x32 feature maps.
struct UNetConfig {
  int in_channels = 1;
  int base_channels = 64;
  std::vector<int> channel_multipliers = {1, 2, 4, 8};
  int res_blocks_total_per_side = 8;
  int attention_resolution = 32;
  double dropout_p = 0.3;
  int num_classes = 0;   // 0 = unconditional
  int time_embed_dim = 0;   // 0 = 4 * base_channels
  int image_size = 128;

  int levels() const { return static_cast<int>(channel_multipliers.size()); }
  bool conditional() const { return num_classes > 0; }
  int effective_time_dim() const {
    return time_embed_dim > 0 ? time_embed_dim : 4 * base_channels;
  }
  int level_resolution(int level) const { return image_size >> level; }
  int level_channels(int level) const {
    return base_channels * channel_multipliers[static_cast<size_t>(level)];
  }

  void validate() const {
    require(in_channels >= 1, "UNetConfig: in_channels must be >= 1");
    require(base_channels >= 2 && base_channels % 2 == 0,
            "UNetConfig: base_channels must be even and >= 2");
    require(levels() >= 1, "UNetConfig: need at least one channel multiplier");
    for (int m : channel_multipliers)
      require(m >= 1, "UNetConfig: channel multipliers must be >= 1");
    require(dropout_p >= 0.0 && dropout_p < 1.0, "UNetConfig: dropout_p in [0,1)");
    require(num_classes >= 0, "UNetConfig: num_classes must be >= 0");
    require(image_size >= 1, "UNetConfig: image_size must be >= 1");
    const int down = levels() - 1;
    require(image_size % (1 << down) == 0,
            "UNetConfig: image_size must be divisible by 2^(levels-1)");
    require(res_blocks_total_per_side >= levels(),
            "UNetConfig: res_blocks_total_per_side must be >= number of levels");
    bool attn_ok = false;
    for (int i = 1; i < levels(); ++i)
      if (level_resolution(i) == attention_resolution) attn_ok = true;
    require(attn_ok,
            "UNetConfig: attention_resolution must be one of the downsampled "
            "feature-map sizes");
  }

  // Residual blocks per resolution level; any remainder goes to the deeper
  // levels so the shallow (expensive) ones stay lean.
  std::vector<int> blocks_per_level() const {
    const int L = levels();
    std::vector<int> n(static_cast<size_t>(L), res_blocks_total_per_side / L);
    const int rem = res_blocks_total_per_side % L;
    for (int i = 0; i < rem; ++i) ++n[static_cast<size_t>(L - 1 - i)];
    return n;
  }
};

namespace detail {

// GroupNorm -> SiLU -> conv, timestep/class embedding injected between the
// convolutions, plus an identity or 1x1 projection shortcut.
template <typename T>
struct ResBlock {
  nn::GroupNorm<T> gn1, gn2;
  nn::Conv2d<T> conv1, conv2;
  nn::Linear<T> emb_proj;
  nn::Dropout<T> dropout;
  std::optional<nn::Conv2d<T>> skip;
  int in_ch = 0, out_ch = 0;

  struct Cache {
    typename nn::GroupNorm<T>::Cache gn1, gn2;
    typename nn::SiLU<T>::Cache silu1, silu2, silu_emb;
    typename nn::Conv2d<T>::Cache conv1, conv2, skip;
    typename nn::Linear<T>::Cache emb_proj;
    typename nn::Dropout<T>::Cache dropout;
  };

  ResBlock() = default;
  ResBlock(int in_channels, int out_channels, int emb_dim, double dropout_p)
      : gn1(in_channels), gn2(out_channels),
        conv1(in_channels, out_channels, 3, 1, 1),
        conv2(out_channels, out_channels, 3, 1, 1),
        emb_proj(emb_dim, out_channels), dropout(dropout_p),
        in_ch(in_channels), out_ch(out_channels) {
    if (in_channels != out_channels) skip.emplace(in_channels, out_channels, 1, 1, 0);
  }

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng, 0.1);   // damped: feeds the residual sum
    emb_proj.init(rng);
    if (skip) skip->init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& emb, Cache* cache,
                    bool train_mode, Rng* rng) const {
    Tensor<T> h = gn1.forward(x, cache ? &cache->gn1 : nullptr);
    h = nn::SiLU<T>::forward(h, cache ? &cache->silu1 : nullptr);
    h = conv1.forward(h, cache ? &cache->conv1 : nullptr);

    Tensor<T> e = nn::SiLU<T>::forward(emb, cache ? &cache->silu_emb : nullptr);
    e = emb_proj.forward(e, cache ? &cache->emb_proj : nullptr);
    const int64_t B = h.dim(0), HW = h.dim(2) * h.dim(3);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < out_ch; ++c) {
        T* hp = h.data() + (b * out_ch + c) * HW;
        const T ev = e[b * out_ch + c];
        for (int64_t i = 0; i < HW; ++i) hp[i] += ev;
      }

    Tensor<T> h2 = gn2.forward(h, cache ? &cache->gn2 : nullptr);
    h2 = nn::SiLU<T>::forward(h2, cache ? &cache->silu2 : nullptr);
    h2 = dropout.forward(h2, cache ? &cache->dropout : nullptr, train_mode, rng);
    h2 = conv2.forward(h2, cache ? &cache->conv2 : nullptr);

    if (skip) {
      Tensor<T> xs = skip->forward(x, cache ? &cache->skip : nullptr);
      h2 += xs;
    } else {
      h2 += x;
    }
    return h2;
  }

  // Returns (grad_input, grad_embedding).
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& gy, const Cache& cache) {
    Tensor<T> gh = conv2.backward(gy, cache.conv2);
    gh = dropout.backward(gh, cache.dropout);
    gh = nn::SiLU<T>::backward(gh, cache.silu2);
    gh = gn2.backward(gh, cache.gn2);

    const int64_t B = gh.dim(0), HW = gh.dim(2) * gh.dim(3);
    Tensor<T> ge({B, out_ch});
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < out_ch; ++c) {
        const T* hp = gh.data() + (b * out_ch + c) * HW;
        double s = 0;
        for (int64_t i = 0; i < HW; ++i) s += hp[i];
        ge[b * out_ch + c] = static_cast<T>(s);
      }
    Tensor<T> gemb = emb_proj.backward(ge, cache.emb_proj);
    gemb = nn::SiLU<T>::backward(gemb, cache.silu_emb);

    Tensor<T> gx = conv1.backward(gh, cache.conv1);
    gx = nn::SiLU<T>::backward(gx, cache.silu1);
    gx = gn1.backward(gx, cache.gn1);

    if (skip) {
      Tensor<T> gskip = skip->backward(gy, cache.skip);
      gx += gskip;
    } else {
      gx += gy;
    }
    return {std::move(gx), std::move(gemb)};
  }

  void collect_params(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) {
    gn1.collect_params(prefix + ".gn1", out);
    conv1.collect_params(prefix + ".conv1", out);
    emb_proj.collect_params(prefix + ".emb_proj", out);
    gn2.collect_params(prefix + ".gn2", out);
    conv2.collect_params(prefix + ".conv2", out);
    if (skip) skip->collect_params(prefix + ".skip", out);
  }
};

}  // namespace detail

// The epsilon predictor: a UNet with residual blocks, group normalization,
// self-attention at one feature-map resolution, sinusoidal timestep
// embeddings and an optional class-embedding table summed into them.
template <typename T>
class DenoiserModel {
 public:
  struct Cache;

  DenoiserModel() = default;

  static DenoiserModel build(const UNetConfig& config, uint64_t seed) {
    config.validate();
    DenoiserModel m;
    m.cfg_ = config;
    const int L = config.levels();
    const int tdim = config.effective_time_dim();
    const auto nblocks = config.blocks_per_level();

    m.time_mlp1_ = nn::Linear<T>(config.base_channels, tdim);
    m.time_mlp2_ = nn::Linear<T>(tdim, tdim);
    if (config.conditional())
      m.class_embed_ = nn::Embedding<T>(config.num_classes, tdim);
    m.stem_ = nn::Conv2d<T>(config.in_channels, config.base_channels, 3, 1, 1);

    m.enc_.resize(static_cast<size_t>(L));
    int ch = config.base_channels;
    for (int i = 0; i < L; ++i) {
      auto& lvl = m.enc_[static_cast<size_t>(i)];
      lvl.attn_here = config.level_resolution(i) == config.attention_resolution;
      const int out = config.level_channels(i);
      for (int j = 0; j < nblocks[static_cast<size_t>(i)]; ++j) {
        lvl.blocks.emplace_back(j == 0 ? ch : out, out, tdim, config.dropout_p);
        if (lvl.attn_here) lvl.attns.emplace_back(out);
      }
      ch = out;
      if (i + 1 < L) lvl.down = nn::Conv2d<T>(ch, ch, 3, 2, 1);
    }

    m.mid1_ = detail::ResBlock<T>(ch, ch, tdim, config.dropout_p);
    m.mid_attn_ = nn::AttentionBlock<T>(ch);
    m.mid2_ = detail::ResBlock<T>(ch, ch, tdim, config.dropout_p);

    m.dec_.resize(static_cast<size_t>(L));
    for (int i = L - 1; i >= 0; --i) {
      auto& lvl = m.dec_[static_cast<size_t>(i)];
      lvl.attn_here = config.level_resolution(i) == config.attention_resolution;
      const int out = config.level_channels(i);
      for (int j = 0; j < nblocks[static_cast<size_t>(i)]; ++j) {
        lvl.blocks.emplace_back(out + out, out, tdim, config.dropout_p);
        if (lvl.attn_here) lvl.attns.emplace_back(out);
      }
      if (i > 0) lvl.up = nn::Conv2d<T>(out, config.level_channels(i - 1), 3, 1, 1);
    }

    m.out_norm_ = nn::GroupNorm<T>(config.base_channels);
    m.out_conv_ = nn::Conv2d<T>(config.base_channels, config.in_channels, 3, 1, 1);

    Rng rng(seed);
    m.init_params(rng);
    return m;
  }

  const UNetConfig& config() const { return cfg_; }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& p : const_cast<DenoiserModel*>(this)->parameters()) n += p.value->size();
    return n;
  }

  std::vector<nn::ParamRef<T>> parameters() {
    std::vector<nn::ParamRef<T>> out;
    stem_.collect_params("stem", out);
    time_mlp1_.collect_params("time.mlp1", out);
    time_mlp2_.collect_params("time.mlp2", out);
    if (class_embed_) class_embed_->collect_params("class_embed", out);
    for (size_t i = 0; i < enc_.size(); ++i) {
      auto& lvl = enc_[i];
      for (size_t j = 0; j < lvl.blocks.size(); ++j) {
        const std::string p = "enc." + std::to_string(i) + ".block" + std::to_string(j);
        lvl.blocks[j].collect_params(p, out);
        if (lvl.attn_here) lvl.attns[j].collect_params(
            "enc." + std::to_string(i) + ".attn" + std::to_string(j), out);
      }
      if (lvl.down) lvl.down->collect_params("enc." + std::to_string(i) + ".down", out);
    }
    mid1_.collect_params("mid.block1", out);
    mid_attn_.collect_params("mid.attn", out);
    mid2_.collect_params("mid.block2", out);
    for (size_t i = 0; i < dec_.size(); ++i) {
      auto& lvl = dec_[i];
      for (size_t j = 0; j < lvl.blocks.size(); ++j) {
        const std::string p = "dec." + std::to_string(i) + ".block" + std::to_string(j);
        lvl.blocks[j].collect_params(p, out);
        if (lvl.attn_here) lvl.attns[j].collect_params(
            "dec." + std::to_string(i) + ".attn" + std::to_string(j), out);
      }
      if (lvl.up) lvl.up->collect_params("dec." + std::to_string(i) + ".up", out);
    }
    out_norm_.collect_params("out.norm", out);
    out_conv_.collect_params("out.conv", out);
    return out;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.grad->zero();
  }

  struct Cache {
    typename nn::Conv2d<T>::Cache stem;
    typename nn::Linear<T>::Cache mlp1, mlp2;
    typename nn::SiLU<T>::Cache mlp_silu;
    typename nn::Embedding<T>::Cache class_embed;
    struct LevelCache {
      std::vector<typename detail::ResBlock<T>::Cache> blocks;
      std::vector<typename nn::AttentionBlock<T>::Cache> attns;
      typename nn::Conv2d<T>::Cache updown;
    };
    std::vector<LevelCache> enc, dec;
    typename detail::ResBlock<T>::Cache mid1, mid2;
    typename nn::AttentionBlock<T>::Cache mid_attn;
    typename nn::GroupNorm<T>::Cache out_norm;
    typename nn::SiLU<T>::Cache out_silu;
    typename nn::Conv2d<T>::Cache out_conv;
    std::vector<int64_t> skip_channels;
  };

  // Epsilon prediction. `t` is 1-based, one timestep per batch element.
  // Labels are required iff the model is conditional. `cache` enables a
  // later backward(); dropout fires only in train_mode.
  Tensor<T> forward(const Tensor<T>& x, const std::vector<int>& t,
                    const std::vector<int32_t>* labels, Cache* cache,
                    bool train_mode, Rng* rng) const {
    require(x.rank() == 4, "predict_noise: input must be [B,C,H,W]");
    const int64_t B = x.dim(0);
    require(x.dim(1) == cfg_.in_channels && x.dim(2) == cfg_.image_size &&
                x.dim(3) == cfg_.image_size,
            "predict_noise: input shape does not match model config");
    require(static_cast<int64_t>(t.size()) == B,
            "predict_noise: timestep vector length must equal batch");
    for (int tv : t) require(tv >= 1, "predict_noise: timesteps are 1-based");
    if (cfg_.conditional()) {
      require(labels != nullptr, "predict_noise: conditional model needs class ids");
      for (int64_t b = 0; b < B; ++b)
        require(labels->at(static_cast<size_t>(b)) >= 0 &&
                    labels->at(static_cast<size_t>(b)) < cfg_.num_classes,
                "predict_noise: class id out of range");
    }
    require(!train_mode || rng != nullptr, "predict_noise: train mode needs an rng");

    // Timestep + class embedding.
    Tensor<T> emb = nn::sinusoidal_embedding<T>(t, cfg_.base_channels);
    emb = time_mlp1_.forward(emb, cache ? &cache->mlp1 : nullptr);
    emb = nn::SiLU<T>::forward(emb, cache ? &cache->mlp_silu : nullptr);
    emb = time_mlp2_.forward(emb, cache ? &cache->mlp2 : nullptr);
    if (cfg_.conditional() && labels) {
      Tensor<T> ce = class_embed_->forward(*labels, cache ? &cache->class_embed : nullptr);
      emb += ce;
    }

    if (cache) {
      cache->enc.resize(enc_.size());
      cache->dec.resize(dec_.size());
      cache->skip_channels.clear();
    }

    Tensor<T> h = stem_.forward(x, cache ? &cache->stem : nullptr);
    std::vector<Tensor<T>> skips;
    for (size_t i = 0; i < enc_.size(); ++i) {
      const auto& lvl = enc_[i];
      auto* lc = cache ? &cache->enc[i] : nullptr;
      if (lc) {
        lc->blocks.resize(lvl.blocks.size());
        lc->attns.resize(lvl.attns.size());
      }
      for (size_t j = 0; j < lvl.blocks.size(); ++j) {
        h = lvl.blocks[j].forward(h, emb, lc ? &lc->blocks[j] : nullptr, train_mode, rng);
        if (lvl.attn_here)
          h = lvl.attns[j].forward(h, lc ? &lc->attns[j] : nullptr);
        skips.push_back(h);
        if (cache) cache->skip_channels.push_back(h.dim(1));
      }
      if (lvl.down) h = lvl.down->forward(h, lc ? &lc->updown : nullptr);
    }

    h = mid1_.forward(h, emb, cache ? &cache->mid1 : nullptr, train_mode, rng);
    h = mid_attn_.forward(h, cache ? &cache->mid_attn : nullptr);
    h = mid2_.forward(h, emb, cache ? &cache->mid2 : nullptr, train_mode, rng);

    for (size_t ri = 0; ri < dec_.size(); ++ri) {
      const size_t i = dec_.size() - 1 - ri;
      const auto& lvl = dec_[i];
      auto* lc = cache ? &cache->dec[i] : nullptr;
      if (lc) {
        lc->blocks.resize(lvl.blocks.size());
        lc->attns.resize(lvl.attns.size());
      }
      for (size_t j = 0; j < lvl.blocks.size(); ++j) {
        Tensor<T> cat = concat_channels(h, skips.back());
        skips.pop_back();
        h = lvl.blocks[j].forward(cat, emb, lc ? &lc->blocks[j] : nullptr, train_mode, rng);
        if (lvl.attn_here)
          h = lvl.attns[j].forward(h, lc ? &lc->attns[j] : nullptr);
      }
      if (lvl.up) {
        h = nn::Upsample2x<T>::forward(h);
        h = lvl.up->forward(h, lc ? &lc->updown : nullptr);
      }
    }

    h = out_norm_.forward(h, cache ? &cache->out_norm : nullptr);
    h = nn::SiLU<T>::forward(h, cache ? &cache->out_silu : nullptr);
    h = out_conv_.forward(h, cache ? &cache->out_conv : nullptr);
    return h;
  }

  // Inference-mode prediction (dropout off, no cache).
  Tensor<T> predict_noise(const Tensor<T>& x, const std::vector<int>& t,
                          const std::vector<int32_t>* labels = nullptr) const {
    return forward(x, t, labels, nullptr, false, nullptr);
  }

  // Accumulates parameter gradients for the forward pass recorded in `cache`.
  // Returns the gradient with respect to the input.
  Tensor<T> backward(const Tensor<T>& grad_out, Cache& cache) {
    Tensor<T> gh = out_conv_.backward(grad_out, cache.out_conv);
    gh = nn::SiLU<T>::backward(gh, cache.out_silu);
    gh = out_norm_.backward(gh, cache.out_norm);

    Tensor<T> gemb;   // accumulated below
    auto add_emb = [&gemb](Tensor<T>&& g) {
      if (gemb.empty())
        gemb = std::move(g);
      else
        gemb += g;
    };

    // Backward visits decoder blocks in reverse of the forward pops, so the
    // m-th block visited here consumed the m-th pushed skip.
    std::vector<Tensor<T>> gskips;
    size_t skip_idx = 0;

    for (size_t i = 0; i < dec_.size(); ++i) {
      auto& lvl = dec_[i];
      auto& lc = cache.dec[i];
      if (lvl.up) {
        gh = lvl.up->backward(gh, lc.updown);
        gh = nn::Upsample2x<T>::backward(gh);
      }
      for (size_t rj = 0; rj < lvl.blocks.size(); ++rj) {
        const size_t j = lvl.blocks.size() - 1 - rj;
        if (lvl.attn_here) gh = lvl.attns[j].backward(gh, lc.attns[j]);
        auto [gcat, ge] = lvl.blocks[j].backward(gh, lc.blocks[j]);
        add_emb(std::move(ge));
        const int64_t skip_ch = cache.skip_channels[skip_idx++];
        auto [gcur, gskip] = split_channels(gcat, gcat.dim(1) - skip_ch);
        gh = std::move(gcur);
        gskips.push_back(std::move(gskip));
      }
    }

    {
      auto [g2, ge2] = mid2_.backward(gh, cache.mid2);
      add_emb(std::move(ge2));
      g2 = mid_attn_.backward(g2, cache.mid_attn);
      auto [g1, ge1] = mid1_.backward(g2, cache.mid1);
      add_emb(std::move(ge1));
      gh = std::move(g1);
    }

    for (size_t ri = 0; ri < enc_.size(); ++ri) {
      const size_t i = enc_.size() - 1 - ri;
      auto& lvl = enc_[i];
      auto& lc = cache.enc[i];
      if (lvl.down) gh = lvl.down->backward(gh, lc.updown);
      for (size_t rj = 0; rj < lvl.blocks.size(); ++rj) {
        const size_t j = lvl.blocks.size() - 1 - rj;
        // gradient arriving through the skip connection
        gh += gskips.back();
        gskips.pop_back();
        if (lvl.attn_here) gh = lvl.attns[j].backward(gh, lc.attns[j]);
        auto [gx, ge] = lvl.blocks[j].backward(gh, lc.blocks[j]);
        add_emb(std::move(ge));
        gh = std::move(gx);
      }
    }

    Tensor<T> gx = stem_.backward(gh, cache.stem);

    if (class_embed_) class_embed_->backward(gemb, cache.class_embed);
    Tensor<T> gt = time_mlp2_.backward(gemb, cache.mlp2);
    gt = nn::SiLU<T>::backward(gt, cache.mlp_silu);
    time_mlp1_.backward(gt, cache.mlp1);
    return gx;
  }

  // Copies every parameter whose name exists in `other` (used when attaching
  // a fresh class table to a pretrained unconditional model).
  void load_matching_params(DenoiserModel& other) {
    auto src = other.parameters();
    auto dst = parameters();
    for (auto& d : dst) {
      for (auto& s : src) {
        if (s.name == d.name) {
          require(s.value->shape() == d.value->shape(),
                  "load_matching_params: shape mismatch for " + d.name);
          *d.value = *s.value;
          break;
        }
      }
    }
  }

 private:
  struct EncLevel {
    std::vector<detail::ResBlock<T>> blocks;
    std::vector<nn::AttentionBlock<T>> attns;
    std::optional<nn::Conv2d<T>> down;
    bool attn_here = false;
  };
  struct DecLevel {
    std::vector<detail::ResBlock<T>> blocks;
    std::vector<nn::AttentionBlock<T>> attns;
    std::optional<nn::Conv2d<T>> up;
    bool attn_here = false;
  };

  void init_params(Rng& rng) {
    stem_.init(rng);
    time_mlp1_.init(rng);
    time_mlp2_.init(rng);
    if (class_embed_) class_embed_->init(rng);
    for (auto& lvl : enc_) {
      for (auto& b : lvl.blocks) b.init(rng);
      for (auto& a : lvl.attns) a.init(rng);
      if (lvl.down) lvl.down->init(rng);
    }
    mid1_.init(rng);
    mid_attn_.init(rng);
    mid2_.init(rng);
    for (auto& lvl : dec_) {
      for (auto& b : lvl.blocks) b.init(rng);
      for (auto& a : lvl.attns) a.init(rng);
      if (lvl.up) lvl.up->init(rng);
    }
    out_conv_.init(rng, 0.1);
  }

  static Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
            "concat: spatial/batch mismatch");
    const int64_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
    Tensor<T> out({B, Ca + Cb, a.dim(2), a.dim(3)});
    for (int64_t bi = 0; bi < B; ++bi) {
      std::copy(a.data() + bi * Ca * HW, a.data() + (bi + 1) * Ca * HW,
                out.data() + bi * (Ca + Cb) * HW);
      std::copy(b.data() + bi * Cb * HW, b.data() + (bi + 1) * Cb * HW,
                out.data() + bi * (Ca + Cb) * HW + Ca * HW);
    }
    return out;
  }

  static std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& g, int64_t ca) {
    const int64_t B = g.dim(0), C = g.dim(1), HW = g.dim(2) * g.dim(3);
    const int64_t cb = C - ca;
    Tensor<T> ga({B, ca, g.dim(2), g.dim(3)});
    Tensor<T> gb({B, cb, g.dim(2), g.dim(3)});
    for (int64_t bi = 0; bi < B; ++bi) {
      std::copy(g.data() + bi * C * HW, g.data() + bi * C * HW + ca * HW,
                ga.data() + bi * ca * HW);
      std::copy(g.data() + bi * C * HW + ca * HW, g.data() + (bi + 1) * C * HW,
                gb.data() + bi * cb * HW);
    }
    return {std::move(ga), std::move(gb)};
  }

  UNetConfig cfg_;
  nn::Conv2d<T> stem_;
  nn::Linear<T> time_mlp1_, time_mlp2_;
  std::optional<nn::Embedding<T>> class_embed_;
  std::vector<EncLevel> enc_;
  detail::ResBlock<T> mid1_, mid2_;
  nn::AttentionBlock<T> mid_attn_;
  std::vector<DecLevel> dec_;
  nn::GroupNorm<T> out_norm_;
  nn::Conv2d<T> out_conv_;
};

// Adapter so a DenoiserModel plugs straight into diffusion::sample().
template <typename T>
struct ModelPredictor {
  const DenoiserModel<T>* model;
  Tensor<T> operator()(const Tensor<T>& xt, const std::vector<int>& t,
                       const int32_t* labels) const {
    if (labels == nullptr) return model->predict_noise(xt, t, nullptr);
    std::vector<int32_t> ids(labels, labels + xt.dim(0));
    return model->predict_noise(xt, t, &ids);
  }
};

}  // namespace sardiff
