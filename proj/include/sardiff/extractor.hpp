#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <memory>
#include <vector>

#include "sardiff/checkpoint.hpp"
#include "sardiff/data.hpp"
#include "sardiff/nn.hpp"

namespace sardiff {

// Pluggable feature source for the evaluation metrics: maps an image batch
// to feature vectors plus per-sample class probabilities.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int feature_dim() const = 0;
  virtual int num_classes() const = 0;
  virtual int image_size() const = 0;
  // images: [N,1,H,W] -> features [N,d], probs [N,K]
  virtual void extract(const Tensor<float>& images, Eigen::MatrixXd& features,
                       Eigen::MatrixXd& probs) const = 0;
};

struct ExtractorConfig {
  int image_size = 32;
  int feature_dim = 256;
  int num_classes = 10;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  uint64_t seed = 0;

  void validate() const {
    require(image_size >= 8 && image_size % 8 == 0,
            "ExtractorConfig: image_size must be a multiple of 8");
    require(feature_dim >= 1 && num_classes >= 2, "ExtractorConfig: bad dims");
    require(epochs >= 1 && batch_size >= 1 && learning_rate > 0,
            "ExtractorConfig: bad training settings");
  }
};

// Four conv stages with group norm and SiLU, global average pooling into the
// feature vector, and a linear classification head. Features are the pooled
// penultimate activations.
class SmallCnnExtractor : public FeatureExtractor {
 public:
  SmallCnnExtractor() = default;

  static SmallCnnExtractor build(const ExtractorConfig& cfg, uint64_t seed) {
    cfg.validate();
    SmallCnnExtractor m;
    m.cfg_ = cfg;
    m.conv1_ = nn::Conv2d<float>(1, 32, 3, 1, 1);
    m.gn1_ = nn::GroupNorm<float>(32);
    m.conv2_ = nn::Conv2d<float>(32, 64, 3, 2, 1);
    m.gn2_ = nn::GroupNorm<float>(64);
    m.conv3_ = nn::Conv2d<float>(64, 128, 3, 2, 1);
    m.gn3_ = nn::GroupNorm<float>(128);
    m.conv4_ = nn::Conv2d<float>(128, cfg.feature_dim, 3, 2, 1);
    m.gn4_ = nn::GroupNorm<float>(cfg.feature_dim);
    m.head_ = nn::Linear<float>(cfg.feature_dim, cfg.num_classes);
    Rng rng(seed);
    m.conv1_.init(rng);
    m.conv2_.init(rng);
    m.conv3_.init(rng);
    m.conv4_.init(rng);
    m.head_.init(rng);
    return m;
  }

  int feature_dim() const override { return cfg_.feature_dim; }
  int num_classes() const override { return cfg_.num_classes; }
  int image_size() const override { return cfg_.image_size; }
  const ExtractorConfig& config() const { return cfg_; }

  struct Cache {
    nn::Conv2d<float>::Cache c1, c2, c3, c4;
    nn::GroupNorm<float>::Cache g1, g2, g3, g4;
    nn::SiLU<float>::Cache s1, s2, s3, s4;
    nn::Linear<float>::Cache head;
    int64_t pooled_hw = 0;
  };

  // Returns (features [B,d], logits [B,K]).
  std::pair<Tensor<float>, Tensor<float>> forward(const Tensor<float>& x,
                                                  Cache* cache) const {
    require(x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == cfg_.image_size &&
                x.dim(3) == cfg_.image_size,
            "extractor: input shape mismatch");
    Tensor<float> h = conv1_.forward(x, cache ? &cache->c1 : nullptr);
    h = gn1_.forward(h, cache ? &cache->g1 : nullptr);
    h = nn::SiLU<float>::forward(h, cache ? &cache->s1 : nullptr);
    h = conv2_.forward(h, cache ? &cache->c2 : nullptr);
    h = gn2_.forward(h, cache ? &cache->g2 : nullptr);
    h = nn::SiLU<float>::forward(h, cache ? &cache->s2 : nullptr);
    h = conv3_.forward(h, cache ? &cache->c3 : nullptr);
    h = gn3_.forward(h, cache ? &cache->g3 : nullptr);
    h = nn::SiLU<float>::forward(h, cache ? &cache->s3 : nullptr);
    h = conv4_.forward(h, cache ? &cache->c4 : nullptr);
    h = gn4_.forward(h, cache ? &cache->g4 : nullptr);
    h = nn::SiLU<float>::forward(h, cache ? &cache->s4 : nullptr);

    const int64_t B = h.dim(0), C = h.dim(1), HW = h.dim(2) * h.dim(3);
    Tensor<float> feats({B, C});
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        const float* p = h.data() + (b * C + c) * HW;
        double s = 0;
        for (int64_t i = 0; i < HW; ++i) s += p[i];
        feats[b * C + c] = static_cast<float>(s / static_cast<double>(HW));
      }
    if (cache) cache->pooled_hw = HW;
    Tensor<float> logits = head_.forward(feats, cache ? &cache->head : nullptr);
    return {std::move(feats), std::move(logits)};
  }

  void backward(const Tensor<float>& grad_logits, const Cache& cache) {
    Tensor<float> gfeat = head_.backward(grad_logits, cache.head);
    const int64_t B = gfeat.dim(0), C = gfeat.dim(1);
    const int64_t HW = cache.pooled_hw;
    const int side = static_cast<int>(std::llround(std::sqrt(static_cast<double>(HW))));
    Tensor<float> gh({B, C, side, side});
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        const float g = gfeat[b * C + c] / static_cast<float>(HW);
        float* p = gh.data() + (b * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) p[i] = g;
      }
    Tensor<float> g = nn::SiLU<float>::backward(gh, cache.s4);
    g = gn4_.backward(g, cache.g4);
    g = conv4_.backward(g, cache.c4);
    g = nn::SiLU<float>::backward(g, cache.s3);
    g = gn3_.backward(g, cache.g3);
    g = conv3_.backward(g, cache.c3);
    g = nn::SiLU<float>::backward(g, cache.s2);
    g = gn2_.backward(g, cache.g2);
    g = conv2_.backward(g, cache.c2);
    g = nn::SiLU<float>::backward(g, cache.s1);
    g = gn1_.backward(g, cache.g1);
    conv1_.backward(g, cache.c1);
  }

  std::vector<nn::ParamRef<float>> parameters() {
    std::vector<nn::ParamRef<float>> out;
    conv1_.collect_params("conv1", out);
    gn1_.collect_params("gn1", out);
    conv2_.collect_params("conv2", out);
    gn2_.collect_params("gn2", out);
    conv3_.collect_params("conv3", out);
    gn3_.collect_params("gn3", out);
    conv4_.collect_params("conv4", out);
    gn4_.collect_params("gn4", out);
    head_.collect_params("head", out);
    return out;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.grad->zero();
  }

  void extract(const Tensor<float>& images, Eigen::MatrixXd& features,
               Eigen::MatrixXd& probs) const override {
    const int64_t n = images.dim(0);
    features.resize(n, cfg_.feature_dim);
    probs.resize(n, cfg_.num_classes);
    const int64_t chunk = 64;
    const int64_t HW = images.dim(2) * images.dim(3);
    for (int64_t lo = 0; lo < n; lo += chunk) {
      const int64_t hi = std::min(n, lo + chunk);
      Tensor<float> x({hi - lo, 1, images.dim(2), images.dim(3)});
      std::copy(images.data() + lo * HW, images.data() + hi * HW, x.data());
      auto [feats, logits] = forward(x, nullptr);
      for (int64_t b = 0; b < hi - lo; ++b) {
        for (int d = 0; d < cfg_.feature_dim; ++d)
          features(lo + b, d) = feats[b * cfg_.feature_dim + d];
        // row softmax
        double mx = -1e300;
        for (int k = 0; k < cfg_.num_classes; ++k)
          mx = std::max(mx, static_cast<double>(logits[b * cfg_.num_classes + k]));
        double sum = 0;
        for (int k = 0; k < cfg_.num_classes; ++k) {
          const double e = std::exp(logits[b * cfg_.num_classes + k] - mx);
          probs(lo + b, k) = e;
          sum += e;
        }
        for (int k = 0; k < cfg_.num_classes; ++k) probs(lo + b, k) /= sum;
      }
    }
  }

  std::vector<int> predict_classes(const Tensor<float>& images) const {
    Eigen::MatrixXd feats, probs;
    extract(images, feats, probs);
    std::vector<int> out(static_cast<size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      Eigen::Index arg;
      probs.row(i).maxCoeff(&arg);
      out[static_cast<size_t>(i)] = static_cast<int>(arg);
    }
    return out;
  }

  void save(const std::filesystem::path& path) {
    Checkpoint ck;
    ck.kind = "feature_extractor";
    ck.config = json{{"image_size", cfg_.image_size},
                     {"feature_dim", cfg_.feature_dim},
                     {"num_classes", cfg_.num_classes},
                     {"epochs", cfg_.epochs},
                     {"batch_size", cfg_.batch_size},
                     {"learning_rate", cfg_.learning_rate},
                     {"seed", cfg_.seed}};
    for (auto& p : parameters()) ck.tensors.emplace_back(p.name, *p.value);
    save_checkpoint(path, ck);
  }

  static SmallCnnExtractor load(const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    ensure(ck.kind == "feature_extractor", "not a feature-extractor checkpoint");
    ExtractorConfig cfg;
    cfg.image_size = ck.config.at("image_size").get<int>();
    cfg.feature_dim = ck.config.at("feature_dim").get<int>();
    cfg.num_classes = ck.config.at("num_classes").get<int>();
    cfg.epochs = ck.config.at("epochs").get<int>();
    cfg.batch_size = ck.config.at("batch_size").get<int>();
    cfg.learning_rate = ck.config.at("learning_rate").get<double>();
    cfg.seed = ck.config.at("seed").get<uint64_t>();
    SmallCnnExtractor m = build(cfg, 0);
    for (auto& p : m.parameters()) {
      const Tensor<float>& t = ck.tensor(p.name);
      ensure(t.shape() == p.value->shape(), "extractor load: shape mismatch " + p.name);
      *p.value = t;
    }
    return m;
  }

 private:
  ExtractorConfig cfg_;
  nn::Conv2d<float> conv1_, conv2_, conv3_, conv4_;
  nn::GroupNorm<float> gn1_, gn2_, gn3_, gn4_;
  nn::Linear<float> head_;
};

// Trains the classifier with softmax cross-entropy and Adam.
inline SmallCnnExtractor train_feature_extractor(const Dataset& dataset,
                                                 ExtractorConfig cfg,
                                                 std::ostream* log = nullptr) {
  require(dataset.labeled(), "train_feature_extractor: dataset must be labeled");
  cfg.num_classes = dataset.num_classes;
  cfg.image_size = static_cast<int>(dataset.image_size());
  cfg.validate();
  SmallCnnExtractor model = SmallCnnExtractor::build(cfg, cfg.seed);
  nn::Adam<float> adam(nn::Adam<float>::Options{cfg.learning_rate, 0.9, 0.999, 1e-8});
  Rng rng(Rng::derive(cfg.seed, 0xFEA7));

  const int64_t n = dataset.count();
  const int64_t HW = dataset.images.dim(2) * dataset.images.dim(3);
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0;
    int64_t correct = 0, steps = 0;
    for (int64_t lo = 0; lo < n; lo += cfg.batch_size) {
      const int64_t hi = std::min<int64_t>(n, lo + cfg.batch_size);
      const int64_t B = hi - lo;
      Tensor<float> x({B, 1, dataset.images.dim(2), dataset.images.dim(3)});
      std::vector<int32_t> y(static_cast<size_t>(B));
      for (int64_t i = lo; i < hi; ++i) {
        const int64_t src = order[static_cast<size_t>(i)];
        std::copy(dataset.images.data() + src * HW, dataset.images.data() + (src + 1) * HW,
                  x.data() + (i - lo) * HW);
        y[static_cast<size_t>(i - lo)] = dataset.labels[static_cast<size_t>(src)];
      }
      SmallCnnExtractor::Cache cache;
      auto [feats, logits] = model.forward(x, &cache);
      // softmax cross-entropy
      Tensor<float> grad(logits.shape());
      double loss = 0;
      const int K = cfg.num_classes;
      for (int64_t b = 0; b < B; ++b) {
        double mx = -1e300;
        for (int k = 0; k < K; ++k) mx = std::max(mx, static_cast<double>(logits[b * K + k]));
        double sum = 0;
        for (int k = 0; k < K; ++k) sum += std::exp(logits[b * K + k] - mx);
        const int yi = y[static_cast<size_t>(b)];
        loss -= (logits[b * K + yi] - mx - std::log(sum));
        int arg = 0;
        for (int k = 1; k < K; ++k)
          if (logits[b * K + k] > logits[b * K + arg]) arg = k;
        if (arg == yi) ++correct;
        for (int k = 0; k < K; ++k) {
          const double p = std::exp(logits[b * K + k] - mx) / sum;
          grad[b * K + k] = static_cast<float>(
              (p - (k == yi ? 1.0 : 0.0)) / static_cast<double>(B));
        }
      }
      model.zero_grad();
      model.backward(grad, cache);
      auto params = model.parameters();
      adam.step(params);
      epoch_loss += loss / static_cast<double>(B);
      ++steps;
    }
    if (log)
      (*log) << "extractor epoch " << epoch << "/" << cfg.epochs << "  loss "
             << epoch_loss / static_cast<double>(steps) << "  train_acc "
             << static_cast<double>(correct) / static_cast<double>(n) << "\n";
  }
  return model;
}

}  // namespace sardiff
