#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sardiff/image_io.hpp"
#include "sardiff/rng.hpp"
#include "sardiff/tensor.hpp"
#include "sardiff/tensor_io.hpp"

namespace sardiff {

// Affine map from post-log dynamic range [input_min, input_max] to [-1, 1].
struct NormalizationParams {
  double log_epsilon = 1e-6;
  double input_min = 0.0;
  double input_max = 1.0;

  void validate() const {
    require(log_epsilon > 0.0, "NormalizationParams: log_epsilon must be > 0");
    require(input_min < input_max, "NormalizationParams: input_min must be < input_max");
  }
};

enum class Split { Train, Test };

struct Dataset {
  Tensor<float> images;              // [N, 1, H, W], values in [-1, 1]
  std::vector<int32_t> labels;       // empty => unlabeled
  int num_classes = 0;
  NormalizationParams norm;
  Split split = Split::Train;
  std::vector<std::string> class_names;

  int64_t count() const { return images.empty() ? 0 : images.dim(0); }
  int64_t image_size() const { return images.dim(2); }
  bool labeled() const { return !labels.empty(); }

  Tensor<float> image(int64_t i) const {
    const int64_t HW = images.dim(2) * images.dim(3);
    Tensor<float> out({images.dim(2), images.dim(3)});
    std::copy(images.data() + i * HW, images.data() + (i + 1) * HW, out.data());
    return out;
  }
};

// --- tiling -----------------------------------------------------------------

struct TilingSpec {
  int tile = 128;
};

// Non-overlapping row-major tiles; trailing remainder pixels are discarded.
inline std::vector<Tensor<float>> tile_scene(const Tensor<float>& scene,
                                             const TilingSpec& spec) {
  require(scene.rank() == 2, "tile_scene: scene must be a [H,W] matrix");
  require(spec.tile > 0, "tile_scene: tile side must be positive");
  const int64_t H = scene.dim(0), W = scene.dim(1), tile = spec.tile;
  require(H >= tile && W >= tile, "tile_scene: scene smaller than tile");
  const int64_t th = H / tile, tw = W / tile;
  std::vector<Tensor<float>> out;
  out.reserve(static_cast<size_t>(th * tw));
  for (int64_t ty = 0; ty < th; ++ty)
    for (int64_t tx = 0; tx < tw; ++tx) {
      Tensor<float> t({tile, tile});
      for (int64_t y = 0; y < tile; ++y)
        std::copy(scene.data() + (ty * tile + y) * W + tx * tile,
                  scene.data() + (ty * tile + y) * W + tx * tile + tile,
                  t.data() + y * tile);
      out.push_back(std::move(t));
    }
  return out;
}

// --- log scaling and normalization -------------------------------------------

// Decibels of magnitude: 20*log10(raw + eps). Rejects negative magnitudes.
inline Tensor<float> to_log_scale(const Tensor<float>& raw, double eps) {
  require(eps > 0.0, "to_log_scale: eps must be > 0");
  Tensor<float> out(raw.shape());
  for (int64_t i = 0; i < raw.size(); ++i) {
    require(raw[i] >= 0.0f, "to_log_scale: negative input pixel");
    out[i] = static_cast<float>(20.0 * std::log10(static_cast<double>(raw[i]) + eps));
  }
  return out;
}

inline Tensor<float> normalize(const Tensor<float>& values, const NormalizationParams& p) {
  p.validate();
  Tensor<float> out(values.shape());
  const double scale = 2.0 / (p.input_max - p.input_min);
  for (int64_t i = 0; i < values.size(); ++i) {
    double v = (static_cast<double>(values[i]) - p.input_min) * scale - 1.0;
    out[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

inline Tensor<float> denormalize(const Tensor<float>& values, const NormalizationParams& p) {
  p.validate();
  Tensor<float> out(values.shape());
  const double scale = (p.input_max - p.input_min) / 2.0;
  for (int64_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<float>((static_cast<double>(values[i]) + 1.0) * scale + p.input_min);
  return out;
}

// Percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> sorted_copy, double q) {
  require(!sorted_copy.empty(), "percentile: empty data");
  std::sort(sorted_copy.begin(), sorted_copy.end());
  const double rank = q / 100.0 * static_cast<double>(sorted_copy.size() - 1);
  const size_t lo = static_cast<size_t>(rank);
  const size_t hi = std::min(lo + 1, sorted_copy.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted_copy[lo] * (1.0 - frac) + sorted_copy[hi] * frac;
}

// Endpoints from the 0.1 / 99.9 percentiles of the post-log training
// distribution, so single-pixel outliers cannot stretch the range.
inline NormalizationParams compute_norm_params(const Tensor<float>& log_values,
                                               double log_epsilon) {
  std::vector<double> v(static_cast<size_t>(log_values.size()));
  for (int64_t i = 0; i < log_values.size(); ++i) v[static_cast<size_t>(i)] = log_values[i];
  NormalizationParams p;
  p.log_epsilon = log_epsilon;
  p.input_min = percentile(v, 0.1);
  p.input_max = percentile(v, 99.9);
  ensure(p.input_min < p.input_max, "compute_norm_params: degenerate dynamic range");
  return p;
}

// --- synthetic speckled-target generator --------------------------------------

// Desk-scale stand-in for real radar target chips: each class is a fixed
// point-scatterer layout, rendered with a small blur, multiplicative
// unit-mean exponential speckle and a low clutter floor, then log-scaled and
// normalized. Layouts depend only on the class id, so datasets generated
// with different seeds share classes and can serve as train/test splits.
inline Tensor<float> render_synthetic_raw(int class_id, int image_size, Rng& rng) {
  // fixed per-class layout
  Rng layout_rng(Rng::derive(0x5AD1FF00u, static_cast<uint64_t>(class_id)));
  const int num_scatterers = 3 + class_id % 5;
  std::vector<double> sy(static_cast<size_t>(num_scatterers));
  std::vector<double> sx(static_cast<size_t>(num_scatterers));
  std::vector<double> amp(static_cast<size_t>(num_scatterers));
  for (int s = 0; s < num_scatterers; ++s) {
    sy[static_cast<size_t>(s)] = 0.2 + 0.6 * layout_rng.uniform();
    sx[static_cast<size_t>(s)] = 0.2 + 0.6 * layout_rng.uniform();
    amp[static_cast<size_t>(s)] = 0.5 + 0.5 * layout_rng.uniform();
  }

  const double jitter_y = rng.normal() * 0.01;
  const double jitter_x = rng.normal() * 0.01;
  Tensor<float> img({image_size, image_size});
  const double sigma = std::max(0.75, image_size / 32.0);
  for (int s = 0; s < num_scatterers; ++s) {
    const double cy = (sy[static_cast<size_t>(s)] + jitter_y) * image_size;
    const double cx = (sx[static_cast<size_t>(s)] + jitter_x) * image_size;
    for (int y = 0; y < image_size; ++y)
      for (int x = 0; x < image_size; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        img[y * image_size + x] += static_cast<float>(
            amp[static_cast<size_t>(s)] * std::exp(-d2 / (2.0 * sigma * sigma)));
      }
  }
  // multiplicative speckle + additive clutter floor
  for (int64_t i = 0; i < img.size(); ++i) {
    const double speckle = -std::log(rng.uniform_open());
    const double clutter = 0.02 * -std::log(rng.uniform_open());
    img[i] = static_cast<float>(img[i] * speckle + clutter);
  }
  return img;
}

inline Dataset generate_synthetic_dataset(int num_classes, int per_class, int image_size,
                                          uint64_t seed,
                                          const NormalizationParams* reuse_norm = nullptr) {
  require(num_classes >= 1 && per_class >= 1 && image_size >= 1,
          "generate_synthetic_dataset: all arguments must be positive");
  const int64_t n = static_cast<int64_t>(num_classes) * per_class;
  Tensor<float> raw({n, 1, image_size, image_size});
  std::vector<int32_t> labels(static_cast<size_t>(n));
  Rng rng(seed);
  int64_t idx = 0;
  for (int c = 0; c < num_classes; ++c)
    for (int k = 0; k < per_class; ++k, ++idx) {
      Tensor<float> img = render_synthetic_raw(c, image_size, rng);
      std::copy(img.data(), img.data() + img.size(),
                raw.data() + idx * image_size * image_size);
      labels[static_cast<size_t>(idx)] = c;
    }

  const double log_eps = 1e-6;
  Tensor<float> logged = to_log_scale(raw, log_eps);
  Dataset ds;
  ds.norm = reuse_norm ? *reuse_norm : compute_norm_params(logged, log_eps);
  ds.images = normalize(logged, ds.norm);
  ds.labels = std::move(labels);
  ds.num_classes = num_classes;
  ds.split = reuse_norm ? Split::Test : Split::Train;
  for (int c = 0; c < num_classes; ++c) ds.class_names.push_back("class" + std::to_string(c));
  return ds;
}

// --- norm-params persistence ---------------------------------------------------

inline void save_norm_params(const std::filesystem::path& path, const NormalizationParams& p) {
  std::ofstream f(path);
  ensure(f.is_open(), "save_norm_params: cannot open " + path.string());
  f.precision(17);
  f << "log_epsilon " << p.log_epsilon << "\n";
  f << "input_min " << p.input_min << "\n";
  f << "input_max " << p.input_max << "\n";
  ensure(f.good(), "save_norm_params: write failure");
}

inline NormalizationParams load_norm_params(const std::filesystem::path& path) {
  std::ifstream f(path);
  ensure(f.is_open(), "load_norm_params: cannot open " + path.string());
  NormalizationParams p;
  std::string key;
  double value;
  std::map<std::string, double> kv;
  while (f >> key >> value) kv[key] = value;
  ensure(kv.count("log_epsilon") && kv.count("input_min") && kv.count("input_max"),
         "load_norm_params: missing keys in " + path.string());
  p.log_epsilon = kv["log_epsilon"];
  p.input_min = kv["input_min"];
  p.input_max = kv["input_max"];
  p.validate();
  return p;
}

// --- dataset directory ----------------------------------------------------------

// On-disk layout: images.ten [N,1,H,W], labels.ten [N] (omitted when
// unlabeled), norm_params.txt, classes.txt (one name per line).
inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  save_tensor(dir / "images.ten", ds.images);
  if (ds.labeled()) {
    Tensor<int32_t> lab({static_cast<int64_t>(ds.labels.size())});
    std::copy(ds.labels.begin(), ds.labels.end(), lab.data());
    save_tensor(dir / "labels.ten", lab);
  }
  save_norm_params(dir / "norm_params.txt", ds.norm);
  std::ofstream cf(dir / "classes.txt");
  for (const auto& name : ds.class_names) cf << name << "\n";
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  ensure(std::filesystem::exists(dir / "images.ten"),
         "load_dataset: " + (dir / "images.ten").string() + " not found");
  Dataset ds;
  ds.images = load_tensor<float>(dir / "images.ten");
  require(ds.images.rank() == 4, "load_dataset: images.ten must be [N,1,H,W]");
  if (std::filesystem::exists(dir / "labels.ten")) {
    Tensor<int32_t> lab = load_tensor<int32_t>(dir / "labels.ten");
    ds.labels.assign(lab.data(), lab.data() + lab.size());
    ensure(static_cast<int64_t>(ds.labels.size()) == ds.count(),
           "load_dataset: label count does not match image count");
  }
  ds.norm = load_norm_params(dir / "norm_params.txt");
  if (std::filesystem::exists(dir / "classes.txt")) {
    std::ifstream cf(dir / "classes.txt");
    std::string line;
    while (std::getline(cf, line))
      if (!line.empty()) ds.class_names.push_back(line);
  }
  ds.num_classes = static_cast<int>(ds.class_names.size());
  if (ds.labeled() && ds.num_classes == 0)
    ds.num_classes = 1 + *std::max_element(ds.labels.begin(), ds.labels.end());
  return ds;
}

// --- image-folder ingestion -------------------------------------------------------

// Loads a directory-per-class tree of grayscale images (.pgm) or flat-binary
// tensors (.ten, rank 2). Raw magnitudes are log-scaled and normalized with
// parameters computed over this (training) collection, or with `reuse_norm`
// for a test split.
inline Dataset load_image_folder(const std::filesystem::path& root,
                                 const NormalizationParams* reuse_norm = nullptr,
                                 double log_eps = 1e-6, bool apply_log = true) {
  ensure(std::filesystem::is_directory(root),
         "load_image_folder: not a directory: " + root.string());
  std::vector<std::string> class_names;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory()) class_names.push_back(e.path().filename().string());
  std::sort(class_names.begin(), class_names.end());
  ensure(!class_names.empty(), "load_image_folder: no class directories in " + root.string());

  std::vector<Tensor<float>> raws;
  std::vector<int32_t> labels;
  int64_t H = -1, W = -1;
  for (size_t c = 0; c < class_names.size(); ++c) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(root / class_names[c]))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    ensure(!files.empty(), "load_image_folder: empty class directory: " + class_names[c]);
    for (const auto& f : files) {
      Tensor<float> img;
      if (f.extension() == ".pgm")
        img = read_pgm(f);
      else if (f.extension() == ".ten")
        img = load_tensor<float>(f);
      else
        continue;
      ensure(img.rank() == 2, "load_image_folder: " + f.string() + " is not a 2-D image");
      if (H < 0) {
        H = img.dim(0);
        W = img.dim(1);
      }
      ensure(img.dim(0) == H && img.dim(1) == W,
             "load_image_folder: inconsistent image sizes (" + f.string() + ")");
      raws.push_back(std::move(img));
      labels.push_back(static_cast<int32_t>(c));
    }
    ensure(!raws.empty() && labels.back() == static_cast<int32_t>(c),
           "load_image_folder: no readable images in class " + class_names[c]);
  }

  Tensor<float> all({static_cast<int64_t>(raws.size()), 1, H, W});
  for (size_t i = 0; i < raws.size(); ++i)
    std::copy(raws[i].data(), raws[i].data() + raws[i].size(),
              all.data() + static_cast<int64_t>(i) * H * W);

  Tensor<float> logged = apply_log ? to_log_scale(all, log_eps) : all;
  Dataset ds;
  ds.norm = reuse_norm ? *reuse_norm : compute_norm_params(logged, log_eps);
  ds.images = normalize(logged, ds.norm);
  ds.labels = std::move(labels);
  ds.num_classes = static_cast<int>(class_names.size());
  ds.class_names = std::move(class_names);
  ds.split = reuse_norm ? Split::Test : Split::Train;
  return ds;
}

// Deterministic shuffled split into train/test parts.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double test_fraction,
                                                 uint64_t seed) {
  require(test_fraction >= 0.0 && test_fraction < 1.0,
          "split_dataset: test_fraction in [0,1)");
  const int64_t n = ds.count();
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  const int64_t n_test = static_cast<int64_t>(std::llround(test_fraction * n));
  auto take = [&](int64_t lo, int64_t hi, Split split) {
    Dataset out;
    const int64_t HW = ds.images.dim(2) * ds.images.dim(3);
    out.images = Tensor<float>({hi - lo, 1, ds.images.dim(2), ds.images.dim(3)});
    for (int64_t i = lo; i < hi; ++i) {
      const int64_t src = order[static_cast<size_t>(i)];
      std::copy(ds.images.data() + src * HW, ds.images.data() + (src + 1) * HW,
                out.images.data() + (i - lo) * HW);
      if (ds.labeled()) out.labels.push_back(ds.labels[static_cast<size_t>(src)]);
    }
    out.num_classes = ds.num_classes;
    out.norm = ds.norm;
    out.split = split;
    out.class_names = ds.class_names;
    return out;
  };
  return {take(n_test, n, Split::Train), take(0, n_test, Split::Test)};
}

}  // namespace sardiff
