// sardiff: class-conditional diffusion synthesis of radar-style imagery.
//
// Subcommands: prepare, train, pretrain, finetune, sample, evaluate,
// train-extractor, schedule-dump. Exit codes: 0 success, 1 runtime failure,
// 2 usage/configuration error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sardiff/sardiff.hpp"

namespace fs = std::filesystem;
using namespace sardiff;

namespace {

struct ModelFlags {
  int base_channels = 64;
  std::vector<int> multipliers = {1, 2, 4, 8};
  int res_blocks = 8;
  int attention_resolution = 32;
  double dropout = 0.3;
  int time_embed_dim = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--base-channels", base_channels, "Base channel count");
    cmd->add_option("--multipliers", multipliers, "Per-level channel multipliers");
    cmd->add_option("--res-blocks", res_blocks, "Residual blocks per side");
    cmd->add_option("--attn-res", attention_resolution,
                    "Feature-map side length where self-attention applies");
    cmd->add_option("--dropout", dropout, "Dropout probability");
    cmd->add_option("--time-dim", time_embed_dim, "Time embedding width (0 = 4x base)");
  }

  UNetConfig to_config(int image_size, int num_classes) const {
    UNetConfig c;
    c.base_channels = base_channels;
    c.channel_multipliers = multipliers;
    c.res_blocks_total_per_side = res_blocks;
    c.attention_resolution = attention_resolution;
    c.dropout_p = dropout;
    c.time_embed_dim = time_embed_dim;
    c.num_classes = num_classes;
    c.image_size = image_size;
    return c;
  }
};

struct DiffusionFlags {
  int num_steps = 1000;
  double beta_1 = 1e-4;
  double beta_T = 0.02;
  std::string schedule = "linear";

  void attach(CLI::App* cmd) {
    cmd->add_option("-T,--steps", num_steps, "Diffusion steps");
    cmd->add_option("--beta1", beta_1, "First beta");
    cmd->add_option("--betaT", beta_T, "Last beta");
    cmd->add_option("--schedule", schedule, "Noise schedule: linear|cosine|sigmoid")
        ->check(CLI::IsMember({"linear", "cosine", "sigmoid"}));
  }

  NoiseSchedule make() const {
    return NoiseSchedule::make(schedule_kind_from_string(schedule), num_steps, beta_1,
                               beta_T);
  }

  json to_json() const {
    return json{{"schedule", schedule},
                {"num_steps", num_steps},
                {"beta_1", beta_1},
                {"beta_T", beta_T}};
  }
};

DiffusionFlags diffusion_from_checkpoint(const Checkpoint& ck) {
  DiffusionFlags f;
  if (ck.config.contains("extra") && ck.config["extra"].contains("diffusion")) {
    const json& d = ck.config["extra"]["diffusion"];
    f.schedule = d.value("schedule", f.schedule);
    f.num_steps = d.value("num_steps", f.num_steps);
    f.beta_1 = d.value("beta_1", f.beta_1);
    f.beta_T = d.value("beta_T", f.beta_T);
  }
  return f;
}

Tensor<float> load_scene(const fs::path& file) {
  if (file.extension() == ".pgm") return read_pgm(file);
  if (file.extension() == ".ten") return load_tensor<float>(file);
  throw std::runtime_error("unsupported scene file type: " + file.string());
}

// ---------------------------------------------------------------------------

int cmd_prepare(bool synthetic, const std::string& scenes, int classes, int per_class,
                int size, int tile, double test_fraction, uint64_t seed,
                const std::string& out) {
  const fs::path out_dir(out);
  if (synthetic) {
    Dataset train = generate_synthetic_dataset(classes, per_class, size, seed);
    save_dataset(out_dir / "train", train);
    const int test_per_class = std::max(1, static_cast<int>(per_class * test_fraction));
    Dataset test = generate_synthetic_dataset(classes, test_per_class, size,
                                              Rng::derive(seed, 1), &train.norm);
    save_dataset(out_dir / "test", test);
    std::cout << "prepared synthetic dataset: " << train.count() << " train / "
              << test.count() << " test images of " << size << "x" << size << "\n";
    return 0;
  }

  const fs::path scene_dir(scenes);
  if (!fs::is_directory(scene_dir))
    throw std::invalid_argument("scene directory not found: " + scenes);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(scene_dir))
    if (e.is_regular_file() &&
        (e.path().extension() == ".pgm" || e.path().extension() == ".ten"))
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw std::invalid_argument("no .pgm or .ten scenes in " + scenes);

  std::vector<Tensor<float>> tiles;
  for (const auto& f : files) {
    Tensor<float> scene = load_scene(f);
    for (auto& t : tile_scene(scene, TilingSpec{tile})) tiles.push_back(std::move(t));
  }
  const int64_t n = static_cast<int64_t>(tiles.size());
  Tensor<float> raw({n, 1, tile, tile});
  for (int64_t i = 0; i < n; ++i)
    std::copy(tiles[static_cast<size_t>(i)].data(),
              tiles[static_cast<size_t>(i)].data() + tile * tile,
              raw.data() + i * tile * tile);
  const double log_eps = 1e-6;
  Tensor<float> logged = to_log_scale(raw, log_eps);
  Dataset ds;
  ds.norm = compute_norm_params(logged, log_eps);
  ds.images = normalize(logged, ds.norm);
  ds.split = Split::Train;
  save_dataset(out_dir / "train", ds);
  std::cout << "prepared " << n << " tiles of " << tile << "x" << tile << " from "
            << files.size() << " scenes\n";
  return 0;
}

TrainConfig make_train_config(int epochs, int batch, double lr, uint64_t seed,
                              const DiffusionFlags& df, bool conditional,
                              double clip, int ckpt_interval) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.learning_rate = lr;
  tc.seed = seed;
  tc.schedule_kind = schedule_kind_from_string(df.schedule);
  tc.conditional = conditional;
  tc.num_steps = df.num_steps;
  tc.beta_1 = df.beta_1;
  tc.beta_T = df.beta_T;
  tc.grad_clip_norm = clip;
  tc.checkpoint_interval = ckpt_interval;
  return tc;
}

int run_training(DenoiserModel<float>& model, const Dataset& ds, const TrainConfig& tc,
                 const DiffusionFlags& df, const fs::path& run_dir,
                 const fs::path& data_dir) {
  Trainer trainer(model, df.make(), tc);
  trainer.fit(ds, tc.epochs, run_dir, &std::cout);
  // re-save the final model with diffusion provenance and copy the
  // normalization parameters for downstream sampling/evaluation
  save_model(run_dir / "model_final.ckpt", model, json{{"diffusion", df.to_json()}});
  if (fs::exists(data_dir / "norm_params.txt"))
    fs::copy_file(data_dir / "norm_params.txt", run_dir / "norm_params.txt",
                  fs::copy_options::overwrite_existing);
  std::cout << "final checkpoint: " << (run_dir / "model_final.ckpt").string() << "\n";
  return 0;
}

void check_dataset_dir(const std::string& data) {
  if (!fs::exists(fs::path(data) / "images.ten"))
    throw std::invalid_argument("not a dataset directory (no images.ten): " + data);
}

int cmd_train(const std::string& data, const std::string& out, int epochs, int batch,
              double lr, uint64_t seed, const DiffusionFlags& df, const ModelFlags& mf,
              bool unconditional, double clip, int ckpt_interval) {
  check_dataset_dir(data);
  Dataset ds = load_dataset(data);
  const bool conditional = ds.labeled() && !unconditional;
  UNetConfig cfg = mf.to_config(static_cast<int>(ds.image_size()),
                                conditional ? ds.num_classes : 0);
  cfg.validate();
  TrainConfig tc =
      make_train_config(epochs, batch, lr, seed, df, conditional, clip, ckpt_interval);
  tc.validate();
  DenoiserModel<float> model = DenoiserModel<float>::build(cfg, seed);
  std::cout << "training " << (conditional ? "conditional" : "unconditional")
            << " model, " << model.parameter_count() << " parameters, "
            << ds.count() << " images\n";
  return run_training(model, ds, tc, df, fs::path(out), fs::path(data));
}

int cmd_finetune(const std::string& init, const std::string& data, const std::string& out,
                 int epochs, int batch, double lr, uint64_t seed,
                 const DiffusionFlags& df_flags, bool df_overridden, double clip,
                 int ckpt_interval) {
  check_dataset_dir(data);
  Checkpoint ck = load_checkpoint(init);
  DenoiserModel<float> pretrained = model_from_checkpoint(ck);
  // default to the schedule the checkpoint was trained with
  DiffusionFlags df = df_overridden ? df_flags : diffusion_from_checkpoint(ck);
  Dataset ds = load_dataset(data);
  if (!ds.labeled())
    throw std::invalid_argument("finetune: target dataset must be labeled");
  require(pretrained.config().image_size == ds.image_size(),
          "finetune: checkpoint and dataset resolutions differ");

  DenoiserModel<float> model = pretrained.config().conditional()
                                   ? std::move(pretrained)
                                   : attach_class_table(pretrained, ds.num_classes,
                                                        Rng::derive(seed, 1));
  TrainConfig tc = make_train_config(epochs, batch, lr, seed, df, true, clip, ckpt_interval);
  tc.validate();
  std::cout << "fine-tuning on " << ds.count() << " labeled images ("
            << ds.num_classes << " classes)\n";
  return run_training(model, ds, tc, df, fs::path(out), fs::path(data));
}

int cmd_sample(const std::string& checkpoint, int64_t n, int label, int per_class,
               uint64_t seed, const std::string& out, const DiffusionFlags& df_flags,
               bool df_overridden, int montage_columns) {
  Checkpoint ck = load_checkpoint(checkpoint);
  DenoiserModel<float> model = model_from_checkpoint(ck);
  DiffusionFlags df = df_overridden ? df_flags : diffusion_from_checkpoint(ck);
  NoiseSchedule schedule = df.make();

  const int K = model.config().num_classes;
  std::optional<std::vector<int32_t>> labels;
  if (model.config().conditional()) {
    std::vector<int32_t> ids;
    if (per_class > 0) {
      n = static_cast<int64_t>(per_class) * K;
      for (int c = 0; c < K; ++c)
        for (int k = 0; k < per_class; ++k) ids.push_back(c);
    } else if (label >= 0) {
      require(label < K, "sample: class id out of range");
      ids.assign(static_cast<size_t>(n), label);
    } else {
      for (int64_t i = 0; i < n; ++i) ids.push_back(static_cast<int32_t>(i % K));
    }
    labels = std::move(ids);
  } else {
    require(label < 0 && per_class <= 0,
            "sample: class selection given but the model is unconditional");
  }

  if (n == 0) {
    std::cout << "nothing to do (n = 0)\n";
    return 0;
  }

  const int side = model.config().image_size;
  std::cout << "sampling " << n << " images of " << side << "x" << side << " over "
            << schedule.num_steps() << " steps\n";
  ModelPredictor<float> pred{&model};
  ImageBatch<float> images =
      sample<float>(pred, static_cast<int>(n), 1, side, side, labels, schedule, seed);

  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  save_tensor(out_dir / "samples.ten", images.data);
  if (labels) {
    Tensor<int32_t> lab({n});
    std::copy(labels->begin(), labels->end(), lab.data());
    save_tensor(out_dir / "labels.ten", lab);
  }
  const fs::path norm_src = fs::path(checkpoint).parent_path() / "norm_params.txt";
  if (fs::exists(norm_src))
    fs::copy_file(norm_src, out_dir / "norm_params.txt",
                  fs::copy_options::overwrite_existing);

  const int64_t HW = static_cast<int64_t>(side) * side;
  for (int64_t i = 0; i < n; ++i) {
    Tensor<float> img({side, side});
    std::copy(images.data.data() + i * HW, images.data.data() + (i + 1) * HW, img.data());
    std::ostringstream name;
    name << "img_" << std::setfill('0') << std::setw(5) << i;
    if (labels) name << "_c" << (*labels)[static_cast<size_t>(i)];
    write_pgm(out_dir / (name.str() + ".pgm"), img);
  }
  const int cols = per_class > 0 ? std::min(per_class, 10) : montage_columns;
  write_pgm(out_dir / "montage.pgm", make_montage(images.data, cols));
  std::cout << "wrote " << n << " samples to " << out_dir.string() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& generated, const std::string& data,
                 const std::string& extractor_path, const std::string& out,
                 int subset_size, int num_subsets, int splits, uint64_t seed) {
  const fs::path gen_dir(generated);
  if (!fs::exists(gen_dir / "samples.ten"))
    throw std::invalid_argument("no samples.ten under " + generated);
  if (!fs::exists(extractor_path))
    throw std::invalid_argument("feature extractor not found: " + extractor_path +
                                " (train one with `sardiff train-extractor`)");
  check_dataset_dir(data);
  Tensor<float> gen = load_tensor<float>(gen_dir / "samples.ten");
  Dataset real = load_dataset(data);

  // generated data must have been produced under the same normalization
  if (fs::exists(gen_dir / "norm_params.txt")) {
    NormalizationParams gp = load_norm_params(gen_dir / "norm_params.txt");
    if (std::abs(gp.input_min - real.norm.input_min) > 1e-9 ||
        std::abs(gp.input_max - real.norm.input_max) > 1e-9 ||
        std::abs(gp.log_epsilon - real.norm.log_epsilon) > 1e-15)
      throw std::invalid_argument(
          "normalization parameters of generated data do not match the real dataset");
  }

  SmallCnnExtractor extractor = SmallCnnExtractor::load(extractor_path);
  MetricOptions opts;
  opts.kid_subset_size = subset_size;
  opts.kid_num_subsets = num_subsets;
  opts.is_splits = splits;
  opts.seed = seed;
  MetricReport report = evaluate(gen, real, extractor, opts);

  std::cout << std::left << std::setw(24) << "set" << std::right << std::setw(10)
            << "IS ^" << std::setw(12) << "FID v" << std::setw(12) << "KID v" << "\n";
  std::cout << std::left << std::setw(24) << "generated" << std::right << std::fixed
            << std::setprecision(4) << std::setw(10) << report.is_mean << std::setw(12)
            << report.fid << std::setw(12) << report.kid << "\n";
  std::cout << "(n_generated=" << report.n_generated << ", n_real=" << report.n_real
            << ")\n";

  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  write_report_text(out_dir / "report.txt", report);
  write_report_json(out_dir / "report.json", report);
  return 0;
}

int cmd_train_extractor(const std::string& data, const std::string& out, int epochs,
                        int feature_dim, int batch, double lr, uint64_t seed) {
  check_dataset_dir(data);
  Dataset ds = load_dataset(data);
  if (!ds.labeled())
    throw std::invalid_argument("train-extractor: dataset must be labeled");
  ExtractorConfig cfg;
  cfg.epochs = epochs;
  cfg.feature_dim = feature_dim;
  cfg.batch_size = batch;
  cfg.learning_rate = lr;
  cfg.seed = seed;
  SmallCnnExtractor model = train_feature_extractor(ds, cfg, &std::cout);
  const fs::path parent = fs::path(out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  model.save(out);
  std::cout << "saved feature extractor to " << out << "\n";
  return 0;
}

int cmd_schedule_dump(const std::string& kind, int num_steps, double beta_1,
                      double beta_T, const std::string& out) {
  NoiseSchedule s =
      NoiseSchedule::make(schedule_kind_from_string(kind), num_steps, beta_1, beta_T);
  if (out.empty()) {
    write_curve_csv(s, std::cout);
  } else {
    std::ofstream f(out);
    ensure(f.is_open(), "cannot open " + out);
    write_curve_csv(s, f);
    std::cout << "wrote " << (num_steps + 1) << " rows to " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-conditional diffusion synthesis for radar-style imagery"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "Read options from an INI/TOML file");

  // prepare ------------------------------------------------------------
  auto* prepare = app.add_subcommand("prepare", "Build a normalized dataset");
  bool synthetic = false;
  std::string scenes, out_dir;
  int classes = 10, per_class = 100, size = 32, tile = 128;
  double test_fraction = 0.25;
  uint64_t seed = 0;
  prepare->add_flag("--synthetic", synthetic, "Generate the synthetic speckled-target set");
  prepare->add_option("--scenes", scenes, "Directory of raw clutter scenes (.pgm/.ten)");
  prepare->add_option("--classes", classes, "Synthetic class count");
  prepare->add_option("--per-class", per_class, "Synthetic images per class");
  prepare->add_option("--size", size, "Synthetic image side");
  prepare->add_option("--tile", tile, "Tile side for scene slicing");
  prepare->add_option("--test-fraction", test_fraction, "Held-out fraction");
  prepare->add_option("--seed", seed, "Generation seed");
  prepare->add_option("--out", out_dir, "Output dataset directory")->required();
  prepare->callback([&] {
    if (!synthetic && scenes.empty())
      throw CLI::ValidationError("prepare", "need --synthetic or --scenes");
    cmd_prepare(synthetic, scenes, classes, per_class, size, tile, test_fraction, seed,
                out_dir);
  });

  // shared training flags ------------------------------------------------
  std::string data, run_dir, init_ckpt;
  int epochs = 200, batch = 32, ckpt_interval = 0;
  double lr = 2e-4, clip = 1.0;
  bool unconditional = false;
  int pretrain_epochs = 500;

  auto* train = app.add_subcommand("train", "Train a denoising model");
  DiffusionFlags train_df;
  ModelFlags train_mf;
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--out", run_dir, "Run directory")->required();
  train->add_option("--epochs", epochs, "Training epochs");
  train->add_option("--batch", batch, "Batch size");
  train->add_option("--lr", lr, "Learning rate");
  train->add_option("--seed", seed, "Master seed");
  train->add_option("--clip", clip, "Gradient-norm clip (<=0 disables)");
  train->add_option("--checkpoint-interval", ckpt_interval, "Epochs between checkpoints");
  train->add_flag("--unconditional", unconditional, "Ignore labels even if present");
  train_df.attach(train);
  train_mf.attach(train);
  train->callback([&] {
    cmd_train(data, run_dir, epochs, batch, lr, seed, train_df, train_mf, unconditional,
              clip, ckpt_interval);
  });

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain unconditionally on clutter");
  DiffusionFlags pre_df;
  ModelFlags pre_mf;
  pretrain->add_option("--data", data, "Clutter dataset directory")->required();
  pretrain->add_option("--out", run_dir, "Run directory")->required();
  pretrain->add_option("--epochs", pretrain_epochs, "Pretraining epochs");
  pretrain->add_option("--batch", batch, "Batch size");
  pretrain->add_option("--lr", lr, "Learning rate");
  pretrain->add_option("--seed", seed, "Master seed");
  pretrain->add_option("--clip", clip, "Gradient-norm clip (<=0 disables)");
  pretrain->add_option("--checkpoint-interval", ckpt_interval,
                       "Epochs between checkpoints");
  pre_df.attach(pretrain);
  pre_mf.attach(pretrain);
  pretrain->callback([&] {
    cmd_train(data, run_dir, pretrain_epochs, batch, lr, seed, pre_df, pre_mf,
              /*unconditional=*/true, clip, ckpt_interval);
  });

  auto* finetune = app.add_subcommand("finetune", "Fine-tune a pretrained model");
  DiffusionFlags fine_df;
  finetune->add_option("--init", init_ckpt, "Pretrained checkpoint")->required();
  finetune->add_option("--data", data, "Labeled target dataset")->required();
  finetune->add_option("--out", run_dir, "Run directory")->required();
  finetune->add_option("--epochs", epochs, "Fine-tuning epochs");
  finetune->add_option("--batch", batch, "Batch size");
  finetune->add_option("--lr", lr, "Learning rate");
  finetune->add_option("--seed", seed, "Master seed");
  finetune->add_option("--clip", clip, "Gradient-norm clip (<=0 disables)");
  finetune->add_option("--checkpoint-interval", ckpt_interval,
                       "Epochs between checkpoints");
  fine_df.attach(finetune);
  finetune->callback([&] {
    const bool overridden = finetune->count("--schedule") || finetune->count("--steps") ||
                            finetune->count("--beta1") || finetune->count("--betaT");
    cmd_finetune(init_ckpt, data, run_dir, epochs, batch, lr, seed, fine_df, overridden,
                 clip, ckpt_interval);
  });

  // sample ---------------------------------------------------------------
  auto* sample_cmd = app.add_subcommand("sample", "Generate images from a checkpoint");
  DiffusionFlags sample_df;
  std::string checkpoint;
  int64_t n_samples = 16;
  int label = -1, per_class_n = 0, montage_columns = 5;
  sample_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  sample_cmd->add_option("-n,--num", n_samples, "Number of samples");
  sample_cmd->add_option("--label", label, "Generate a single class");
  sample_cmd->add_option("--per-class", per_class_n, "Samples per class");
  sample_cmd->add_option("--seed", seed, "Sampling seed");
  sample_cmd->add_option("--out", out_dir, "Output directory")->required();
  sample_cmd->add_option("--montage-columns", montage_columns, "Montage grid width");
  sample_df.attach(sample_cmd);
  sample_cmd->callback([&] {
    const bool overridden = sample_cmd->count("--schedule") ||
                            sample_cmd->count("--steps") || sample_cmd->count("--beta1") ||
                            sample_cmd->count("--betaT");
    cmd_sample(checkpoint, n_samples, label, per_class_n, seed, out_dir, sample_df,
               overridden, montage_columns);
  });

  // evaluate ---------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("evaluate", "Score generated images (IS/FID/KID)");
  std::string generated, extractor_path;
  int subset_size = 1000, num_subsets = 10, is_splits = 1;
  eval_cmd->add_option("--generated", generated, "Directory from `sample`")->required();
  eval_cmd->add_option("--data", data, "Real dataset directory")->required();
  eval_cmd->add_option("--extractor", extractor_path, "Feature-extractor checkpoint")
      ->required();
  eval_cmd->add_option("--out", out_dir, "Report directory")->required();
  eval_cmd->add_option("--subset-size", subset_size, "KID subset size");
  eval_cmd->add_option("--num-subsets", num_subsets, "KID subset count");
  eval_cmd->add_option("--splits", is_splits, "IS split count");
  eval_cmd->add_option("--seed", seed, "Metric seed");
  eval_cmd->callback([&] {
    cmd_evaluate(generated, data, extractor_path, out_dir, subset_size, num_subsets,
                 is_splits, seed);
  });

  // train-extractor ----------------------------------------------------------
  auto* tx = app.add_subcommand("train-extractor", "Train the metric feature extractor");
  int tx_epochs = 30, feature_dim = 256;
  double tx_lr = 1e-3;
  tx->add_option("--data", data, "Labeled dataset directory")->required();
  tx->add_option("--out", out_dir, "Output checkpoint path")->required();
  tx->add_option("--epochs", tx_epochs, "Training epochs");
  tx->add_option("--feature-dim", feature_dim, "Feature dimensionality");
  tx->add_option("--batch", batch, "Batch size");
  tx->add_option("--lr", tx_lr, "Learning rate");
  tx->add_option("--seed", seed, "Seed");
  tx->callback([&] {
    cmd_train_extractor(data, out_dir, tx_epochs, feature_dim, batch, tx_lr, seed);
  });

  // schedule-dump --------------------------------------------------------------
  auto* dump = app.add_subcommand("schedule-dump", "Write the alpha_bar curve as CSV");
  std::string kind = "linear", csv_out;
  DiffusionFlags dump_df;
  dump->add_option("--kind", kind, "linear|cosine|sigmoid")
      ->check(CLI::IsMember({"linear", "cosine", "sigmoid"}));
  dump->add_option("-T,--steps", dump_df.num_steps, "Diffusion steps");
  dump->add_option("--beta1", dump_df.beta_1, "First beta");
  dump->add_option("--betaT", dump_df.beta_T, "Last beta");
  dump->add_option("--out", csv_out, "Output CSV path (stdout if omitted)");
  dump->callback([&] {
    cmd_schedule_dump(kind, dump_df.num_steps, dump_df.beta_1, dump_df.beta_T, csv_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
