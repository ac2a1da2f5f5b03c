// srpn: batch pipeline driver — synthesize data, train, evaluate, check
// gradients, run detection, and sweep embedding-loss margins.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "srpn/config.hpp"
#include "srpn/errors.hpp"
#include "srpn/dataset.hpp"
#include "srpn/evaluator.hpp"
#include "srpn/gradcheck.hpp"
#include "srpn/head.hpp"
#include "srpn/image_io.hpp"
#include "srpn/rng.hpp"
#include "srpn/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitBadConfig = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitDiverged = 4;

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

srpn::ExperimentConfig load_config(const std::string& path, bool has_seed,
                                   std::uint64_t seed_override) {
  srpn::ExperimentConfig config;
  if (!path.empty()) {
    if (!fs::exists(path))
      throw srpn::MissingFileError("missing config file: " + path);
    config = srpn::ExperimentConfig::from_file(path);
  }
  if (has_seed) {
    config.seed = seed_override;
    config.finalize();
  }
  return config;
}

void echo_config(const srpn::ExperimentConfig& config, const fs::path& out) {
  fs::create_directories(out);
  write_text(out / "config.resolved.toml", config.to_string());
}

std::vector<srpn::AnnotatedImage> load_data_dir(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "annotations.jsonl"))
    throw srpn::MissingFileError("missing dataset: " + dir +
                                 " has no annotations.jsonl");
  return srpn::load_dataset(dir);
}

int cmd_synth(const std::string& config_path, const std::string& out_dir,
              bool has_seed, std::uint64_t seed) {
  srpn::ExperimentConfig config = load_config(config_path, has_seed, seed);
  const auto images =
      srpn::generate_dataset(config.scene, config.synth_images, config.seed);
  srpn::save_dataset(out_dir, images);
  echo_config(config, out_dir);
  std::printf("wrote %zu images to %s\n", images.size(), out_dir.c_str());
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, bool has_seed, std::uint64_t seed) {
  srpn::ExperimentConfig config = load_config(config_path, has_seed, seed);
  const auto dataset = load_data_dir(data_dir);
  srpn::TrainResult result = srpn::train(config.head, config.train, dataset);
  fs::create_directories(out_dir);
  srpn::save_checkpoint((fs::path(out_dir) / "checkpoint.srpn").string(),
                        result.model);
  write_text(fs::path(out_dir) / "train_log.csv",
             srpn::train_log_to_csv(result.log));
  echo_config(config, out_dir);
  std::printf("trained %d iterations; final loss %.6f\n",
              config.train.iterations, result.log.back().loss_total);
  return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& data_dir, const std::string& protocol,
             const std::string& out_dir) {
  srpn::ExperimentConfig config = load_config(config_path, false, 0);
  if (!fs::exists(checkpoint))
    throw srpn::MissingFileError("missing checkpoint file: " + checkpoint);
  srpn::Model model = srpn::load_checkpoint(checkpoint);
  // the checkpoint's head shape wins over whatever the config file says
  config.head = model.config;
  const auto dataset = load_data_dir(data_dir);
  srpn::AnchorSpec spec = config.train.anchor_spec;
  spec.stride = model.config.stride();

  fs::create_directories(out_dir);
  if (protocol == "f1ap") {
    const srpn::MetricsReport report =
        srpn::evaluate_f1ap(model, dataset, spec, config.eval);
    write_text(fs::path(out_dir) / "metrics.csv", srpn::metrics_to_csv(report));
    write_text(fs::path(out_dir) / "metrics.txt", srpn::metrics_summary(report));
    std::fputs(srpn::metrics_summary(report).c_str(), stdout);
  } else if (protocol == "ringcell") {
    const srpn::RingcellReport report =
        srpn::evaluate_ringcell(model, dataset, spec, config.eval);
    if (report.n_negative_images == 0)
      throw std::runtime_error(
          "ringcell protocol needs negative (annotation-free) images");
    write_text(fs::path(out_dir) / "metrics.csv", srpn::ringcell_to_csv(report));
    write_text(fs::path(out_dir) / "metrics.txt",
               srpn::ringcell_summary(report));
    std::fputs(srpn::ringcell_summary(report).c_str(), stdout);
  } else {
    throw srpn::ConfigError("protocol must be f1ap or ringcell, got '" +
                            protocol + "'");
  }
  echo_config(config, out_dir);
  return kExitOk;
}

int cmd_gradcheck(const std::string& scope) {
  std::vector<srpn::GradCheckResult> results;
  if (scope == "all" || scope.empty()) {
    for (const char* s : {"ops", "losses", "model"})
      for (auto& r : srpn::run_gradcheck(s)) results.push_back(std::move(r));
  } else {
    results = srpn::run_gradcheck(scope);
  }
  std::fputs(srpn::gradcheck_table(results).c_str(), stdout);
  for (const auto& r : results)
    if (!r.pass) return kExitFailure;
  return kExitOk;
}

int cmd_detect(const std::string& config_path, const std::string& checkpoint,
               const std::string& image_path, const std::string& data_path,
               const std::string& out_dir) {
  srpn::ExperimentConfig config = load_config(config_path, false, 0);
  if (!fs::exists(checkpoint))
    throw srpn::MissingFileError("missing checkpoint file: " + checkpoint);
  if (!fs::exists(image_path))
    throw srpn::MissingFileError("missing image file: " + image_path);
  srpn::Model model = srpn::load_checkpoint(checkpoint);
  config.head = model.config;
  srpn::AnchorSpec spec = config.train.anchor_spec;
  spec.stride = model.config.stride();

  srpn::Tensor image = srpn::read_png(image_path);
  const auto detections =
      srpn::detect(model, image, spec, config.eval.score_threshold,
                   config.eval.nms_iou);

  fs::create_directories(out_dir);
  {
    std::ofstream f(fs::path(out_dir) / "detections.jsonl");
    for (const auto& det : detections) {
      nlohmann::json j{{"box", {det.box.x, det.box.y, det.box.h, det.box.w}},
                       {"score", det.score}};
      f << j.dump() << "\n";
    }
  }

  // ground truth in green, predictions in yellow
  if (!data_path.empty()) {
    const auto records = srpn::load_annotations(data_path);
    const std::string name = fs::path(image_path).filename().string();
    for (const auto& rec : records)
      if (fs::path(rec.image_path).filename().string() == name)
        for (const auto& box : rec.boxes)
          srpn::draw_box_outline(image, box, srpn::Rgb{0.0, 1.0, 0.0});
  }
  for (const auto& det : detections)
    srpn::draw_box_outline(image, det.box, srpn::Rgb{1.0, 1.0, 0.0});
  srpn::write_png((fs::path(out_dir) / "overlay.png").string(), image);
  echo_config(config, out_dir);
  std::printf("%zu detections\n", detections.size());
  return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& eval_dir, const std::string& margins_arg,
               const std::string& out_dir, bool has_seed, std::uint64_t seed) {
  srpn::ExperimentConfig config = load_config(config_path, has_seed, seed);

  std::vector<double> margins;
  {
    std::istringstream in(margins_arg);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        margins.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw srpn::ConfigError("--margins: expected comma-separated numbers");
      }
    }
  }
  if (margins.empty()) throw srpn::ConfigError("empty --margins list");

  std::vector<srpn::AnnotatedImage> train_set, eval_set;
  if (!data_dir.empty()) {
    train_set = load_data_dir(data_dir);
    eval_set = eval_dir.empty() ? train_set : load_data_dir(eval_dir);
  } else {
    // self-contained: synthesize train and eval splits from the config
    train_set = srpn::generate_dataset(config.scene, config.synth_images,
                                       config.seed);
    eval_set = srpn::generate_dataset(
        config.scene, std::max(1, config.synth_images / 4),
        srpn::mix_seed(config.seed, 0xe7a1));
  }

  fs::create_directories(out_dir);
  std::string csv = "loss,margin,f1,ap\n";
  for (const char* mode : {"pair", "triplet"}) {
    srpn::TrainConfig tc = config.train;
    tc.embed_mode = std::string(mode) == "pair" ? srpn::EmbedMode::kPair
                                                : srpn::EmbedMode::kTriplet;
    const auto rows = srpn::sweep_margins(config.head, tc, margins, train_set,
                                          eval_set, config.eval);
    for (const auto& row : rows) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g\n", mode,
                    row.margin, row.f1, row.ap);
      csv += buf;
    }
  }
  write_text(fs::path(out_dir) / "margin_sweep.csv", csv);
  echo_config(config, out_dir);
  std::fputs(csv.c_str(), stdout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"similarity-based region proposal network pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, eval_dir, checkpoint, image_path,
      protocol = "f1ap", scope = "all", margins = "0.5,1.0,1.5,2.0",
      data_path;
  std::uint64_t seed = 0;
  bool has_seed = false;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { has_seed = true; });
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", config_path, "experiment config file");
  synth->add_option("--out", out_dir, "output directory")->required();
  add_seed(synth);

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "experiment config file");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  add_seed(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", config_path, "experiment config file");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--protocol", protocol, "f1ap or ringcell");
  eval->add_option("--out", out_dir, "output directory")->required();

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--scope", scope, "ops, losses, model or all");

  CLI::App* detect = app.add_subcommand("detect", "detect on one image");
  detect->add_option("--config", config_path, "experiment config file");
  detect->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  detect->add_option("--image", image_path, "input PNG")->required();
  detect->add_option("--data", data_path, "annotations file for the overlay");
  detect->add_option("--out", out_dir, "output directory")->required();

  CLI::App* ablate =
      app.add_subcommand("ablate", "margin sweep for pair and triplet losses");
  ablate->add_option("--config", config_path, "experiment config file");
  ablate->add_option("--data", data_dir, "training dataset directory");
  ablate->add_option("--eval-data", eval_dir, "evaluation dataset directory");
  ablate->add_option("--margins", margins, "comma-separated margins");
  ablate->add_option("--out", out_dir, "output directory")->required();
  add_seed(ablate);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(config_path, out_dir, has_seed, seed);
    if (train->parsed())
      return cmd_train(config_path, data_dir, out_dir, has_seed, seed);
    if (eval->parsed())
      return cmd_eval(config_path, checkpoint, data_dir, protocol, out_dir);
    if (gradcheck->parsed()) return cmd_gradcheck(scope);
    if (detect->parsed())
      return cmd_detect(config_path, checkpoint, image_path, data_path, out_dir);
    if (ablate->parsed())
      return cmd_ablate(config_path, data_dir, eval_dir, margins, out_dir,
                        has_seed, seed);
  } catch (const srpn::MissingFileError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitMissingFile;
  } catch (const srpn::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDiverged;
  } catch (const srpn::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
