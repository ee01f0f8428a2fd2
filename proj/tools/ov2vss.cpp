// ov2vss: command-line entry point. Exit codes: 0 ok, 1 runtime error,
// 2 usage or configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ov2vss/checkpoint.hpp"
#include "ov2vss/protocol.hpp"
#include "ov2vss/synthdata.hpp"
#include "ov2vss/train.hpp"
#include "ov2vss/visualize.hpp"

namespace fs = std::filesystem;
using namespace ov;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> read_names(const fs::path& p) {
  const fs::path file = fs::is_directory(p) ? p / "vocab.txt" : p;
  std::ifstream in(file);
  if (!in) throw IoError("missing vocabulary file " + file.string());
  std::vector<std::string> names;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

int find_video(const Dataset& data, const std::string& key) {
  for (int v = 0; v < data.video_count(); ++v) {
    if (data.video(v).id == key) return v;
  }
  try {
    std::size_t pos = 0;
    const int v = std::stoi(key, &pos);
    if (pos == key.size() && v >= 0 && v < data.video_count()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("no video '" + key + "' in " + data.root().string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-vocabulary video semantic segmentation on synthetic data"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  bool seed_given = false;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { seed = s; seed_given = true; },
                                            "Random seed (overrides the config value)");
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic benchmark");
  std::string gen_spec, gen_out;
  std::vector<std::string> gen_sets;
  gen->add_option("--spec", gen_spec, "Generator spec file (key = value or JSON)")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output root (must be empty or absent)")->required();
  gen->add_option("--set", gen_sets, "Override, key=value");
  add_seed(gen);

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  std::string train_config, train_data, train_out;
  std::vector<std::string> train_sets;
  train->add_option("--config", train_config, "Config file")->check(CLI::ExistingFile);
  train->add_option("--data", train_data, "Training dataset root")->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--set,overrides", train_sets, "Overrides, key=value (win over the config file)");
  add_seed(train);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_filter = "all", eval_report;
  bool eval_cross = false;
  int baseline_trials = 0;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "Dataset root")->required();
  eval->add_option("--filter", eval_filter, "all | seen | unseen")->check(CLI::IsMember({"all", "seen", "unseen"}));
  eval->add_option("--report", eval_report, "Results directory for the JSON report");
  eval->add_flag("--cross-dataset", eval_cross, "Accept a vocabulary different from the checkpoint's");
  eval->add_option("--baseline-trials", baseline_trials, "Monte-Carlo trials for the random baseline (0: skip)");
  add_seed(eval);

  // predict
  auto* predict = app.add_subcommand("predict", "Write per-frame predicted masks for one video");
  std::string pred_ckpt, pred_data, pred_video, pred_out;
  predict->add_option("--checkpoint", pred_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  predict->add_option("--data", pred_data, "Dataset root")->required();
  predict->add_option("--video", pred_video, "Video id or index")->required();
  predict->add_option("--out", pred_out, "Output directory")->required();
  add_seed(predict);

  // visualize
  auto* vis = app.add_subcommand("visualize", "Colour-code a mask as an RGBA overlay");
  std::string vis_mask, vis_vocab, vis_out;
  vis->add_option("--mask", vis_mask, "Mask PNG")->required()->check(CLI::ExistingFile);
  vis->add_option("--vocab", vis_vocab, "vocab.txt or a dataset root")->required();
  vis->add_option("--out", vis_out, "Output PNG")->required();
  add_seed(vis);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      KeyValues kv = gen_spec.empty() ? KeyValues{} : load_config_file(gen_spec);
      for (const auto& [k, v] : parse_overrides(gen_sets)) kv[k] = v;
      GeneratorSpec spec = generator_spec_from(kv);
      if (seed_given) spec.seed = seed;
      generate(spec, gen_out);
      std::cerr << "wrote " << build_vocabulary(spec).size() << "-class benchmark to " << gen_out << "\n";
    } else if (*train) {
      Settings s;
      if (!train_config.empty()) apply_settings(s, load_config_file(train_config));
      apply_settings(s, parse_overrides(train_sets));
      if (seed_given) s.seed = seed;
      validate_settings(s);
      const Dataset data = Dataset::load(train_data);
      TrainOptions opts;
      opts.out_dir = train_out;
      opts.on_log = [](const LogEntry& e) {
        std::fprintf(stderr, "iter %6d  L_main %.5f  L_aux %.5f  L %.5f  lr %.3g\n", e.iteration, e.l_main,
                     e.l_aux, e.loss, e.lr);
      };
      const TrainResult r = train_loop(s, data, opts);
      std::fprintf(stderr, "checkpoint: %s (unseen pixels reaching a loss: %lld)\n",
                   (fs::path(train_out) / "checkpoint.bin").string().c_str(),
                   static_cast<long long>(r.audit.unseen_label_pixels));
    } else if (*eval) {
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      const Dataset data = Dataset::load(eval_data);
      const EvalFilter filter = parse_filter(eval_filter);
      ConfusionAccumulator confusion(1, -1);
      const MetricsReport r = eval_cross ? cross_dataset_eval(ck, data, filter, &confusion)
                                         : evaluate(ck, data, filter, &confusion);
      nlohmann::ordered_json j = report_to_json(r, data.vocab().names);
      if (baseline_trials > 0) {
        const auto classes = filter_classes(data.vocab(), filter);
        const auto b = random_baseline_monte_carlo(r.gt_pixels, data.vocab().size(), classes, baseline_trials, seed);
        j["random_baseline_miou"] = b.mean;
        j["random_baseline_std"] = b.stddev;
      }
      if (!eval_report.empty()) {
        const auto path = fs::path(eval_report) /
                          ("metrics_" + settings_fingerprint(ck.meta.settings) + "_" + r.filter_name + ".json");
        write_file_atomic(path, j.dump(2) + "\n");
        std::cerr << "report: " << path.string() << "\n";
      }
      std::cout << j.dump(2) << "\n";
    } else if (*predict) {
      const Checkpoint ck = load_checkpoint(pred_ckpt);
      const Dataset data = Dataset::load(pred_data);
      const auto model = model_from_checkpoint(ck);
      const int v = find_video(data, pred_video);
      const auto masks = predict_video(*model, ck.meta.settings.clip, data, v);
      fs::create_directories(pred_out);
      for (std::size_t t = 0; t < masks.size(); ++t) {
        write_png_labels(fs::path(pred_out) / frame_file_name(int(t)), masks[t]);
      }
      std::cerr << "wrote " << masks.size() << " masks to " << pred_out << "\n";
    } else if (*vis) {
      const auto names = read_names(vis_vocab);
      const LabelMap mask = read_png_labels(vis_mask);
      write_png_rgba(vis_out, mask.h, mask.w, render_overlay(mask, int(names.size()), kDefaultIgnoreIndex));
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
