// hairbench command-line front end.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error,
// 4 numerical fault.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hairbench/hairbench.hpp"

namespace fs = std::filesystem;
using namespace hairbench;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

nlohmann::json load_json(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
}

struct SimulateArgs {
  std::string clean, out, masks, config;
  std::uint64_t seed = 0;
  double split = 0.7;
  double hairless = 0.1;
  double superimposed = 0.0;
  std::size_t size = 0;
  std::size_t generate = 0;
  std::size_t threads = 0;
};

int run_simulate(const SimulateArgs& a) {
  const fs::path out(a.out);
  fs::path clean_dir(a.clean);
  if (a.generate > 0) {
    if (clean_dir.empty()) clean_dir = out / "source";
    fs::create_directories(clean_dir);
    const std::size_t size = a.size ? a.size : 64;
    for (std::size_t i = 0; i < a.generate; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "skin_%05zu.png", i);
      write_png(clean_dir / name, synthesize_skin(size, derive_seed(a.seed, 50000 + i)));
    }
  } else if (clean_dir.empty()) {
    throw ConfigError("simulate needs --clean or --generate-clean");
  }
  Recipe recipe;
  recipe.hairless_fraction = a.hairless;
  recipe.superimposed_fraction = a.superimposed;
  recipe.mask_dir = a.masks;
  const auto cfg = load_json(a.config);
  if (cfg.contains("strands")) {
    try {
      recipe.strands = cfg.at("strands").get<StrandParams>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid strands config: ") + e.what());
    }
  }
  if (a.size) recipe.image_size = a.size;
  const auto result = build_dataset(clean_dir, out, recipe, a.split, a.seed, a.threads ? a.threads : default_thread_count());
  std::size_t train = 0;
  for (const auto& r : result.records) train += r.split == "train";
  std::cout << "wrote " << result.records.size() << " samples (" << train << " train, "
            << result.records.size() - train << " test) to " << result.manifest_path.string() << '\n';
  return 0;
}

struct TrainArgs {
  std::string config, manifest, out, preset;
  double lr = 0;
  std::size_t batch = 0, epochs = 0, patience = 0, max_steps = 0;
  std::int64_t seed = -1;
  bool resume = false;
  bool quiet = false;
};

TrainConfig build_train_config(const TrainArgs& a) {
  TrainConfig c;
  merge_train_config(load_json(a.config), c);
  if (!a.preset.empty()) {
    c.preset = a.preset;
    c.model = ModelConfig::preset(a.preset);
  }
  if (!a.manifest.empty()) c.manifest = a.manifest;
  if (!a.out.empty()) c.checkpoint_dir = a.out;
  if (a.lr > 0) c.lr = a.lr;
  if (a.batch) c.batch_size = a.batch;
  if (a.epochs) c.max_epochs = a.epochs;
  if (a.patience) c.patience = a.patience;
  if (a.max_steps) c.max_steps = a.max_steps;
  if (a.seed >= 0) c.seed = static_cast<std::uint64_t>(a.seed);
  c.resume = a.resume;
  if (c.manifest.empty()) throw ConfigError("train needs --manifest (or \"manifest\" in the config)");
  c.validate();
  return c;
}

int run_train(const TrainArgs& a) {
  const TrainConfig c = build_train_config(a);
  const auto r = train(c, a.quiet ? nullptr : &std::cerr);
  std::cout << "stopped: " << r.stop_reason << " after " << r.curve.size() << " epochs, " << r.steps
            << " steps; best epoch " << r.best_epoch << " (val loss " << format_number(r.best_val_loss, 5) << ")\n"
            << "best checkpoint: " << r.best_checkpoint.string() << '\n';
  return 0;
}

struct InferArgs {
  std::string checkpoint, input, output, baseline;
  std::size_t size = 64;
};

int run_infer(const InferArgs& a) {
  InferResult r;
  if (!a.baseline.empty()) {
    const Baseline b = a.baseline == "copy" ? Baseline::Copy : a.baseline == "median" ? Baseline::Median : Baseline::None;
    if (b == Baseline::None) throw ConfigError("unknown baseline '" + a.baseline + "' (copy or median)");
    r = infer_directory(baseline_restorer(b), a.input, a.output);
  } else {
    if (a.checkpoint.empty()) throw ConfigError("infer needs --checkpoint or --baseline");
    const auto net = load_model(a.checkpoint, a.size);
    r = infer_directory(network_restorer(net), a.input, a.output);
  }
  for (const auto& s : r.skipped) std::cerr << "skipped " << s.name << ": " << s.reason << '\n';
  std::cout << "restored " << r.written.size() << " images into " << a.output << '\n';
  return 0;
}

int run_evaluate(const std::string& ref, const std::string& test, const std::string& out) {
  const auto report = evaluate_directory(ref, test);
  for (const auto& o : report.omissions) std::cerr << "omitted " << o.name << ": " << o.reason << '\n';
  if (!out.empty()) {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_report(report, out + ".csv", out + ".json");
  }
  if (!report.has_aggregate()) {
    std::cerr << "no images in common between " << ref << " and " << test << '\n';
    return kExitData;
  }
  write_report_csv(std::cout, report);
  return 0;
}

int run_compare(const std::string& ref, const std::vector<std::string>& specs, const std::string& out) {
  std::vector<MethodInput> methods;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      methods.push_back({fs::path(s).filename().string(), s});
    } else {
      methods.push_back({s.substr(0, eq), s.substr(eq + 1)});
    }
  }
  const auto r = compare_methods_dirs(ref, methods);
  if (!out.empty()) {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    std::ofstream csv(out + ".csv", std::ios::trunc);
    write_verdict_csv(csv, r);
    std::ofstream txt(out + ".txt", std::ios::trunc);
    write_verdict_text(txt, r);
    for (std::size_t k = 0; k < r.methods.size(); ++k) {
      write_report(r.reports[k], out + "." + r.methods[k] + ".csv", out + "." + r.methods[k] + ".json");
    }
  }
  write_verdict_text(std::cout, r);
  return 0;
}

int run_ablate(const TrainArgs& a, const std::vector<std::string>& toggles, const std::string& out, bool all) {
  TrainArgs base = a;
  base.out.clear();
  TrainConfig c = build_train_config(base);
  std::vector<std::string> t = all ? ablation_toggles() : toggles;
  const auto rows = ablate(c, t, out, a.quiet ? nullptr : &std::cerr);
  std::ofstream csv(fs::path(out) / "ablation.csv", std::ios::trunc);
  write_ablation_csv(csv, rows);
  write_ablation_csv(std::cout, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hairbench: hair removal training and benchmarking"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Build a paired dataset from clean images");
  simulate->add_option("--clean", sim.clean, "Directory of clean PNG images");
  simulate->add_option("--out", sim.out, "Output dataset directory")->required();
  simulate->add_option("--seed", sim.seed, "Random seed");
  simulate->add_option("--split", sim.split, "Train fraction")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--hairless", sim.hairless, "Fraction of samples left without hair")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--superimposed", sim.superimposed, "Fraction corrupted with masks from --masks")
      ->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--masks", sim.masks, "Directory of binary hair masks");
  simulate->add_option("--size", sim.size, "Resize images to size x size");
  simulate->add_option("--generate-clean", sim.generate, "Synthesize N clean skin images first");
  simulate->add_option("--config", sim.config, "JSON file with a \"strands\" section");
  simulate->add_option("--threads", sim.threads, "Worker threads");

  TrainArgs tr;
  auto add_train_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", tr.config, "JSON training config");
    cmd->add_option("--manifest", tr.manifest, "Dataset manifest.jsonl");
    cmd->add_option("--preset", tr.preset, "Model preset: desk or full");
    cmd->add_option("--lr", tr.lr, "Learning rate");
    cmd->add_option("--batch", tr.batch, "Batch size");
    cmd->add_option("--epochs", tr.epochs, "Maximum epochs");
    cmd->add_option("--patience", tr.patience, "Early stopping patience (epochs)");
    cmd->add_option("--max-steps", tr.max_steps, "Stop after this many optimizer steps");
    cmd->add_option("--seed", tr.seed, "Random seed");
    cmd->add_flag("--quiet", tr.quiet, "No per-epoch log");
  };
  auto* train_cmd = app.add_subcommand("train", "Train the hair removal network");
  add_train_options(train_cmd);
  train_cmd->add_option("--out", tr.out, "Checkpoint directory");
  train_cmd->add_flag("--resume", tr.resume, "Continue from the checkpoint directory's last state");

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "Restore a directory of images");
  infer->add_option("--checkpoint", inf.checkpoint, "Model checkpoint");
  infer->add_option("--input", inf.input, "Input directory")->required();
  infer->add_option("--output", inf.output, "Output directory")->required();
  infer->add_option("--size", inf.size, "Network input size");
  infer->add_option("--baseline", inf.baseline, "Use a baseline instead of a network: copy or median");

  std::string ref, test, out;
  auto* evaluate = app.add_subcommand("evaluate", "Compute the nine metrics for a directory");
  evaluate->add_option("--ref", ref, "Reference (clean) directory")->required();
  evaluate->add_option("--test", test, "Restored directory")->required();
  evaluate->add_option("--out", out, "Report path prefix (writes .csv and .json)");

  std::vector<std::string> methods;
  auto* compare = app.add_subcommand("compare", "Statistically compare methods against a reference");
  compare->add_option("--ref", ref, "Reference (clean) directory")->required();
  compare->add_option("--method", methods, "name=dir, repeat for each method")->required();
  compare->add_option("--out", out, "Output path prefix (writes .csv, .txt and per-method reports)");

  std::vector<std::string> toggles;
  bool all_toggles = false;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate ablation variants");
  add_train_options(ablate_cmd);
  ablate_cmd->add_option("--toggle", toggles, "Variant toggle, repeatable")->delimiter(',');
  ablate_cmd->add_flag("--all", all_toggles, "Run every toggle");
  ablate_cmd->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*train_cmd) return run_train(tr);
    if (*infer) return run_infer(inf);
    if (*evaluate) return run_evaluate(ref, test, out);
    if (*compare) return run_compare(ref, methods, out);
    if (*ablate_cmd) {
      for (const auto& t : toggles) apply_toggle(TrainConfig{}, t);
      return run_ablate(tr, toggles, out, all_toggles);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalFault& e) {
    std::cerr << "numerical fault: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
