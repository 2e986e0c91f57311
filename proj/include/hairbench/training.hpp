#pragma once

// Training loop, inference, method comparison and ablation sweeps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hairbench/adam.hpp"
#include "hairbench/checkpoint.hpp"
#include "hairbench/error.hpp"
#include "hairbench/hairsim.hpp"
#include "hairbench/image.hpp"
#include "hairbench/loss.hpp"
#include "hairbench/metrics.hpp"
#include "hairbench/model.hpp"
#include "hairbench/rng.hpp"
#include "hairbench/stats.hpp"

namespace hairbench {

struct TrainConfig {
  std::string preset = "desk";
  ModelConfig model = ModelConfig::desk();
  LossWeights weights;
  double lr = 1e-4;
  std::size_t batch_size = 4;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  std::size_t max_steps = 0;  // 0: unlimited
  std::filesystem::path manifest;
  std::filesystem::path checkpoint_dir = "checkpoints";
  bool resume = false;

  void validate() const {
    model.validate();
    weights.validate();
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      throw ConfigError("validation_fraction must be in [0,1)");
    }
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"preset", c.preset},
                     {"model", c.model},
                     {"loss_weights", c.weights},
                     {"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"max_epochs", c.max_epochs},
                     {"patience", c.patience},
                     {"seed", c.seed},
                     {"validation_fraction", c.validation_fraction},
                     {"max_steps", c.max_steps},
                     {"manifest", c.manifest.string()},
                     {"checkpoint_dir", c.checkpoint_dir.string()}};
}

/// Keys absent from j keep their current values, so a file can override a preset.
inline void merge_train_config(const nlohmann::json& j, TrainConfig& c) {
  try {
    if (j.contains("preset")) {
      c.preset = j.at("preset").get<std::string>();
      c.model = ModelConfig::preset(c.preset);
    }
    if (j.contains("model")) {
      nlohmann::json m = c.model;
      m.update(j.at("model"));
      c.model = m.get<ModelConfig>();
    }
    if (j.contains("loss_weights")) {
      nlohmann::json w = c.weights;
      w.update(j.at("loss_weights"));
      c.weights = w.get<LossWeights>();
    }
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.max_steps = j.value("max_steps", c.max_steps);
    if (j.contains("manifest")) c.manifest = j.at("manifest").get<std::string>();
    if (j.contains("checkpoint_dir")) c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  }
}

template <typename T>
struct Batch {
  Tensor<T> input;   // corrupted
  Tensor<T> target;  // clean
  Tensor<T> mask;
};

template <typename T>
Batch<T> make_batch(const std::vector<PairedSample>& samples, const std::vector<std::size_t>& indices) {
  std::vector<const Image*> in, gt, mk;
  for (std::size_t i : indices) {
    in.push_back(&samples[i].corrupted);
    gt.push_back(&samples[i].clean);
    mk.push_back(&samples[i].mask);
  }
  return {to_tensor<T>(in), to_tensor<T>(gt), to_tensor<T>(mk)};
}

struct StepResult {
  double loss = 0.0;
  std::array<double, 5> weighted{};
};

/// Model plus optimizer; one call to step() is one Adam update.
template <typename T = float>
class Trainer {
 public:
  Trainer(const ModelConfig& model, const LossWeights& weights, double lr, std::uint64_t seed)
      : net_(model, seed), weights_(weights), lr_(lr), adam_(net_.parameters()) {
    weights_.validate();
    if (!(lr_ > 0.0)) throw ConfigError("lr must be > 0");
  }

  StepResult step(const Batch<T>& b) {
    zero_grad(net_.parameters());
    const auto loss = loss_of(b);
    backward(loss.total);
    adam_step(net_.parameters(), adam_, lr_);
    return summarize(loss);
  }

  /// Loss without an update.
  StepResult evaluate(const Batch<T>& b) const { return summarize(loss_of(b)); }

  Tensor<T> predict(const Tensor<T>& input) const {
    return net_.forward(Var<T>::constant(input)).value();
  }

  HairRemovalNet<T>& model() { return net_; }
  const HairRemovalNet<T>& model() const { return net_; }
  AdamState<T>& optimizer() { return adam_; }
  const LossWeights& weights() const { return weights_; }

 private:
  LossBreakdown<T> loss_of(const Batch<T>& b) const {
    const Var<T> pred = net_.forward(Var<T>::constant(b.input));
    return reconstruction_loss(MaskedPair<T>{pred, b.target, b.mask}, weights_);
  }

  static StepResult summarize(const LossBreakdown<T>& l) {
    const double v = static_cast<double>(l.total.value().item());
    if (!std::isfinite(v)) throw NumericalFault("loss is not finite");
    return {v, l.weighted};
  }

  HairRemovalNet<T> net_;
  LossWeights weights_;
  double lr_;
  AdamState<T> adam_;
};

/// Patience-based early stopping on validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true if this value is a new best.
  bool update(double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      bad_ = 0;
      return true;
    }
    ++bad_;
    return false;
  }

  bool should_stop() const { return bad_ >= patience_; }
  double best() const { return best_; }
  std::size_t bad_epochs() const { return bad_; }
  void restore(double best, std::size_t bad) {
    best_ = best;
    bad_ = bad;
  }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_ = 0;
};

struct CurveRow {
  std::size_t epoch;
  double train_loss;
  double val_loss;
  double val_psnr;
};

inline void write_curve_csv(const std::filesystem::path& path, const std::vector<CurveRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << "epoch,train_loss,val_loss,val_psnr\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << format_number(r.train_loss, 8) << ',' << format_number(r.val_loss, 8) << ','
       << format_number(r.val_psnr, 6) << '\n';
  }
}

/// Two side-by-side line charts (losses, validation PSNR) as standalone SVG.
inline std::string curve_svg(const std::vector<CurveRow>& rows) {
  const double pw = 360, ph = 240, margin = 40;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * (pw + 2 * margin) << "\" height=\""
     << ph + 2 * margin << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  auto panel = [&](double x0, const std::string& title,
                   const std::vector<std::pair<std::vector<double>, std::string>>& series) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& [ys, color] : series) {
      for (double y : ys) {
        lo = std::min(lo, y);
        hi = std::max(hi, y);
      }
    }
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double n = std::max<double>(1.0, static_cast<double>(rows.size()) - 1.0);
    os << "<g transform=\"translate(" << x0 + margin << ',' << margin << ")\">\n";
    os << "<rect width=\"" << pw << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#999\"/>\n";
    os << "<text x=\"" << pw / 2 << "\" y=\"-12\" text-anchor=\"middle\">" << title << "</text>\n";
    os << "<text x=\"-4\" y=\"8\" text-anchor=\"end\">" << format_number(hi, 3) << "</text>\n";
    os << "<text x=\"-4\" y=\"" << ph << "\" text-anchor=\"end\">" << format_number(lo, 3) << "</text>\n";
    os << "<text x=\"" << pw << "\" y=\"" << ph + 16 << "\" text-anchor=\"end\">epoch "
       << (rows.empty() ? 0 : rows.back().epoch) << "</text>\n";
    for (const auto& [ys, color] : series) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < ys.size(); ++i) {
        os << format_number(static_cast<double>(i) / n * pw, 2) << ','
           << format_number(ph - (ys[i] - lo) / (hi - lo) * ph, 2) << ' ';
      }
      os << "\"/>\n";
    }
    os << "</g>\n";
  };
  std::vector<double> tl, vl, vp;
  for (const auto& r : rows) {
    tl.push_back(r.train_loss);
    vl.push_back(r.val_loss);
    vp.push_back(r.val_psnr);
  }
  panel(0, "loss (train blue, validation orange)", {{tl, "#1f77b4"}, {vl, "#ff7f0e"}});
  panel(pw + 2 * margin, "validation PSNR (dB)", {{vp, "#2ca02c"}});
  os << "</svg>\n";
  return os.str();
}

/// Loads the manifest's samples of one split, resized to size x size.
inline std::vector<PairedSample> load_split(const std::filesystem::path& manifest, const std::string& split,
                                            std::size_t size, std::vector<std::string>* names = nullptr) {
  if (!std::filesystem::exists(manifest)) throw DataError("manifest not found: " + manifest.string());
  const auto base = manifest.parent_path();
  std::vector<PairedSample> out;
  for (const auto& r : read_manifest(manifest)) {
    if (r.split != split) continue;
    PairedSample s = load_sample(r, base);
    if (s.clean.width != size || s.clean.height != size) {
      s.clean = quantized(resize_bilinear(s.clean, size, size));
      s.corrupted = quantized(resize_bilinear(s.corrupted, size, size));
      s.mask = resize_nearest(s.mask, size, size);
    }
    out.push_back(std::move(s));
    if (names) names->push_back(std::filesystem::path(r.clean_path).filename().string());
  }
  return out;
}

/// Mean PSNR (8-bit domain) of the model's predictions against the clean targets.
template <typename T>
double mean_psnr(const Trainer<T>& trainer, const std::vector<PairedSample>& samples, std::size_t batch_size) {
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t k = i; k < std::min(samples.size(), i + batch_size); ++k) idx.push_back(k);
    const auto b = make_batch<T>(samples, idx);
    const auto pred = trainer.predict(b.input);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      total += psnr(samples[idx[k]].clean, from_tensor(pred, k));
    }
  }
  return samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
}

template <typename T>
double mean_loss(const Trainer<T>& trainer, const std::vector<PairedSample>& samples, std::size_t batch_size) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t k = i; k < std::min(samples.size(), i + batch_size); ++k) idx.push_back(k);
    total += trainer.evaluate(make_batch<T>(samples, idx)).loss * static_cast<double>(idx.size());
    count += idx.size();
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

struct TrainResult {
  std::vector<CurveRow> curve;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t steps = 0;
  std::string stop_reason;
  std::filesystem::path best_checkpoint;
};

namespace training_detail {

inline nlohmann::json curve_json(const std::vector<CurveRow>& rows) {
  auto a = nlohmann::json::array();
  for (const auto& r : rows) a.push_back({r.epoch, r.train_loss, r.val_loss, r.val_psnr});
  return a;
}

inline std::vector<CurveRow> curve_from_json(const nlohmann::json& a) {
  std::vector<CurveRow> rows;
  for (const auto& r : a) rows.push_back({r[0].get<std::size_t>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()});
  return rows;
}

}  // namespace training_detail

/// Trains on the manifest's train split with a seed-determined validation
/// holdout and early stopping. Writes best.ckpt (lowest validation loss),
/// last.ckpt with optimizer state, state.json, curve.csv, curve.svg and
/// steps.csv into checkpoint_dir. With resume set, continues from state.json.
inline TrainResult train(const TrainConfig& config, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  using T = float;
  config.validate();
  const std::size_t size = config.model.input_size;
  auto samples = load_split(config.manifest, "train", size);
  if (samples.empty()) throw DataError("manifest has no train samples: " + config.manifest.string());

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(config.seed, 3));
  split_rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(samples.size())));
  if (config.validation_fraction > 0.0 && samples.size() >= 2) n_val = std::max<std::size_t>(n_val, 1);
  n_val = std::min(n_val, samples.size() - 1);
  std::vector<PairedSample> train_set, val_set;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_val ? val_set : train_set).push_back(std::move(samples[order[k]]));
  }
  // Without a holdout the training samples stand in for validation.
  const std::vector<PairedSample>& monitor = val_set.empty() ? train_set : val_set;

  fs::create_directories(config.checkpoint_dir);
  const fs::path best_path = config.checkpoint_dir / "best.ckpt";
  const fs::path last_path = config.checkpoint_dir / "last.ckpt";
  const fs::path state_path = config.checkpoint_dir / "state.json";

  Trainer<T> trainer(config.model, config.weights, config.lr, derive_seed(config.seed, 4));
  EarlyStopping stopper(config.patience);
  TrainResult result;
  result.best_checkpoint = best_path;
  std::size_t first_epoch = 1;

  if (config.resume && fs::exists(state_path)) {
    nlohmann::json st;
    std::ifstream(state_path) >> st;
    auto records = read_checkpoint(last_path.string());
    load_records(records, trainer.model().parameters());
    load_optimizer_records(records, trainer.model().parameters(), trainer.optimizer());
    result.curve = training_detail::curve_from_json(st.at("curve"));
    result.best_epoch = st.at("best_epoch").get<std::size_t>();
    result.steps = st.at("steps").get<std::size_t>();
    stopper.restore(st.at("best_val_loss").get<double>(), st.at("bad_epochs").get<std::size_t>());
    first_epoch = st.at("epoch").get<std::size_t>() + 1;
    if (log) *log << "resuming at epoch " << first_epoch << '\n';
  }

  const bool resumed = first_epoch > 1;
  std::ofstream steps_csv(config.checkpoint_dir / "steps.csv", resumed ? std::ios::app : std::ios::trunc);
  if (!resumed) {
    steps_csv << "step,epoch,loss";
    for (const char* n : kLossTermNames) steps_csv << ',' << n;
    steps_csv << '\n';
  }

  result.stop_reason = "max_epochs";
  for (std::size_t epoch = first_epoch; epoch <= config.max_epochs; ++epoch) {
    if (stopper.should_stop()) {
      result.stop_reason = "patience";
      break;
    }
    std::vector<std::size_t> idx(train_set.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng epoch_rng(derive_seed(config.seed, 100 + epoch));
    epoch_rng.shuffle(idx);
    double train_total = 0.0;
    std::size_t seen = 0;
    bool step_limit = false;
    for (std::size_t i = 0; i < idx.size(); i += config.batch_size) {
      if (config.max_steps && result.steps >= config.max_steps) {
        step_limit = true;
        break;
      }
      const std::vector<std::size_t> bi(idx.begin() + static_cast<std::ptrdiff_t>(i),
                                        idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), i + config.batch_size)));
      const auto r = trainer.step(make_batch<T>(train_set, bi));
      ++result.steps;
      train_total += r.loss * static_cast<double>(bi.size());
      seen += bi.size();
      steps_csv << result.steps << ',' << epoch << ',' << format_number(r.loss, 8);
      for (double w : r.weighted) steps_csv << ',' << format_number(w, 8);
      steps_csv << '\n';
    }
    if (seen == 0) {
      result.stop_reason = "max_steps";
      break;
    }
    const double val_loss = mean_loss(trainer, monitor, config.batch_size);
    const double val_psnr = mean_psnr(trainer, monitor, config.batch_size);
    if (!std::isfinite(val_loss)) throw NumericalFault("validation loss is not finite at epoch " + std::to_string(epoch));
    result.curve.push_back({epoch, train_total / static_cast<double>(seen), val_loss, val_psnr});
    if (stopper.update(val_loss)) {
      result.best_epoch = epoch;
      write_checkpoint(best_path.string(), to_records(trainer.model().parameters()));
    }
    auto records = to_records(trainer.model().parameters());
    for (auto& r : optimizer_records(trainer.model().parameters(), trainer.optimizer())) records.push_back(std::move(r));
    write_checkpoint(last_path.string(), records);
    nlohmann::json st{{"epoch", epoch},
                      {"steps", result.steps},
                      {"best_epoch", result.best_epoch},
                      {"best_val_loss", stopper.best()},
                      {"bad_epochs", stopper.bad_epochs()},
                      {"curve", training_detail::curve_json(result.curve)},
                      {"config", config}};
    std::ofstream(state_path, std::ios::trunc) << st.dump(2) << '\n';
    write_curve_csv(config.checkpoint_dir / "curve.csv", result.curve);
    std::ofstream(config.checkpoint_dir / "curve.svg", std::ios::trunc) << curve_svg(result.curve);
    if (log) {
      *log << "epoch " << epoch << " train_loss " << format_number(result.curve.back().train_loss, 5) << " val_loss "
           << format_number(val_loss, 5) << " val_psnr " << format_number(val_psnr, 3) << '\n';
    }
    if (step_limit || (config.max_steps && result.steps >= config.max_steps)) {
      result.stop_reason = "max_steps";
      break;
    }
    if (stopper.should_stop()) {
      result.stop_reason = "patience";
      break;
    }
  }
  result.best_val_loss = stopper.best();
  return result;
}

/// Reconstructs the architecture from parameter shapes in a checkpoint.
inline ModelConfig model_config_from_checkpoint(const std::vector<CheckpointRecord>& records, std::size_t input_size) {
  auto find = [&](const std::string& name) -> const CheckpointRecord* {
    for (const auto& r : records) {
      if (r.name == name) return &r;
    }
    return nullptr;
  };
  const auto* e1 = find("enc1.conv.weight");
  const auto* e2 = find("enc2.conv.weight");
  const auto* d1 = find("dec1.conv.weight");
  if (!e1 || !e2 || !d1 || e1->tensor.rank() != 4 || e2->tensor.rank() != 4 || d1->tensor.rank() != 4) {
    throw DataError("checkpoint does not contain a hair removal network");
  }
  ModelConfig c;
  c.input_size = input_size;
  c.block1_filters = e1->tensor.dim(0);
  c.block2_filters = e2->tensor.dim(0);
  c.downsampling = find("enc1.down.weight") ? Downsampling::StridedConv : Downsampling::MaxPool;
  c.skip_connections = d1->tensor.dim(1) == 2 * c.block2_filters;
  return c;
}

inline HairRemovalNet<float> load_model(const std::filesystem::path& checkpoint, std::size_t input_size) {
  const auto records = read_checkpoint(checkpoint.string());
  HairRemovalNet<float> net(model_config_from_checkpoint(records, input_size), 0);
  load_records(records, net.parameters());
  return net;
}

enum class Baseline { None, Copy, Median };

struct InferResult {
  std::vector<std::string> written;
  std::vector<Omission> skipped;
};

/// Restores every PNG in input_dir into output_dir under the same filename.
/// Images are resized to the network's input size and back. Unreadable
/// images are skipped and listed.
inline InferResult infer_directory(const std::function<Image(const Image&)>& restore,
                                   const std::filesystem::path& input_dir, const std::filesystem::path& output_dir) {
  if (!std::filesystem::is_directory(input_dir)) throw DataError("not a directory: " + input_dir.string());
  std::filesystem::create_directories(output_dir);
  InferResult result;
  for (const auto& path : list_png(input_dir)) {
    Image img;
    try {
      img = read_png(path);
    } catch (const DataError& e) {
      result.skipped.push_back({path.filename().string(), e.what()});
      continue;
    }
    if (img.channels != 3) {
      result.skipped.push_back({path.filename().string(), "not an RGB image"});
      continue;
    }
    write_png(output_dir / path.filename(), quantized(restore(img)));
    result.written.push_back(path.filename().string());
  }
  return result;
}

inline std::function<Image(const Image&)> network_restorer(const HairRemovalNet<float>& net) {
  return [&net](const Image& img) {
    const std::size_t s = net.config().input_size;
    const Image in = img.width == s && img.height == s ? img : resize_bilinear(img, s, s);
    const auto out = net.forward(Var<float>::constant(to_tensor<float>({&in}))).value();
    Image restored = from_tensor(out, 0);
    if (img.width != s || img.height != s) restored = resize_bilinear(restored, img.width, img.height);
    return restored;
  };
}

inline std::function<Image(const Image&)> baseline_restorer(Baseline b) {
  if (b == Baseline::Median) return [](const Image& img) { return median_filter3(img); };
  return [](const Image& img) { return img; };
}

/// Copies one split's clean, corrupted and mask images into dir/{clean,corrupted,mask}.
inline std::size_t export_split(const std::filesystem::path& manifest, const std::string& split,
                                const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const auto base = manifest.parent_path();
  std::size_t count = 0;
  for (const char* sub : {"clean", "corrupted", "mask"}) fs::create_directories(dir / sub);
  for (const auto& r : read_manifest(manifest)) {
    if (r.split != split) continue;
    fs::copy_file(base / r.clean_path, dir / "clean" / fs::path(r.clean_path).filename(), fs::copy_options::overwrite_existing);
    fs::copy_file(base / r.corrupted_path, dir / "corrupted" / fs::path(r.corrupted_path).filename(),
                  fs::copy_options::overwrite_existing);
    fs::copy_file(base / r.mask_path, dir / "mask" / fs::path(r.mask_path).filename(), fs::copy_options::overwrite_existing);
    ++count;
  }
  return count;
}

struct MethodInput {
  std::string name;
  std::filesystem::path dir;
};

struct VerdictCell {
  std::string method_a;
  std::string method_b;
  Metric metric;
  Verdict verdict;
};

struct CompareResult {
  std::vector<std::string> methods;
  std::vector<MetricReport> reports;  // per method, restricted to common images
  std::vector<VerdictCell> cells;     // pair-major, metrics in fixed order
  std::vector<Omission> omissions;

  const VerdictCell& cell(const std::string& a, const std::string& b, Metric m) const {
    for (const auto& c : cells) {
      if (c.method_a == a && c.method_b == b && c.metric == m) return c;
    }
    throw ContractViolation("no verdict for " + a + " vs " + b + " on " + metric_name(m));
  }
};

/// Evaluates every method against ref_dir and compares all method pairs on
/// all nine metrics over the images every method has.
inline CompareResult compare_methods_dirs(const std::filesystem::path& ref_dir, const std::vector<MethodInput>& methods,
                                          std::size_t threads = default_thread_count(), double alpha = 0.05) {
  if (methods.size() < 2) throw ConfigError("compare needs at least two methods");
  std::set<std::string> names;
  for (const auto& m : methods) {
    if (!names.insert(m.name).second) throw ConfigError("duplicate method name " + m.name);
  }
  CompareResult out;
  std::vector<MetricReport> full;
  for (const auto& m : methods) {
    out.methods.push_back(m.name);
    full.push_back(evaluate_directory(ref_dir, m.dir, threads));
  }
  std::map<std::string, std::size_t> seen;
  for (const auto& r : full) {
    for (const auto& row : r.rows) ++seen[row.name];
  }
  std::set<std::string> common;
  for (const auto& [name, count] : seen) {
    if (count == methods.size()) {
      common.insert(name);
    } else {
      out.omissions.push_back({name, "not available for every method"});
    }
  }
  for (std::size_t k = 0; k < full.size(); ++k) {
    MetricReport r;
    for (const auto& row : full[k].rows) {
      if (common.count(row.name)) r.rows.push_back(row);
    }
    for (const auto& o : full[k].omissions) out.omissions.push_back({o.name, methods[k].name + ": " + o.reason});
    r.aggregate();
    out.reports.push_back(std::move(r));
  }
  if (common.size() < 3) throw DataError("compare needs at least 3 images common to all methods, found " + std::to_string(common.size()));
  for (std::size_t i = 0; i < methods.size(); ++i) {
    for (std::size_t j = i + 1; j < methods.size(); ++j) {
      for (Metric m : kAllMetrics) {
        PairedSampleSet s{methods[i].name, methods[j].name, metric_name(m),
                          out.reports[i].column(m), out.reports[j].column(m), lower_is_better(m)};
        out.cells.push_back({methods[i].name, methods[j].name, m, compare_pair(s, alpha)});
      }
    }
  }
  return out;
}

inline std::string format_p(double p) {
  std::ostringstream os;
  os << std::setprecision(4) << std::scientific << p;
  return os.str();
}

/// Rows are method pairs, columns the nine metrics, cells "p=...;verdict".
inline void write_verdict_csv(std::ostream& os, const CompareResult& r) {
  os << "method_a,method_b";
  for (const char* n : kMetricNames) os << ',' << n;
  os << '\n';
  for (std::size_t k = 0; k < r.cells.size(); k += kMetricCount) {
    os << r.cells[k].method_a << ',' << r.cells[k].method_b;
    for (std::size_t m = 0; m < kMetricCount; ++m) {
      const auto& v = r.cells[k + m].verdict;
      os << ",p=" << format_p(v.p) << ';' << classification_glyph(v.classification);
    }
    os << '\n';
  }
  for (const auto& o : r.omissions) os << "# omitted " << o.name << ": " << o.reason << '\n';
}

inline void write_verdict_text(std::ostream& os, const CompareResult& r) {
  std::size_t width = 8;
  for (const auto& c : r.cells) width = std::max(width, c.method_a.size() + c.method_b.size() + 4);
  os << std::left << std::setw(static_cast<int>(width)) << "A vs B";
  for (const char* n : kMetricNames) os << ' ' << std::setw(13) << n;
  os << '\n';
  for (std::size_t k = 0; k < r.cells.size(); k += kMetricCount) {
    os << std::setw(static_cast<int>(width)) << (r.cells[k].method_a + " vs " + r.cells[k].method_b);
    for (std::size_t m = 0; m < kMetricCount; ++m) {
      const auto& v = r.cells[k + m].verdict;
      std::string glyph = v.classification == Classification::Incomparable ? "=" : classification_glyph(v.classification);
      // Glyphs are multi-byte; pad by display width.
      const std::size_t shown = v.classification == Classification::Incomparable ? 1
                                : (v.classification == Classification::SignificantlyBetter ||
                                   v.classification == Classification::SignificantlyWorse)
                                    ? 2
                                    : 1;
      os << ' ' << glyph << std::string(13 - shown, ' ');
    }
    os << '\n';
  }
  os << "\n✓✓/✗✗: A significantly better/worse (p < 0.05); ✓/✗: A better/worse, not significant; =: incomparable\n";
  os << "tests: Shapiro-Wilk on paired differences selects paired t (p > 0.05) or Wilcoxon signed-rank; two-sided\n";
}

inline const std::vector<std::string>& ablation_toggles() {
  static const std::vector<std::string> t = {"no-skip", "pooling", "drop-l1fg", "drop-l1bg", "drop-l2comp", "drop-ssim", "drop-tv"};
  return t;
}

inline TrainConfig apply_toggle(TrainConfig c, const std::string& toggle) {
  if (toggle == "no-skip") c.model.skip_connections = false;
  else if (toggle == "pooling") c.model.downsampling = Downsampling::MaxPool;
  else if (toggle == "drop-l1fg") c.weights.alpha = 0.0;
  else if (toggle == "drop-l1bg") c.weights.beta = 0.0;
  else if (toggle == "drop-l2comp") c.weights.gamma = 0.0;
  else if (toggle == "drop-ssim") c.weights.delta = 0.0;
  else if (toggle == "drop-tv") c.weights.lambda = 0.0;
  else throw ConfigError("unknown ablation toggle '" + toggle + "'");
  return c;
}

struct AblationRow {
  std::string variant;
  std::size_t parameters = 0;
  TrainResult training;
  MetricReport report;
};

/// Trains the base configuration and one variant per toggle with the same
/// seed, restores the test split with each best checkpoint and evaluates it.
inline std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<std::string>& toggles,
                                       const std::filesystem::path& out_dir, std::ostream* log = nullptr,
                                       std::size_t threads = default_thread_count()) {
  namespace fs = std::filesystem;
  for (const auto& t : toggles) apply_toggle(base, t);  // validate before any training
  const fs::path test_dir = out_dir / "test";
  if (export_split(base.manifest, "test", test_dir) == 0) throw DataError("manifest has no test samples");
  std::vector<std::pair<std::string, TrainConfig>> variants{{"baseline", base}};
  for (const auto& t : toggles) variants.emplace_back(t, apply_toggle(base, t));
  std::vector<AblationRow> rows;
  for (auto& [name, cfg] : variants) {
    cfg.checkpoint_dir = out_dir / name;
    cfg.resume = false;
    if (log) *log << "== variant " << name << '\n';
    AblationRow row;
    row.variant = name;
    row.training = train(cfg, log);
    const auto net = load_model(row.training.best_checkpoint, cfg.model.input_size);
    row.parameters = net.parameter_count();
    infer_directory(network_restorer(net), test_dir / "corrupted", cfg.checkpoint_dir / "restored");
    row.report = evaluate_directory(test_dir / "clean", cfg.checkpoint_dir / "restored", threads);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "variant,parameters,epochs,best_epoch";
  for (const char* n : kMetricNames) os << ',' << n << "_mean," << n << "_std";
  os << '\n';
  for (const auto& r : rows) {
    os << r.variant << ',' << r.parameters << ',' << r.training.curve.size() << ',' << r.training.best_epoch;
    for (std::size_t k = 0; k < kMetricCount; ++k) {
      os << ',' << format_number(r.report.mean[k]) << ',' << format_number(r.report.stddev[k]);
    }
    os << '\n';
  }
}

}  // namespace hairbench
