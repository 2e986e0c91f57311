#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace hairbench;
using namespace hbtest;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
  ModelConfig c = ModelConfig::desk();
  c.input_size = 16;
  c.block1_filters = 4;
  c.block2_filters = 6;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// A 12-image 16x16 dataset shared by the tests below.
const fs::path& dataset() {
  static const fs::path manifest = [] {
    const auto clean = scratch_dir("train_clean");
    for (int i = 0; i < 12; ++i) write_png(clean / ("s" + std::to_string(i) + ".png"), synthesize_skin(16, 40 + i));
    const auto out = scratch_dir("train_ds");
    return build_dataset(clean, out, Recipe{}, 0.75, 5).manifest_path;
  }();
  return manifest;
}

TrainConfig tiny_config(const std::string& dir) {
  TrainConfig c;
  c.model = tiny_model();
  c.lr = 1e-3;
  c.batch_size = 3;
  c.max_epochs = 3;
  c.patience = 5;
  c.seed = 11;
  c.manifest = dataset();
  c.checkpoint_dir = scratch_dir(dir);
  return c;
}

fs::path write_dir(const std::string& name, const std::vector<Image>& images) {
  const auto d = scratch_dir(name);
  for (std::size_t i = 0; i < images.size(); ++i) write_png(d / ("im" + std::to_string(i) + ".png"), images[i]);
  return d;
}

}  // namespace

TEST(Training, EarlyStoppingCounter) {
  EarlyStopping s(2);
  EXPECT_TRUE(s.update(1.0));
  EXPECT_FALSE(s.update(1.0));
  EXPECT_FALSE(s.should_stop());
  EXPECT_FALSE(s.update(1.5));
  EXPECT_TRUE(s.should_stop());
  EXPECT_TRUE(s.update(0.5));
  EXPECT_EQ(s.bad_epochs(), 0u);
  EXPECT_EQ(s.best(), 0.5);
}

TEST(Training, StepReducesLossOnFixedBatch) {
  std::vector<PairedSample> samples;
  for (const auto& r : read_manifest(dataset())) {
    if (r.provenance == Provenance::Procedural) samples.push_back(load_sample(r, dataset().parent_path()));
    if (samples.size() == 2) break;
  }
  Trainer<float> t(tiny_model(), LossWeights{}, 1e-3, 3);
  const auto b = make_batch<float>(samples, {0, 1});
  const double before = t.evaluate(b).loss;
  for (int i = 0; i < 40; ++i) t.step(b);
  EXPECT_LT(t.evaluate(b).loss, before);
}

TEST(Training, NonFiniteLossIsANumericalFault) {
  Trainer<float> t(tiny_model(), LossWeights{}, 1e-3, 3);
  Batch<float> b{Tensor<float>({1, 3, 16, 16}), Tensor<float>({1, 3, 16, 16}), Tensor<float>({1, 1, 16, 16})};
  b.target[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(t.evaluate(b), NumericalFault);
  EXPECT_THROW(t.step(b), NumericalFault);
}

TEST(Training, PatienceOneStopsAtSecondEpochWithoutProgress) {
  auto c = tiny_config("patience");
  c.lr = 1e-30;  // updates vanish in float, so validation loss never improves
  c.patience = 1;
  c.max_epochs = 10;
  const auto r = train(c);
  ASSERT_EQ(r.curve.size(), 2u);
  EXPECT_EQ(r.stop_reason, "patience");
  EXPECT_EQ(r.best_epoch, 1u);
}

TEST(Training, WritesArtifactsAndIsDeterministic) {
  auto a = tiny_config("det_a"), b = tiny_config("det_b");
  const auto ra = train(a), rb = train(b);
  for (const char* f : {"best.ckpt", "last.ckpt", "state.json", "curve.csv", "curve.svg", "steps.csv"}) {
    EXPECT_TRUE(fs::exists(a.checkpoint_dir / f)) << f;
  }
  EXPECT_EQ(slurp(a.checkpoint_dir / "best.ckpt"), slurp(b.checkpoint_dir / "best.ckpt"));
  EXPECT_EQ(slurp(a.checkpoint_dir / "curve.csv"), slurp(b.checkpoint_dir / "curve.csv"));
  ASSERT_EQ(ra.curve.size(), 3u);
  // 9 train images: 1 held out, 8 left, batches of 3.
  EXPECT_EQ(ra.steps, 9u);
  EXPECT_EQ(ra.stop_reason, "max_epochs");
}

TEST(Training, ResumeContinuesWhereItStopped) {
  auto full = tiny_config("resume_full");
  full.max_epochs = 4;
  const auto whole = train(full);

  auto part = tiny_config("resume_part");
  part.max_epochs = 2;
  train(part);
  part.max_epochs = 4;
  part.resume = true;
  std::ostringstream log;
  const auto resumed = train(part, &log);
  EXPECT_NE(log.str().find("resuming at epoch 3"), std::string::npos);
  ASSERT_EQ(resumed.curve.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(resumed.curve[k].epoch, k + 1);
    EXPECT_EQ(resumed.curve[k].val_loss, whole.curve[k].val_loss) << "epoch " << k + 1;
  }
  EXPECT_EQ(resumed.steps, whole.steps);
  EXPECT_EQ(slurp(part.checkpoint_dir / "best.ckpt"), slurp(full.checkpoint_dir / "best.ckpt"));
}

TEST(Training, MaxStepsStopsEarly) {
  auto c = tiny_config("steps");
  c.max_steps = 4;
  c.max_epochs = 50;
  const auto r = train(c);
  EXPECT_EQ(r.steps, 4u);
  EXPECT_EQ(r.stop_reason, "max_steps");
  EXPECT_EQ(r.curve.size(), 2u);
}

TEST(Training, ConfigValidationAndMerge) {
  TrainConfig c;
  merge_train_config(nlohmann::json::parse(R"({"lr": 0.01, "model": {"base_filters": [8, 16]},
                                              "loss_weights": {"alpha": 0}})"),
                     c);
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_EQ(c.model.block1_filters, 8u);
  EXPECT_EQ(c.model.input_size, 64u);
  EXPECT_EQ(c.weights.alpha, 0.0);
  EXPECT_EQ(c.weights.beta, LossWeights{}.beta);
  EXPECT_THROW(merge_train_config(nlohmann::json::parse(R"({"lr": "fast"})"), c), ConfigError);
  EXPECT_THROW(merge_train_config(nlohmann::json::parse(R"({"preset": "gpu"})"), c), ConfigError);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  auto missing = tiny_config("missing");
  missing.manifest = missing.checkpoint_dir / "nope.jsonl";
  EXPECT_THROW(train(missing), DataError);
}

TEST(Training, CheckpointArchitectureInference) {
  for (int variant = 0; variant < 3; ++variant) {
    ModelConfig m = tiny_model();
    if (variant == 1) m.skip_connections = false;
    if (variant == 2) m.downsampling = Downsampling::MaxPool;
    const HairRemovalNet<float> net(m, 2);
    const auto path = scratch_dir("arch") / "net.ckpt";
    write_checkpoint(path.string(), to_records(net.parameters()));
    const auto loaded = load_model(path, 16);
    EXPECT_EQ(loaded.config(), m);
    Rng rng(1);
    const auto x = Var<float>::constant(random_tensor<float>(rng, {1, 3, 16, 16}, 0.0, 1.0));
    EXPECT_EQ(max_abs_diff(net.forward(x).value().cast<double>(), loaded.forward(x).value().cast<double>()), 0.0);
  }
}

TEST(Training, InferWritesOneOutputPerReadableInput) {
  Rng rng(3);
  const auto in = write_dir("infer_in", {random_image(rng, 16, 16), random_image(rng, 24, 20), random_image(rng, 16, 16)});
  std::ofstream(in / "junk.png") << "garbage";
  const HairRemovalNet<float> net(tiny_model(), 1);
  const auto out = scratch_dir("infer_out");
  const auto r = infer_directory(network_restorer(net), in, out);
  EXPECT_EQ(r.written.size(), 3u);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].name, "junk.png");
  const Image resized = read_png(out / "im1.png");
  EXPECT_EQ(resized.width, 24u);
  EXPECT_EQ(resized.height, 20u);

  const auto copy = scratch_dir("infer_copy");
  infer_directory(baseline_restorer(Baseline::Copy), in, copy);
  EXPECT_EQ(read_png(copy / "im0.png"), read_png(in / "im0.png"));
  EXPECT_THROW(infer_directory(baseline_restorer(Baseline::Copy), in / "none", copy), DataError);
}

TEST(Training, CompareProducesAllPairsAndSensibleVerdicts) {
  std::vector<Image> clean, light, heavy;
  for (int i = 0; i < 8; ++i) {
    clean.push_back(synthesize_skin(32, 70 + static_cast<std::uint64_t>(i)));
    light.push_back(add_noise(clean.back(), 2.0, 100 + static_cast<std::uint64_t>(i)));
    heavy.push_back(add_noise(clean.back(), 20.0, 200 + static_cast<std::uint64_t>(i)));
  }
  const auto ref = write_dir("cmp_ref", clean);
  const auto l1 = write_dir("cmp_light", light), l2 = write_dir("cmp_light2", light);
  const auto h = write_dir("cmp_heavy", heavy);
  write_png(h / "extra.png", clean[0]);
  const auto r = compare_methods_dirs(ref, {{"light", l1}, {"twin", l2}, {"heavy", h}}, 2);
  EXPECT_EQ(r.cells.size(), 3u * kMetricCount);
  EXPECT_EQ(r.reports[0].rows.size(), 8u);
  EXPECT_FALSE(r.omissions.empty());
  for (Metric m : kAllMetrics) {
    EXPECT_EQ(r.cell("light", "twin", m).verdict.classification, Classification::Incomparable) << metric_name(m);
    EXPECT_EQ(r.cell("light", "heavy", m).verdict.classification, Classification::SignificantlyBetter)
        << metric_name(m);
  }
  std::ostringstream csv, txt;
  write_verdict_csv(csv, r);
  write_verdict_text(txt, r);
  EXPECT_NE(csv.str().find("light,heavy,p="), std::string::npos);
  EXPECT_NE(csv.str().find(";✓✓"), std::string::npos);
  EXPECT_NE(txt.str().find("light vs heavy"), std::string::npos);

  EXPECT_THROW(compare_methods_dirs(ref, {{"light", l1}}), ConfigError);
  EXPECT_THROW(compare_methods_dirs(ref, {{"a", l1}, {"a", h}}), ConfigError);
  const auto two = write_dir("cmp_two", {light[0], light[1]});
  EXPECT_THROW(compare_methods_dirs(ref, {{"light", l1}, {"two", two}}), DataError);
}

TEST(Training, AblationTrainsEachVariant) {
  auto base = tiny_config("ablate_base");
  base.max_epochs = 1;
  const auto out = scratch_dir("ablate");
  std::ostringstream log;
  const auto rows = ablate(base, {"no-skip", "drop-l1fg"}, out, &log, 1);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].variant, "baseline");
  EXPECT_LT(rows[1].parameters, rows[0].parameters);
  EXPECT_EQ(rows[2].parameters, rows[0].parameters);
  for (const auto& r : rows) {
    EXPECT_EQ(r.report.rows.size(), 3u);
    EXPECT_TRUE(fs::exists(out / r.variant / "restored"));
  }
  std::ostringstream csv;
  write_ablation_csv(csv, rows);
  EXPECT_EQ(csv.str().rfind("variant,parameters,epochs,best_epoch,MSE_mean,MSE_std", 0), 0u);
  EXPECT_THROW(ablate(base, {"drop-everything"}, out), ConfigError);
  for (const auto& t : ablation_toggles()) EXPECT_NO_THROW(apply_toggle(base, t));
}
