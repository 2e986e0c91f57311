#pragma once

// Encoder-decoder hair-removal network.
//
//   enc1: conv3x3(3 -> b1), down(b1)           S   -> S/2
//   enc2: conv3x3(b1 -> b2), down(b2)          S/2 -> S/4
//   dec1: deconv3x3/2(b2 -> b2), [concat enc2 features], conv3x3(-> b1)
//   dec2: deconv3x3/2(b1 -> b1), [concat enc1 features], conv3x3(-> b1), conv3x3(b1 -> 3)
//
// "down" is a stride-2 3x3 convolution, or 2x2 max pooling in the pooling variant.
// Hidden layers use the configured activation; the output conv is clamped to [0, 1].

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hairbench/adam.hpp"
#include "hairbench/autograd.hpp"
#include "hairbench/error.hpp"
#include "hairbench/rng.hpp"
#include "hairbench/tensor.hpp"

namespace hairbench {

enum class Downsampling { StridedConv, MaxPool };
enum class HiddenActivation { Relu, Linear };
enum class OutputActivation { Clamp01, Linear };

struct ModelConfig {
  std::size_t input_size = 64;
  std::size_t block1_filters = 128;
  std::size_t block2_filters = 256;
  bool skip_connections = true;
  Downsampling downsampling = Downsampling::StridedConv;
  HiddenActivation hidden_activation = HiddenActivation::Relu;
  OutputActivation output_activation = OutputActivation::Clamp01;

  /// CPU-trainable preset: 64x64 inputs, 32/64 filters.
  static ModelConfig desk() {
    ModelConfig c;
    c.input_size = 64;
    c.block1_filters = 32;
    c.block2_filters = 64;
    return c;
  }

  /// Original scale: 512x512 inputs, 128/256 filters.
  static ModelConfig full() {
    ModelConfig c;
    c.input_size = 512;
    return c;
  }

  static ModelConfig preset(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "full") return full();
    throw ConfigError("unknown model preset '" + name + "' (expected desk or full)");
  }

  void validate() const {
    if (input_size < 16 || input_size % 4 != 0) {
      throw ConfigError("input_size must be >= 16 and divisible by 4, got " +
                        std::to_string(input_size));
    }
    if (block1_filters < 1 || block2_filters < 1) {
      throw ConfigError("filter counts must be >= 1");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

NLOHMANN_JSON_SERIALIZE_ENUM(Downsampling, {{Downsampling::StridedConv, "strided-conv"},
                                            {Downsampling::MaxPool, "max-pool"}})
NLOHMANN_JSON_SERIALIZE_ENUM(HiddenActivation, {{HiddenActivation::Relu, "relu"},
                                                {HiddenActivation::Linear, "linear"}})
NLOHMANN_JSON_SERIALIZE_ENUM(OutputActivation, {{OutputActivation::Clamp01, "clamped-linear"},
                                                {OutputActivation::Linear, "linear"}})

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"input_size", c.input_size},
                     {"base_filters", {c.block1_filters, c.block2_filters}},
                     {"skip_connections", c.skip_connections},
                     {"downsampling", c.downsampling},
                     {"hidden_activation", c.hidden_activation},
                     {"output_activation", c.output_activation}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  c.input_size = j.value("input_size", c.input_size);
  if (j.contains("base_filters")) {
    const auto& f = j.at("base_filters");
    if (!f.is_array() || f.size() != 2) throw ConfigError("base_filters must be [block1, block2]");
    c.block1_filters = f[0].get<std::size_t>();
    c.block2_filters = f[1].get<std::size_t>();
  }
  c.skip_connections = j.value("skip_connections", c.skip_connections);
  c.downsampling = j.value("downsampling", c.downsampling);
  c.hidden_activation = j.value("hidden_activation", c.hidden_activation);
  c.output_activation = j.value("output_activation", c.output_activation);
}

/// One entry of a forward shape trace: layer label, channels, spatial size.
struct LayerShape {
  std::string label;
  std::size_t channels;
  std::size_t size;
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

template <typename T>
class HairRemovalNet {
 public:
  /// Deterministic He-uniform initialization (fan-in scaled), zero biases.
  HairRemovalNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const std::size_t b1 = config_.block1_filters, b2 = config_.block2_filters;
    const bool strided = config_.downsampling == Downsampling::StridedConv;
    add_conv(rng, "enc1.conv", b1, 3);
    if (strided) add_conv(rng, "enc1.down", b1, b1);
    add_conv(rng, "enc2.conv", b2, b1);
    if (strided) add_conv(rng, "enc2.down", b2, b2);
    add_deconv(rng, "dec1.up", b2, b2);
    add_conv(rng, "dec1.conv", b1, config_.skip_connections ? 2 * b2 : b2);
    add_deconv(rng, "dec2.up", b1, b1);
    add_conv(rng, "dec2.conv", b1, config_.skip_connections ? 2 * b1 : b1);
    add_conv(rng, "out.conv", 3, b1);
  }

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.value().size();
    return n;
  }

  const Var<T>& parameter(const std::string& name) const {
    for (const auto& p : params_) {
      if (p.name == name) return p.var;
    }
    throw ContractViolation("no parameter named " + name);
  }

  /// batch: [B,3,S,S] with S == config.input_size.
  Var<T> forward(const Var<T>& batch) const { return run(batch, nullptr); }

  std::vector<LayerShape> shape_trace(std::size_t batch = 1) const {
    std::vector<LayerShape> trace;
    const std::size_t s = config_.input_size;
    run(Var<T>::constant(Tensor<T>({batch, 3, s, s})), &trace);
    return trace;
  }

 private:
  void add_conv(Rng& rng, const std::string& name, std::size_t out_c, std::size_t in_c) {
    add_kernel(rng, name, {out_c, in_c, 3, 3}, static_cast<double>(in_c * 9), out_c);
  }

  // Each transposed-conv output receives about in_c*9/4 contributions at stride 2.
  void add_deconv(Rng& rng, const std::string& name, std::size_t out_c, std::size_t in_c) {
    add_kernel(rng, name, {in_c, out_c, 3, 3}, static_cast<double>(in_c * 9) / 4.0, out_c);
  }

  void add_kernel(Rng& rng, const std::string& name, Shape shape, double fan_in,
                  std::size_t bias_len) {
    const double bound = std::sqrt(6.0 / fan_in);
    Tensor<T> w(std::move(shape));
    for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    params_.push_back({name + ".weight", Var<T>::parameter(std::move(w))});
    params_.push_back({name + ".bias", Var<T>::parameter(Tensor<T>({bias_len}))});
  }

  const Var<T>& w(const std::string& layer) const { return parameter(layer + ".weight"); }
  const Var<T>& b(const std::string& layer) const { return parameter(layer + ".bias"); }

  Var<T> hidden(const Var<T>& x) const {
    return config_.hidden_activation == HiddenActivation::Relu ? relu(x) : x;
  }

  Var<T> conv(const Var<T>& x, const std::string& layer, std::size_t stride = 1) const {
    return conv2d(x, w(layer), b(layer), stride);
  }

  Var<T> down(const Var<T>& x, const std::string& block) const {
    if (config_.downsampling == Downsampling::MaxPool) return max_pool2(x);
    return hidden(conv(x, block + ".down", 2));
  }

  Var<T> run(const Var<T>& x, std::vector<LayerShape>* trace) const {
    const auto& s = x.shape();
    if (s.size() != 4 || s[1] != 3 || s[2] != config_.input_size || s[3] != config_.input_size) {
      throw ContractViolation("forward: expected [B,3," + std::to_string(config_.input_size) + "," +
                              std::to_string(config_.input_size) + "], got " + to_string(s));
    }
    auto note = [&](const char* label, const Var<T>& v) {
      if (trace) trace->push_back({label, v.shape()[1], v.shape()[2]});
    };
    note("input", x);
    const Var<T> e1 = hidden(conv(x, "enc1.conv"));
    note("enc1.conv", e1);
    const Var<T> d1 = down(e1, "enc1");
    note("enc1.down", d1);
    const Var<T> e2 = hidden(conv(d1, "enc2.conv"));
    note("enc2.conv", e2);
    const Var<T> d2 = down(e2, "enc2");
    note("enc2.down", d2);

    Var<T> u1 = hidden(deconv2d(d2, w("dec1.up"), b("dec1.up")));
    note("dec1.up", u1);
    if (config_.skip_connections) {
      u1 = concat_channels(u1, e2);
      note("dec1.concat", u1);
    }
    const Var<T> h1 = hidden(conv(u1, "dec1.conv"));
    note("dec1.conv", h1);

    Var<T> u2 = hidden(deconv2d(h1, w("dec2.up"), b("dec2.up")));
    note("dec2.up", u2);
    if (config_.skip_connections) {
      u2 = concat_channels(u2, e1);
      note("dec2.concat", u2);
    }
    const Var<T> h2 = hidden(conv(u2, "dec2.conv"));
    note("dec2.conv", h2);

    Var<T> out = conv(h2, "out.conv");
    if (config_.output_activation == OutputActivation::Clamp01) out = clamp01(out);
    note("output", out);
    return out;
  }

  ModelConfig config_;
  ParameterSet<T> params_;
};

}  // namespace hairbench
