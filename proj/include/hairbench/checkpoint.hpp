#pragma once

// Parameter checkpoint files.
//
// Layout (all integers little-endian uint32):
//   "HBCKPT1"                      7-byte magic
//   record_count
//   record_count x {
//     name_length, name bytes
//     rank, rank x dim
//     product(dims) x float32 (little-endian IEEE-754)
//   }

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "hairbench/adam.hpp"
#include "hairbench/error.hpp"
#include "hairbench/tensor.hpp"

namespace hairbench {

inline constexpr std::string_view kCheckpointMagic = "HBCKPT1";

struct CheckpointRecord {
  std::string name;
  Tensor<float> tensor;
};

namespace checkpoint_detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b.data(), 4);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& path) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw DataError("truncated checkpoint: " + path);
  }
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

}  // namespace checkpoint_detail

inline void write_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records) {
  using namespace checkpoint_detail;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  put_u32(os, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    put_u32(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u32(os, static_cast<std::uint32_t>(r.tensor.rank()));
    for (std::size_t d : r.tensor.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    for (float v : r.tensor.data()) put_u32(os, std::bit_cast<std::uint32_t>(v));
  }
  if (!os) throw DataError("failed writing checkpoint: " + path);
}

inline std::vector<CheckpointRecord> read_checkpoint(const std::string& path) {
  using namespace checkpoint_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  std::string magic(kCheckpointMagic.size(), '\0');
  if (!is.read(magic.data(), static_cast<std::streamsize>(magic.size())) ||
      magic != kCheckpointMagic) {
    throw DataError("not a checkpoint file (bad magic): " + path);
  }
  const std::uint32_t count = get_u32(is, path);
  std::vector<CheckpointRecord> records;
  records.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    CheckpointRecord rec;
    rec.name.resize(get_u32(is, path));
    if (!is.read(rec.name.data(), static_cast<std::streamsize>(rec.name.size()))) {
      throw DataError("truncated checkpoint: " + path);
    }
    Shape shape(get_u32(is, path));
    for (auto& d : shape) d = get_u32(is, path);
    std::vector<float> data(shape_size(shape));
    for (auto& v : data) v = std::bit_cast<float>(get_u32(is, path));
    rec.tensor = Tensor<float>(std::move(shape), std::move(data));
    records.push_back(std::move(rec));
  }
  return records;
}

template <typename T>
std::vector<CheckpointRecord> to_records(const ParameterSet<T>& params) {
  std::vector<CheckpointRecord> out;
  for (const auto& p : params) out.push_back({p.name, p.var.value().template cast<float>()});
  return out;
}

/// Copies records into matching parameters by name. Every parameter must be present.
template <typename T>
void load_records(const std::vector<CheckpointRecord>& records, ParameterSet<T>& params) {
  for (auto& p : params) {
    const CheckpointRecord* found = nullptr;
    for (const auto& r : records) {
      if (r.name == p.name) found = &r;
    }
    if (!found) throw DataError("checkpoint lacks parameter " + p.name);
    if (found->tensor.shape() != p.var.shape()) {
      throw DataError("checkpoint shape " + to_string(found->tensor.shape()) + " for " + p.name +
                      " does not match model shape " + to_string(p.var.shape()));
    }
    p.var.value() = found->tensor.template cast<T>();
  }
}

/// Adam moments are stored as "<name>.m" / "<name>.v" records plus a scalar "step".
template <typename T>
std::vector<CheckpointRecord> optimizer_records(const ParameterSet<T>& params,
                                                const AdamState<T>& state) {
  std::vector<CheckpointRecord> out;
  out.push_back({"step", Tensor<float>::scalar(static_cast<float>(state.step))});
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({params[i].name + ".m", state.first_moment[i].template cast<float>()});
    out.push_back({params[i].name + ".v", state.second_moment[i].template cast<float>()});
  }
  return out;
}

template <typename T>
void load_optimizer_records(const std::vector<CheckpointRecord>& records,
                            const ParameterSet<T>& params, AdamState<T>& state) {
  state = AdamState<T>(params, state.hyper);
  for (const auto& r : records) {
    if (r.name == "step") state.step = static_cast<std::int64_t>(r.tensor.item());
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (r.name == params[i].name + ".m") state.first_moment[i] = r.tensor.template cast<T>();
      if (r.name == params[i].name + ".v") state.second_moment[i] = r.tensor.template cast<T>();
    }
  }
}

}  // namespace hairbench
