#pragma once

#include "dlfccm/core.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dlfccm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Row-major float32 tensor as stored on disk.
struct TensorRecord {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<float> data;
};

/// Versioned container: magic, format version, JSON header (config echo), named tensors.
///
/// Layout (all integers little-endian):
///   "DLFCCKPT" | u32 version | u64 header_len | header bytes (UTF-8 JSON)
///   u64 n_tensors | n x { u32 name_len | name | u32 ndims (=2) | u64 rows | u64 cols | f32[rows*cols] }
struct Checkpoint {
  nlohmann::json header;
  std::map<std::string, TensorRecord> tensors;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

template <typename Scalar>
void store_params(Checkpoint& ckpt, const ParamList<Scalar>& params) {
  for (const auto* p : params) {
    TensorRecord t;
    t.rows = p->value.rows();
    t.cols = p->value.cols();
    t.data.resize(static_cast<std::size_t>(p->value.size()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(p->value.data()[i]);
    ckpt.tensors[p->name] = std::move(t);
  }
}

/// Copies every tensor named in `params` from the checkpoint; a missing name or
/// shape disagreement throws. Tensors not requested are ignored.
template <typename Scalar>
void load_params(const Checkpoint& ckpt, const ParamList<Scalar>& params) {
  for (auto* p : params) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end()) throw CheckpointError("checkpoint is missing tensor '" + p->name + "'");
    const auto& t = it->second;
    if (t.rows != p->value.rows() || t.cols != p->value.cols())
      throw CheckpointError("tensor '" + p->name + "' has shape " + std::to_string(t.rows) + "x" +
                            std::to_string(t.cols) + ", expected " + std::to_string(p->value.rows()) + "x" +
                            std::to_string(p->value.cols()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<Scalar>(t.data[static_cast<std::size_t>(i)]);
  }
}

}  // namespace dlfccm
