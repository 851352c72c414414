#include "dlfccm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dlfccm {

namespace {

constexpr char kMagic[8] = {'D', 'L', 'F', 'C', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw CheckpointError("checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(path.string() + ": cannot open for writing");
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string header = ckpt.header.dump();
  put_le<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put_le<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, 2);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(t.rows));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(t.cols));
    for (float f : t.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  if (!out) throw CheckpointError(path.string() + ": write failed");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path.string() + ": cannot open");
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(path.string() + ": not a checkpoint file");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw CheckpointError(path.string() + ": unsupported format version " + std::to_string(version));
  Checkpoint ckpt;
  const auto header_len = get_le<std::uint64_t>(in);
  if (header_len > (1ULL << 32)) throw CheckpointError(path.string() + ": corrupt header length");
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) throw CheckpointError("checkpoint truncated");
  try {
    ckpt.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": corrupt header: " + e.what());
  }
  const auto n = get_le<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto name_len = get_le<std::uint32_t>(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw CheckpointError("checkpoint truncated");
    if (get_le<std::uint32_t>(in) != 2) throw CheckpointError("tensor '" + name + "': unsupported rank");
    TensorRecord t;
    t.rows = static_cast<std::int64_t>(get_le<std::uint64_t>(in));
    t.cols = static_cast<std::int64_t>(get_le<std::uint64_t>(in));
    if (t.rows < 0 || t.cols < 0 || t.rows * t.cols > (1LL << 31))
      throw CheckpointError("tensor '" + name + "': corrupt shape");
    t.data.resize(static_cast<std::size_t>(t.rows * t.cols));
    for (auto& f : t.data) f = std::bit_cast<float>(get_le<std::uint32_t>(in));
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace dlfccm
