#ifndef VSR_CHECKPOINT_HPP
#define VSR_CHECKPOINT_HPP

// Files: checkpoints, JSON documents and JSONL datasets.
//
// Checkpoint layout (little-endian):
//   "VSRCKPT\n"              8 bytes
//   header length            uint32
//   header                   JSON: format_version, architecture, count, label
//   parameters               count x float64
//   checksum                 uint64 FNV-1a of every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsr/errors.hpp"
#include "vsr/policy.hpp"
#include "vsr/rng.hpp"
#include "vsr/scene.hpp"

namespace vsr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

inline constexpr std::string_view kCheckpointMagic = "VSRCKPT\n";
inline constexpr int kCheckpointVersion = 1;

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

/// Writes through a sibling temporary and renames it into place.
inline void write_file(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  write_file(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const fs::path& path) {
  const auto text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SerializationError(path.string() + ": " + e.what());
  }
}

template <class T, class ToJson>
void write_jsonl(const fs::path& path, const std::vector<T>& items, ToJson to) {
  std::string out;
  for (const auto& it : items) out += to(it).dump() + "\n";
  write_file(path, out);
}

template <class Parse>
auto read_jsonl(const fs::path& path, Parse parse) {
  using T = decltype(parse(std::declval<const nlohmann::json&>()));
  std::vector<T> out;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw SerializationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw SerializationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void save_dataset(const fs::path& path, const std::vector<MultimodalSample>& d) {
  write_jsonl(path, d, [](const MultimodalSample& s) { return to_json(s); });
}

inline std::vector<MultimodalSample> load_dataset(const fs::path& path) {
  return read_jsonl(path, [](const nlohmann::json& j) { return sample_from_json(j); });
}

// ---------------------------------------------------------------------------
// Checkpoints

inline std::string encode_checkpoint(const PolicyParameters& p, const std::string& label = {}) {
  p.validate();
  const nlohmann::json header = {{"format_version", kCheckpointVersion},
                                 {"architecture", to_json(p.arch)},
                                 {"count", p.theta.size()},
                                 {"label", label}};
  const std::string h = header.dump();
  std::string out(kCheckpointMagic);
  const auto hlen = static_cast<std::uint32_t>(h.size());
  out.append(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out += h;
  out.append(reinterpret_cast<const char*>(p.theta.data()), p.theta.size() * sizeof(double));
  const std::uint64_t sum = fnv1a64(out);
  out.append(reinterpret_cast<const char*>(&sum), sizeof sum);
  return out;
}

inline PolicyParameters decode_checkpoint(std::string_view bytes, const std::string& where = "checkpoint") {
  if (bytes.size() < kCheckpointMagic.size() + 4 + 8 || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    if (bytes.substr(0, std::min(bytes.size(), kCheckpointMagic.size())) ==
        kCheckpointMagic.substr(0, std::min(bytes.size(), kCheckpointMagic.size())))
      throw ChecksumError(where + ": truncated checkpoint");
    throw CheckpointError(where + ": not a checkpoint file");
  }
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (fnv1a64(bytes.substr(0, bytes.size() - 8)) != stored)
    throw ChecksumError(where + ": checksum mismatch (file is corrupt or truncated)");
  std::uint32_t hlen = 0;
  std::memcpy(&hlen, bytes.data() + kCheckpointMagic.size(), 4);
  const std::size_t body = kCheckpointMagic.size() + 4;
  if (body + hlen + 8 > bytes.size()) throw ChecksumError(where + ": header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(body, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(where + ": unreadable header: " + e.what());
  }
  const int version = header.value("format_version", -1);
  if (version != kCheckpointVersion)
    throw VersionMismatch(where + ": checkpoint format version " + std::to_string(version) +
                          ", this build reads version " + std::to_string(kCheckpointVersion));
  PolicyParameters p;
  p.arch = architecture_from_json(header.at("architecture"));
  const auto count = header.at("count").get<std::size_t>();
  if (body + hlen + count * sizeof(double) + 8 != bytes.size())
    throw CheckpointError(where + ": payload size disagrees with header");
  p.theta.resize(count);
  std::memcpy(p.theta.data(), bytes.data() + body + hlen, count * sizeof(double));
  p.validate();
  return p;
}

inline void save_checkpoint(const fs::path& path, const PolicyParameters& p, const std::string& label = {}) {
  write_file(path, encode_checkpoint(p, label));
}

inline PolicyParameters load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace vsr

#endif  // VSR_CHECKPOINT_HPP
