#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wavediff/errors.hpp"
#include "wavediff/grid_tensor.hpp"

namespace wavediff {

// ============================================================================
// WDC1: a named-tensor container file.
//
//   bytes 0..3  magic "WDC1"
//   u32         format version (1)
//   u64         header length in bytes, then that many bytes of UTF-8 JSON
//   u32         entry count, then per entry:
//                 u32 name length, name bytes, u64 record length, WDT1 record
//
// Checkpoints, subband sets, and condition bundles all reuse this layout so
// every artifact stays inspectable with one reader.
// ============================================================================

struct TensorBundle {
  nlohmann::json header;
  std::vector<std::pair<std::string, GridTensor>> entries;

  [[nodiscard]] const GridTensor& get(const std::string& name) const {
    for (const auto& [key, tensor] : entries)
      if (key == name) return tensor;
    throw IoError("bundle: missing tensor '" + name + "'");
  }

  [[nodiscard]] bool has(const std::string& name) const {
    for (const auto& [key, tensor] : entries)
      if (key == name) return true;
    return false;
  }

  void put(std::string name, GridTensor t) {
    entries.emplace_back(std::move(name), std::move(t));
  }
};

inline void write_bundle(std::ostream& os, const TensorBundle& b) {
  os.write("WDC1", 4);
  detail::write_le<std::uint32_t>(os, 1);
  const std::string header = b.header.is_null() ? "{}" : b.header.dump();
  detail::write_le<std::uint64_t>(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(b.entries.size()));
  for (const auto& [name, tensor] : b.entries) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    std::ostringstream record;
    write_wdt1(record, tensor);
    const std::string bytes = record.str();
    detail::write_le<std::uint64_t>(os, bytes.size());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!os) throw IoError("bundle: write failed");
}

inline TensorBundle read_bundle(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "WDC1", 4) != 0) throw IoError("bundle: bad magic");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != 1) throw IoError("bundle: unsupported version");
  const auto header_len = detail::read_le<std::uint64_t>(is);
  std::string header(header_len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw IoError("bundle: truncated header");
  TensorBundle b;
  try {
    b.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bundle: malformed header JSON: ") + e.what());
  }
  const auto count = detail::read_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_le<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto record_len = detail::read_le<std::uint64_t>(is);
    std::string record(record_len, '\0');
    is.read(record.data(), static_cast<std::streamsize>(record_len));
    if (!is) throw IoError("bundle: truncated tensor record");
    std::istringstream rs(record);
    b.put(std::move(name), read_wdt1(rs));
  }
  return b;
}

inline void save_bundle(const std::filesystem::path& path, const TensorBundle& b) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path.string());
  write_bundle(os, b);
}

inline TensorBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path.string());
  return read_bundle(is);
}

}  // namespace wavediff
