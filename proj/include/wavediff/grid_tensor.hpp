#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "wavediff/errors.hpp"

namespace wavediff {

// ============================================================================
// GridTensor: dense row-major f64 tensor over a physical grid.
//
// Each axis carries a role (time / space / channel) and a physical extent.
// Transforms that reduce or expand axes preserve role tags so downstream
// stages can locate the time axis without positional conventions.
// ============================================================================

enum class AxisRole : std::uint8_t { kTime = 0, kSpace = 1, kChannel = 2 };

inline const char* axis_role_name(AxisRole r) {
  switch (r) {
    case AxisRole::kTime: return "time";
    case AxisRole::kSpace: return "space";
    case AxisRole::kChannel: return "channel";
  }
  return "?";
}

class GridTensor {
 public:
  GridTensor() = default;

  GridTensor(std::vector<std::size_t> dims, std::vector<AxisRole> roles,
             std::vector<double> extent = {})
      : dims_(std::move(dims)), roles_(std::move(roles)), extent_(std::move(extent)) {
    require(!dims_.empty(), "GridTensor: rank must be >= 1");
    require(roles_.size() == dims_.size(), "GridTensor: one role per axis required");
    for (std::size_t d : dims_) require(d >= 1, "GridTensor: axis lengths must be >= 1");
    if (extent_.empty()) extent_.assign(dims_.size(), 1.0);
    require(extent_.size() == dims_.size(), "GridTensor: one extent per axis required");
    data_.assign(element_count(), 0.0);
  }

  [[nodiscard]] std::size_t rank() const { return dims_.size(); }
  [[nodiscard]] const std::vector<std::size_t>& dims() const { return dims_; }
  [[nodiscard]] std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  [[nodiscard]] const std::vector<AxisRole>& roles() const { return roles_; }
  [[nodiscard]] AxisRole role(std::size_t axis) const { return roles_.at(axis); }
  [[nodiscard]] const std::vector<double>& extent() const { return extent_; }

  [[nodiscard]] std::size_t element_count() const {
    return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1},
                           std::multiplies<>());
  }

  [[nodiscard]] std::vector<double>& data() { return data_; }
  [[nodiscard]] const std::vector<double>& data() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Row-major strides (last axis contiguous).
  [[nodiscard]] std::vector<std::size_t> strides() const {
    std::vector<std::size_t> s(dims_.size());
    std::size_t acc = 1;
    for (std::size_t a = dims_.size(); a-- > 0;) {
      s[a] = acc;
      acc *= dims_[a];
    }
    return s;
  }

  [[nodiscard]] std::size_t flat_index(const std::vector<std::size_t>& idx) const {
    require(idx.size() == dims_.size(), "flat_index: rank mismatch");
    std::size_t flat = 0;
    for (std::size_t a = 0; a < dims_.size(); ++a) {
      require(idx[a] < dims_[a], "flat_index: index out of range");
      flat = flat * dims_[a] + idx[a];
    }
    return flat;
  }

  double& at(const std::vector<std::size_t>& idx) { return data_[flat_index(idx)]; }
  double at(const std::vector<std::size_t>& idx) const { return data_[flat_index(idx)]; }

  /// First axis tagged kTime, or npos when absent.
  [[nodiscard]] std::size_t time_axis() const {
    for (std::size_t a = 0; a < roles_.size(); ++a)
      if (roles_[a] == AxisRole::kTime) return a;
    return npos;
  }

  [[nodiscard]] bool same_shape(const GridTensor& other) const {
    return dims_ == other.dims_;
  }

  [[nodiscard]] bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void require_finite(const std::string& context) const {
    if (!all_finite()) throw NumericalError(context + ": non-finite values present");
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<std::size_t> dims_;
  std::vector<AxisRole> roles_;
  std::vector<double> extent_;
  std::vector<double> data_;
};

// ============================================================================
// WDT1 on-disk layout (little-endian):
//   bytes 0..3   magic "WDT1"
//   u32          rank
//   u32 * rank   axis lengths
//   u8  * rank   axis role codes (0 time, 1 space, 2 channel)
//   f64 * prod   payload, row-major
// ============================================================================

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw IoError("WDT1: truncated stream");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_wdt1(std::ostream& os, const GridTensor& t) {
  os.write("WDT1", 4);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.dims())
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  for (AxisRole r : t.roles())
    detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(r));
  for (double v : t.data()) detail::write_le<double>(os, v);
  if (!os) throw IoError("WDT1: write failed");
}

inline GridTensor read_wdt1(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "WDT1", 4) != 0)
    throw IoError("WDT1: bad magic");
  const auto rank = detail::read_le<std::uint32_t>(is);
  if (rank == 0 || rank > 16) throw IoError("WDT1: implausible rank");
  std::vector<std::size_t> dims(rank);
  for (auto& d : dims) {
    d = detail::read_le<std::uint32_t>(is);
    if (d == 0) throw IoError("WDT1: zero axis length");
  }
  std::vector<AxisRole> roles(rank);
  for (auto& r : roles) {
    const auto code = detail::read_le<std::uint8_t>(is);
    if (code > 2) throw IoError("WDT1: unknown axis role code");
    r = static_cast<AxisRole>(code);
  }
  GridTensor t(dims, roles);
  for (double& v : t.data()) v = detail::read_le<double>(is);
  return t;
}

inline void save_tensor(const std::filesystem::path& path, const GridTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path.string());
  write_wdt1(os, t);
}

inline GridTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path.string());
  return read_wdt1(is);
}

}  // namespace wavediff
