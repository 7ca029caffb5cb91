#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wavediff/bundle.hpp"
#include "wavediff/errors.hpp"
#include "wavediff/param_store.hpp"

namespace wavediff::nn {

// ============================================================================
// Checkpoints are WDC1 containers: the JSON header carries the model config,
// parameter order, and optimizer step; each parameter contributes value and
// Adam moment tensors (p/ m/ v/ prefixes). Gradients are transient and are
// not persisted. f64 payloads round-trip bitwise.
// ============================================================================

namespace detail {

inline GridTensor to_grid(const Tensor& t) {
  GridTensor g(t.dims, std::vector<AxisRole>(t.dims.size(), AxisRole::kChannel));
  g.data() = t.v;
  return g;
}

inline Tensor from_grid(const GridTensor& g) {
  Tensor t(g.dims());
  t.v = g.data();
  return t;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const ParamStore& store) {
  TensorBundle b;
  b.header["kind"] = "checkpoint";
  b.header["version"] = 1;
  b.header["meta"] = store.meta;
  b.header["adam_t"] = store.adam_t;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& [name, e] : store.entries()) names.push_back(name);
  b.header["params"] = std::move(names);
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& [level, st] : store.stats) levels.push_back(level);
  b.header["stats_levels"] = std::move(levels);

  for (const auto& [name, e] : store.entries()) {
    b.put("p/" + name, detail::to_grid(e.value));
    b.put("m/" + name, detail::to_grid(e.m));
    b.put("v/" + name, detail::to_grid(e.v));
  }
  for (const auto& [level, st] : store.stats) {
    st.validate();
    Tensor mean({st.mean.size()}), stdev({st.stdev.size()});
    mean.v = st.mean;
    stdev.v = st.stdev;
    const std::string suffix = std::to_string(level);
    b.put("stats/mean/" + suffix, detail::to_grid(mean));
    b.put("stats/std/" + suffix, detail::to_grid(stdev));
  }
  save_bundle(path, b);
}

inline ParamStore load_checkpoint(const std::filesystem::path& path) {
  const TensorBundle b = load_bundle(path);
  ParamStore store;
  try {
    if (b.header.at("kind").get<std::string>() != "checkpoint")
      throw IoError("checkpoint: wrong container kind");
    if (b.header.at("version").get<int>() != 1)
      throw IoError("checkpoint: unsupported version");
    store.meta = b.header.at("meta");
    store.adam_t = b.header.at("adam_t").get<std::uint64_t>();
    for (const auto& jname : b.header.at("params")) {
      const auto name = jname.get<std::string>();
      store.add(name, detail::from_grid(b.get("p/" + name)));
      ParamEntry& e = store.entry(name);
      e.m = detail::from_grid(b.get("m/" + name));
      e.v = detail::from_grid(b.get("v/" + name));
      if (!e.value.same_dims(e.m) || !e.value.same_dims(e.v))
        throw IoError("checkpoint: moment shape mismatch for '" + name + "'");
    }
    for (const auto& jlevel : b.header.at("stats_levels")) {
      const auto level = jlevel.get<std::size_t>();
      const std::string suffix = std::to_string(level);
      NormStats st;
      st.mean = b.get("stats/mean/" + suffix).data();
      st.stdev = b.get("stats/std/" + suffix).data();
      st.validate();
      store.stats[level] = std::move(st);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: malformed header: ") + e.what());
  }
  return store;
}

}  // namespace wavediff::nn
