#pragma once

// INI-style experiment configuration. Sections and keys mirror
// ExperimentConfig; unknown sections or keys are rejected.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mvpure/errors.hpp"
#include "mvpure/harness.hpp"
#include "mvpure/indices.hpp"

namespace mvpure {

/// Optional external inputs for `localize`.
struct InputFiles {
  std::optional<std::string> leadfield;
  std::optional<std::string> covariance_r;
  std::optional<std::string> covariance_n;
};

struct AppConfig {
  ExperimentConfig experiment;
  unsigned jobs = 0;  // 0: take MVPURE_JOBS or hardware concurrency
  InputFiles input;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

inline double parse_double(const std::string& v, const std::string& at) {
  const std::string t = trim(v);
  double out = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty())
    throw ConfigError(at + ": expected a number, got '" + v + "'");
  return out;
}

inline long long parse_int(const std::string& v, const std::string& at) {
  const std::string t = trim(v);
  long long out = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty())
    throw ConfigError(at + ": expected an integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& at) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(at + ": expected true/false, got '" + v + "'");
}

inline MaskKind parse_mask(const std::string& v, const std::string& at) {
  const std::string t = trim(v);
  if (t == "dense") return MaskKind::Dense;
  if (t == "identity") return MaskKind::Identity;
  throw ConfigError(at + ": expected dense or identity, got '" + v + "'");
}

inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"experiment",
       {"m", "s", "l0", "n_fixed_close", "runs", "samples_pre", "samples_post", "delta", "seed", "snr_grid_db",
        "indices", "exact_covariances"}},
      {"geometry", {"coherence", "radius_mm"}},
      {"sources", {"mvar_order", "mask", "innovation_correlation", "exact_source_correlation"}},
      {"noise", {"background_sources", "background_mask", "white_noise_db", "ridge_rel"}},
      {"run", {"jobs"}},
      {"input", {"leadfield", "covariance_r", "covariance_n"}},
  };
  return schema;
}

}  // namespace detail

inline AppConfig parse_config(std::istream& in, const std::string& name = "<config>") {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(name + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  const auto& schema = detail::config_schema();
  for (const auto& [section, body] : tree) {
    const auto it = schema.find(section);
    if (it == schema.end()) {
      if (body.empty() && !body.data().empty()) throw ConfigError(name + ": key '" + section + "' outside a section");
      throw ConfigError(name + ": unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body)
      if (!it->second.count(key)) throw ConfigError(name + ": unknown key " + detail::where(section, key));
  }

  AppConfig out;
  ExperimentConfig& e = out.experiment;
  auto get = [&](const std::string& section, const std::string& key) -> std::optional<std::string> {
    const auto sec = tree.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return *v;
  };
  auto idx = [&](const std::string& section, const std::string& key, Index& dst) {
    if (auto v = get(section, key)) dst = static_cast<Index>(detail::parse_int(*v, detail::where(section, key)));
  };
  auto dbl = [&](const std::string& section, const std::string& key, double& dst) {
    if (auto v = get(section, key)) dst = detail::parse_double(*v, detail::where(section, key));
  };

  idx("experiment", "m", e.m);
  idx("experiment", "s", e.s);
  idx("experiment", "l0", e.l0);
  idx("experiment", "n_fixed_close", e.n_fixed_close);
  idx("experiment", "runs", e.runs);
  idx("experiment", "samples_pre", e.samples_pre);
  idx("experiment", "samples_post", e.samples_post);
  dbl("experiment", "delta", e.delta);
  if (auto v = get("experiment", "seed")) {
    const long long s = detail::parse_int(*v, detail::where("experiment", "seed"));
    if (s < 0) throw ConfigError("[experiment] seed: must be non-negative");
    e.seed_base = static_cast<std::uint64_t>(s);
  }
  if (auto v = get("experiment", "snr_grid_db")) {
    e.snr_grid_db.clear();
    for (const std::string& item : detail::split_list(*v))
      e.snr_grid_db.push_back(detail::parse_double(item, detail::where("experiment", "snr_grid_db")));
  }
  if (auto v = get("experiment", "indices")) {
    e.indices.clear();
    for (const std::string& item : detail::split_list(*v)) {
      const auto f = parse_family(item);
      if (!f) throw ConfigError("[experiment] indices: unknown index '" + item + "'");
      if (std::find(e.indices.begin(), e.indices.end(), *f) != e.indices.end())
        throw ConfigError("[experiment] indices: duplicate index '" + item + "'");
      e.indices.push_back(*f);
    }
  }
  if (auto v = get("experiment", "exact_covariances"))
    e.exact_covariances = detail::parse_bool(*v, detail::where("experiment", "exact_covariances"));

  dbl("geometry", "coherence", e.coherence);
  dbl("geometry", "radius_mm", e.radius_mm);

  idx("sources", "mvar_order", e.mvar_order);
  if (auto v = get("sources", "mask")) e.source_mask = detail::parse_mask(*v, detail::where("sources", "mask"));
  dbl("sources", "innovation_correlation", e.innovation_correlation);
  dbl("sources", "exact_source_correlation", e.exact_source_correlation);

  idx("noise", "background_sources", e.background_sources);
  if (auto v = get("noise", "background_mask"))
    e.background_mask = detail::parse_mask(*v, detail::where("noise", "background_mask"));
  dbl("noise", "white_noise_db", e.white_noise_db);
  dbl("noise", "ridge_rel", e.ridge_rel);

  if (auto v = get("run", "jobs")) {
    const long long j = detail::parse_int(*v, detail::where("run", "jobs"));
    if (j < 0 || j > 4096) throw ConfigError("[run] jobs: must lie in [0, 4096]");
    out.jobs = static_cast<unsigned>(j);
  }

  out.input.leadfield = get("input", "leadfield");
  out.input.covariance_r = get("input", "covariance_r");
  out.input.covariance_n = get("input", "covariance_n");
  const int given = out.input.leadfield.has_value() + out.input.covariance_r.has_value() +
                    out.input.covariance_n.has_value();
  if (given != 0 && given != 3)
    throw ConfigError("[input]: leadfield, covariance_r and covariance_n must be given together");

  e.validate();
  return out;
}

inline AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

}  // namespace mvpure
