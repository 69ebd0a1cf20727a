#pragma once

// `key = value` configuration for the training stages.

#include <charconv>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fcs/errors.hpp"
#include "fcs/pipeline.hpp"

namespace fcs {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Blank lines and lines starting with `#` are ignored.
inline KeyValues parse_key_values(const std::string& text, const std::string& origin = "config") {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      fail(Errc::parse_error, origin + ":" + std::to_string(lineno) + ": expected key = value, got '" + t + "'");
    std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
    if (key.empty()) fail(Errc::parse_error, origin + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      out = T(std::stod(value, &used));
      if (used == value.size()) return out;
    } catch (const std::exception&) {
    }
  } else {
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec == std::errc() && ptr == value.data() + value.size()) return out;
  }
  fail(Errc::invalid_config, "bad value '" + value + "' for " + key);
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail(Errc::invalid_config, "bad boolean '" + value + "' for " + key);
}

}  // namespace detail

inline void apply_config_value(StageConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_number;
  if (key == "steps") cfg.steps = parse_number<int>(key, value);
  else if (key == "epochs") cfg.epochs = parse_number<int>(key, value);
  else if (key == "lr") cfg.lr = parse_number<double>(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_number<int>(key, value);
  else if (key == "lambda_dir") cfg.weights.lambda_dir = parse_number<double>(key, value);
  else if (key == "lambda_patch") cfg.weights.lambda_patch = parse_number<double>(key, value);
  else if (key == "lambda_dis") cfg.weights.lambda_dis = parse_number<double>(key, value);
  else if (key == "n_patches") cfg.patch.n_patches = parse_number<int>(key, value);
  else if (key == "patch_size") cfg.patch.patch_size = parse_number<int>(key, value);
  else if (key == "tau") cfg.patch.tau = parse_number<double>(key, value);
  else if (key == "distortion") cfg.patch.distortion = parse_number<double>(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "source_text") cfg.source_text = value;
  else if (key == "optimize_embedding") cfg.optimize_embedding = detail::parse_bool(key, value);
  else if (key == "threads") cfg.threads = parse_number<unsigned>(key, value);
  else fail(Errc::invalid_config, "unknown config key '" + key + "'");
}

inline void apply_config(StageConfig& cfg, const KeyValues& kv) {
  for (const auto& [k, v] : kv) apply_config_value(cfg, k, v);
}

/// Every key, in a form apply_config reads back to an identical config.
inline std::string config_snapshot(const StageConfig& cfg) {
  std::ostringstream o;
  o.precision(17);
  o << "steps = " << cfg.steps << "\n"
    << "epochs = " << cfg.epochs << "\n"
    << "lr = " << cfg.lr << "\n"
    << "batch_size = " << cfg.batch_size << "\n"
    << "lambda_dir = " << cfg.weights.lambda_dir << "\n"
    << "lambda_patch = " << cfg.weights.lambda_patch << "\n"
    << "lambda_dis = " << cfg.weights.lambda_dis << "\n"
    << "n_patches = " << cfg.patch.n_patches << "\n"
    << "patch_size = " << cfg.patch.patch_size << "\n"
    << "tau = " << cfg.patch.tau << "\n"
    << "distortion = " << cfg.patch.distortion << "\n"
    << "seed = " << cfg.seed << "\n"
    << "source_text = " << cfg.source_text << "\n"
    << "optimize_embedding = " << (cfg.optimize_embedding ? "true" : "false") << "\n";
  return o.str();
}

}  // namespace fcs
