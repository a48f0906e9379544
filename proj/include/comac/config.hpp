#pragma once

#include <cstdint>
#include <cstdio>
#include <istream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "comac/error.hpp"

namespace comac {

enum class Strategy { tfidf, ff };

inline const char* to_string(Strategy s) { return s == Strategy::tfidf ? "tfidf" : "ff"; }

inline Strategy parse_strategy(const std::string& s) {
  if (s == "tfidf" || s == "TFIDF" || s == "tf-idf") return Strategy::tfidf;
  if (s == "ff" || s == "FF") return Strategy::ff;
  throw ConfigError("unknown strategy '" + s + "' (expected tfidf or ff)");
}

/// Training and inference hyper-parameters. Field names double as config
/// file keys and CLI flags (`P_sr` for p_sr).
struct TrainConfig {
  double alpha = 1.0;  // knowledge loss weight
  double beta = 1.0;   // persona loss weight
  double gamma = 10.0; // language-model loss weight
  double w_star = 0.9; // positive persona label weight
  double p_star = 0.1; // drop probability for all-negative persona loss
  double p_sr = 0.35;  // fraction of tokens kept by sampling
  std::size_t d0 = 0;  // reduced width; 0 means d/4
  Strategy strategy = Strategy::tfidf;
  double learning_rate = 0.5;
  std::size_t epochs = 2;
  std::uint64_t seed = 7;
  bool normalize_tokens = true;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (!(alpha >= 0 && beta >= 0 && gamma >= 0)) fail("alpha, beta and gamma must be non-negative");
    if (!(w_star > 0 && w_star < 1)) fail("w_star must lie in (0, 1)");
    if (!(p_star >= 0 && p_star < 1)) fail("p_star must lie in [0, 1)");
    if (!(p_sr > 0 && p_sr <= 1)) fail("P_sr must lie in (0, 1]");
    if (!(learning_rate > 0)) fail("learning_rate must be positive");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("value for '" + key + "' is not a number: '" + v + "'");
  }
}

inline unsigned long long parse_unsigned(const std::string& key, const std::string& v) {
  try {
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    std::size_t used = 0;
    auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("value for '" + key + "' is not a non-negative integer: '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("value for '" + key + "' is not a boolean: '" + v + "'");
}

}  // namespace detail

/// Applies one key=value setting; unknown keys are a ConfigError.
inline void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "alpha") cfg.alpha = parse_double(key, value);
  else if (key == "beta") cfg.beta = parse_double(key, value);
  else if (key == "gamma") cfg.gamma = parse_double(key, value);
  else if (key == "w_star") cfg.w_star = parse_double(key, value);
  else if (key == "p_star") cfg.p_star = parse_double(key, value);
  else if (key == "P_sr" || key == "p_sr") cfg.p_sr = parse_double(key, value);
  else if (key == "d0") cfg.d0 = parse_unsigned(key, value);
  else if (key == "strategy") cfg.strategy = parse_strategy(value);
  else if (key == "learning_rate") cfg.learning_rate = parse_double(key, value);
  else if (key == "epochs") cfg.epochs = parse_unsigned(key, value);
  else if (key == "seed") cfg.seed = parse_unsigned(key, value);
  else if (key == "normalize_tokens") cfg.normalize_tokens = parse_bool(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Flat `key = value` lines; '#' starts a comment.
inline TrainConfig parse_config(std::istream& in, TrainConfig cfg = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + " has no '='");
    set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

inline std::string format_config(const TrainConfig& cfg) {
  using detail::format_double;
  std::ostringstream out;
  out << "alpha = " << format_double(cfg.alpha) << '\n'
      << "beta = " << format_double(cfg.beta) << '\n'
      << "gamma = " << format_double(cfg.gamma) << '\n'
      << "w_star = " << format_double(cfg.w_star) << '\n'
      << "p_star = " << format_double(cfg.p_star) << '\n'
      << "P_sr = " << format_double(cfg.p_sr) << '\n'
      << "d0 = " << cfg.d0 << '\n'
      << "strategy = " << to_string(cfg.strategy) << '\n'
      << "learning_rate = " << format_double(cfg.learning_rate) << '\n'
      << "epochs = " << cfg.epochs << '\n'
      << "seed = " << cfg.seed << '\n'
      << "normalize_tokens = " << (cfg.normalize_tokens ? "true" : "false") << '\n';
  return out.str();
}

inline nlohmann::json config_to_json(const TrainConfig& cfg) {
  return {{"alpha", cfg.alpha},         {"beta", cfg.beta},
          {"gamma", cfg.gamma},         {"w_star", cfg.w_star},
          {"p_star", cfg.p_star},       {"P_sr", cfg.p_sr},
          {"d0", cfg.d0},               {"strategy", to_string(cfg.strategy)},
          {"learning_rate", cfg.learning_rate}, {"epochs", cfg.epochs},
          {"seed", cfg.seed},           {"normalize_tokens", cfg.normalize_tokens}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig cfg;
    cfg.alpha = j.at("alpha").get<double>();
    cfg.beta = j.at("beta").get<double>();
    cfg.gamma = j.at("gamma").get<double>();
    cfg.w_star = j.at("w_star").get<double>();
    cfg.p_star = j.at("p_star").get<double>();
    cfg.p_sr = j.at("P_sr").get<double>();
    cfg.d0 = j.at("d0").get<std::size_t>();
    cfg.strategy = parse_strategy(j.at("strategy").get<std::string>());
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.normalize_tokens = j.at("normalize_tokens").get<bool>();
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

}  // namespace comac
