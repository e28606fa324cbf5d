#pragma once

// Flat key = value run configuration.
//
//   # comment
//   preset = dota-117m
//   peak_lr = 2e-4
//   bidirectional_audio = true
//
// `preset` is applied before every other key regardless of its position.
// Every key can be overridden through the environment as DOTA_<KEY>
// (upper-case), e.g. DOTA_PEAK_LR=1e-3.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "dota/augment.hpp"
#include "dota/decode.hpp"
#include "dota/frontend.hpp"
#include "dota/model.hpp"
#include "dota/optim.hpp"
#include "dota/train.hpp"

namespace dota {

struct RunConfig {
  std::string preset = "dota-117m";
  ModelConfig model;
  TrainConfig train;
  AugmentConfig augment;
  FrontendConfig frontend;
  EvalConfig eval;
  std::string vocab_path;
  std::size_t workers = 1;

  TrainSetup setup() const { return {model, train, augment, frontend, workers}; }

  void validate() const {
    model.validate();
    train.validate();
    augment.validate();
    if (frontend.n_frames() != model.mel_frames)
      throw ConfigError("config: instance_samples / hop_length must equal mel_frames");
    if (frontend.n_mels != model.n_mels) throw ConfigError("config: frontend and model disagree on n_mels");
    if (workers == 0) throw ConfigError("config: workers must be positive");
  }

  bool operator==(const RunConfig&) const = default;
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"dota-117m", "dota-306m-8x", "dota-634m-8x", "dota-634m-12x", "toy"};
  return names;
}

/// Architectures of the released model sizes, plus "toy" for desk-scale
/// experiments (not a released configuration).
inline void apply_preset(RunConfig& rc, const std::string& name) {
  RunConfig fresh;
  rc.model = fresh.model;
  rc.frontend = fresh.frontend;
  auto arch = [&](std::size_t layers, std::size_t dim, std::size_t heads, std::size_t k) {
    rc.model.n_layers = layers;
    rc.model.model_dim = dim;
    rc.model.n_heads = heads;
    rc.model.embed_dim = 128;
    rc.model.stack_factor = k;
    rc.model.vocab_size = 30522;
  };
  if (name == "dota-117m") {
    arch(16, 768, 12, 4);
  } else if (name == "dota-306m-8x") {
    arch(24, 1024, 16, 8);
  } else if (name == "dota-634m-8x") {
    arch(32, 1280, 20, 8);
  } else if (name == "dota-634m-12x") {
    arch(32, 1280, 20, 12);
  } else if (name == "toy") {
    rc.model.n_layers = 2;
    rc.model.model_dim = 64;
    rc.model.n_heads = 4;
    rc.model.embed_dim = 32;
    rc.model.stack_factor = 4;
    rc.model.vocab_size = 64;
    rc.model.mel_frames = 200;
    rc.frontend.instance_samples = 32000;  // 2 s
    rc.train.total_steps = 2000;
    rc.train.warmup_steps = 100;
    rc.train.batch_size = 8;
    rc.train.peak_lr = 2e-3;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  rc.preset = name;
}

namespace config_detail {

inline std::string trim(std::string s) {
  auto sp = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), sp));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), sp).base(), s.end());
  return s;
}

template <class Int>
Int parse_uint(const std::string& v) {
  Int out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out))
    throw ConfigError("expected a real number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

inline std::string fmt_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class M>
Field uint_field(std::string key, M RunConfig::*sub, std::size_t M::*member) {
  return {key, [=](RunConfig& c, const std::string& v) { (c.*sub).*member = parse_uint<std::size_t>(v); },
          [=](const RunConfig& c) { return std::to_string((c.*sub).*member); }};
}
template <class M>
Field u64_field(std::string key, M RunConfig::*sub, std::uint64_t M::*member) {
  return {key, [=](RunConfig& c, const std::string& v) { (c.*sub).*member = parse_uint<std::uint64_t>(v); },
          [=](const RunConfig& c) { return std::to_string((c.*sub).*member); }};
}
template <class M>
Field real_field(std::string key, M RunConfig::*sub, double M::*member) {
  return {key, [=](RunConfig& c, const std::string& v) { (c.*sub).*member = parse_real(v); },
          [=](const RunConfig& c) { return fmt_real((c.*sub).*member); }};
}
template <class M>
Field bool_field(std::string key, M RunConfig::*sub, bool M::*member) {
  return {key, [=](RunConfig& c, const std::string& v) { (c.*sub).*member = parse_bool(v); },
          [=](const RunConfig& c) { return std::string((c.*sub).*member ? "true" : "false"); }};
}

inline const std::vector<Field>& fields() {
  using RC = RunConfig;
  static const std::vector<Field> f = {
      uint_field("n_layers", &RC::model, &ModelConfig::n_layers),
      uint_field("model_dim", &RC::model, &ModelConfig::model_dim),
      uint_field("n_heads", &RC::model, &ModelConfig::n_heads),
      uint_field("embed_dim", &RC::model, &ModelConfig::embed_dim),
      uint_field("stack_factor", &RC::model, &ModelConfig::stack_factor),
      uint_field("vocab_size", &RC::model, &ModelConfig::vocab_size),
      uint_field("max_text_tokens", &RC::model, &ModelConfig::max_text_tokens),
      {"n_mels",  // shared by model and frontend
       [](RC& c, const std::string& v) { c.model.n_mels = c.frontend.n_mels = parse_uint<std::size_t>(v); },
       [](const RC& c) { return std::to_string(c.model.n_mels); }},
      uint_field("mel_frames", &RC::model, &ModelConfig::mel_frames),
      bool_field("bidirectional_audio", &RC::model, &ModelConfig::bidirectional_audio),

      u64_field("total_steps", &RC::train, &TrainConfig::total_steps),
      uint_field("batch_size", &RC::train, &TrainConfig::batch_size),
      real_field("peak_lr", &RC::train, &TrainConfig::peak_lr),
      u64_field("warmup_steps", &RC::train, &TrainConfig::warmup_steps),
      real_field("beta1", &RC::train, &TrainConfig::beta1),
      real_field("beta2", &RC::train, &TrainConfig::beta2),
      real_field("weight_decay", &RC::train, &TrainConfig::weight_decay),
      real_field("grad_clip_norm", &RC::train, &TrainConfig::grad_clip_norm),
      real_field("adam_epsilon", &RC::train, &TrainConfig::adam_epsilon),
      u64_field("seed", &RC::train, &TrainConfig::seed),
      {"precision", [](RC& c, const std::string& v) { c.train.precision = parse_precision(v); },
       [](const RC& c) { return to_string(c.train.precision); }},
      u64_field("checkpoint_every", &RC::train, &TrainConfig::checkpoint_every),
      u64_field("log_every", &RC::train, &TrainConfig::log_every),

      real_field("p_speed", &RC::augment, &AugmentConfig::p_speed),
      real_field("p_tempo", &RC::augment, &AugmentConfig::p_tempo),
      real_field("p_lowpass", &RC::augment, &AugmentConfig::p_lowpass),
      real_field("p_reverb", &RC::augment, &AugmentConfig::p_reverb),
      real_field("factor_min", &RC::augment, &AugmentConfig::factor_min),
      real_field("factor_max", &RC::augment, &AugmentConfig::factor_max),
      real_field("p_concat", &RC::augment, &AugmentConfig::p_concat),
      real_field("pole_min", &RC::augment, &AugmentConfig::pole_min),
      real_field("pole_max", &RC::augment, &AugmentConfig::pole_max),
      real_field("t60_min", &RC::augment, &AugmentConfig::t60_min),
      real_field("t60_max", &RC::augment, &AugmentConfig::t60_max),
      u64_field("augment_seed", &RC::augment, &AugmentConfig::seed),

      uint_field("instance_samples", &RC::frontend, &FrontendConfig::instance_samples),
      uint_field("win_length", &RC::frontend, &FrontendConfig::win_length),
      uint_field("hop_length", &RC::frontend, &FrontendConfig::hop_length),
      uint_field("n_fft", &RC::frontend, &FrontendConfig::n_fft),
      real_field("f_min", &RC::frontend, &FrontendConfig::f_min),
      real_field("f_max", &RC::frontend, &FrontendConfig::f_max),
      real_field("log_floor", &RC::frontend, &FrontendConfig::log_floor),
      bool_field("feature_normalize", &RC::frontend, &FrontendConfig::normalize),
      real_field("dynamic_range", &RC::frontend, &FrontendConfig::dynamic_range),

      uint_field("eval_max_samples", &RC::eval, &EvalConfig::max_samples),
      uint_field("eval_max_ref_tokens", &RC::eval, &EvalConfig::max_ref_tokens),
      u64_field("eval_seed", &RC::eval, &EvalConfig::seed),

      {"vocab_path", [](RC& c, const std::string& v) { c.vocab_path = v; },
       [](const RC& c) { return c.vocab_path; }},
      {"workers", [](RC& c, const std::string& v) { c.workers = parse_uint<std::size_t>(v); },
       [](const RC& c) { return std::to_string(c.workers); }},
  };
  return f;
}

inline const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

inline std::string env_name(const std::string& key) {
  std::string s = "DOTA_";
  for (char c : key) s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return s;
}

}  // namespace config_detail

/// Sets one key; throws ConfigError naming the key on failure.
inline void set_config_value(RunConfig& rc, const std::string& key, const std::string& value) {
  if (key == "preset") return apply_preset(rc, value);
  const auto* f = config_detail::find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  try {
    f->set(rc, value);
  } catch (const ConfigError& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
}

/// Parses config text. `source` labels error messages (e.g. a file name).
/// Environment overrides are applied when `use_env` is set. The result is
/// validated.
inline RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>",
                                   bool use_env = true) {
  RunConfig rc;
  apply_preset(rc, rc.preset);
  std::vector<std::tuple<std::size_t, std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = config_detail::trim(line.substr(0, eq));
    const std::string value = config_detail::trim(line.substr(eq + 1));
    if (key != "preset" && !config_detail::find_field(key))
      throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown config key '" + key + "'");
    entries.emplace_back(line_no, key, value);
  }
  std::stable_partition(entries.begin(), entries.end(), [](const auto& e) { return std::get<1>(e) == "preset"; });
  for (const auto& [ln, key, value] : entries) {
    try {
      set_config_value(rc, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(ln) + ": " + e.what());
    }
  }
  if (use_env) {
    if (const char* p = std::getenv("DOTA_PRESET")) apply_preset(rc, p);
    for (const auto& f : config_detail::fields()) {
      if (const char* v = std::getenv(config_detail::env_name(f.key).c_str())) {
        try {
          f.set(rc, v);
        } catch (const ConfigError& e) {
          throw ConfigError("environment " + config_detail::env_name(f.key) + ": " + e.what());
        }
      }
    }
  }
  try {
    rc.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return rc;
}

inline RunConfig parse_config(const std::filesystem::path& path, bool use_env = true) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string(), use_env);
}

/// Serializes every field; parse_config_text(serialize_config(c)) == c.
inline std::string serialize_config(const RunConfig& rc) {
  std::ostringstream os;
  os << "preset = " << rc.preset << "\n";
  for (const auto& f : config_detail::fields()) os << f.key << " = " << f.get(rc) << "\n";
  return os.str();
}

}  // namespace dota
