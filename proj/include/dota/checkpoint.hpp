#pragma once

// Checkpoint container:
//   [0, 8)  magic "DOTACKPT"
//   u32     version (1)
//   u64     header length H, then H bytes of UTF-8 JSON
//           {"model": {...}, "frontend": {...}, "vocab": [...], "step": n}
//   u32     tensor count
//   per tensor: u16 name length, name bytes, u8 dtype (0 = f32, 1 = f64),
//               u8 ndim, ndim x u64 dims, row-major little-endian payload
// Tensors appear in the same order as param_layout(model).

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dota/common.hpp"
#include "dota/frontend.hpp"
#include "dota/model.hpp"
#include "dota/wav.hpp"
#include "json.hpp"

namespace dota {

using Json = nlohmann::json;

inline Json to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},         {"model_dim", c.model_dim},
          {"n_heads", c.n_heads},           {"embed_dim", c.embed_dim},
          {"stack_factor", c.stack_factor}, {"vocab_size", c.vocab_size},
          {"max_text_tokens", c.max_text_tokens}, {"n_mels", c.n_mels},
          {"mel_frames", c.mel_frames},     {"bidirectional_audio", c.bidirectional_audio}};
}

inline ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.stack_factor = j.at("stack_factor").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_text_tokens = j.at("max_text_tokens").get<std::size_t>();
  c.n_mels = j.at("n_mels").get<std::size_t>();
  c.mel_frames = j.at("mel_frames").get<std::size_t>();
  c.bidirectional_audio = j.at("bidirectional_audio").get<bool>();
  return c;
}

inline Json to_json(const FrontendConfig& c) {
  return {{"sample_rate", c.sample_rate}, {"instance_samples", c.instance_samples},
          {"win_length", c.win_length},   {"hop_length", c.hop_length},
          {"n_fft", c.n_fft},             {"n_mels", c.n_mels},
          {"f_min", c.f_min},             {"f_max", c.f_max},
          {"log_floor", c.log_floor},     {"normalize", c.normalize},
          {"dynamic_range", c.dynamic_range}};
}

inline FrontendConfig frontend_config_from_json(const Json& j) {
  FrontendConfig c;
  c.sample_rate = j.at("sample_rate").get<int>();
  c.instance_samples = j.at("instance_samples").get<std::size_t>();
  c.win_length = j.at("win_length").get<std::size_t>();
  c.hop_length = j.at("hop_length").get<std::size_t>();
  c.n_fft = j.at("n_fft").get<std::size_t>();
  c.n_mels = j.at("n_mels").get<std::size_t>();
  c.f_min = j.at("f_min").get<double>();
  c.f_max = j.at("f_max").get<double>();
  c.log_floor = j.at("log_floor").get<double>();
  c.normalize = j.at("normalize").get<bool>();
  c.dynamic_range = j.at("dynamic_range").get<double>();
  return c;
}

enum class TensorDType : std::uint8_t { kF32 = 0, kF64 = 1 };

struct Checkpoint {
  ModelParams<double> params;
  FrontendConfig frontend;
  std::vector<std::string> vocab;
  std::uint64_t step = 0;
};

inline constexpr char kCheckpointMagic[8] = {'D', 'O', 'T', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// f64 payloads keep high-precision weights bit-exact; f32 is the compact
/// interchange form.
inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck,
                            TensorDType dtype = TensorDType::kF64) {
  Json header = {{"model", to_json(ck.params.config)},
                 {"frontend", to_json(ck.frontend)},
                 {"vocab", ck.vocab},
                 {"step", ck.step}};
  const std::string h = header.dump();
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
  le::put<std::uint32_t>(out, kCheckpointVersion);
  le::put<std::uint64_t>(out, h.size());
  out.insert(out.end(), h.begin(), h.end());
  const auto& ps = ck.params.tensors;
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& info = ps.info(i);
    le::put<std::uint16_t>(out, static_cast<std::uint16_t>(info.name.size()));
    out.insert(out.end(), info.name.begin(), info.name.end());
    le::put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
    le::put<std::uint8_t>(out, 2);
    le::put<std::uint64_t>(out, static_cast<std::uint64_t>(info.rows));
    le::put<std::uint64_t>(out, static_cast<std::uint64_t>(info.cols));
    const double* p = ps[i].data();
    for (std::size_t k = 0; k < info.numel(); ++k) {
      if (dtype == TensorDType::kF32) le::put<float>(out, static_cast<float>(p[k]));
      else le::put<double>(out, p[k]);
    }
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  const auto b = detail::read_file_bytes(path);
  std::size_t off = 0;
  auto need = [&](std::size_t n) {
    if (off + n > b.size()) throw FormatError(path.string() + ": truncated checkpoint");
  };
  need(20);
  if (std::memcmp(b.data(), kCheckpointMagic, 8) != 0) throw FormatError(path.string() + ": bad checkpoint magic");
  if (le::get<std::uint32_t>(b.data() + 8) != kCheckpointVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version");
  const auto hlen = le::get<std::uint64_t>(b.data() + 12);
  off = 20;
  need(hlen);
  const Json header = Json::parse(b.begin() + static_cast<std::ptrdiff_t>(off),
                                  b.begin() + static_cast<std::ptrdiff_t>(off + hlen));
  off += hlen;

  Checkpoint ck;
  ck.params.config = model_config_from_json(header.at("model"));
  ck.params.config.validate();
  ck.frontend = frontend_config_from_json(header.at("frontend"));
  ck.vocab = header.at("vocab").get<std::vector<std::string>>();
  ck.step = header.value("step", std::uint64_t{0});
  ck.params.tensors = ParamSet<double>(param_layout(ck.params.config));
  auto& ps = ck.params.tensors;

  need(4);
  const auto count = le::get<std::uint32_t>(b.data() + off);
  off += 4;
  if (count != ps.size()) throw FormatError(path.string() + ": tensor count does not match the model config");
  for (std::size_t i = 0; i < count; ++i) {
    need(2);
    const auto nlen = le::get<std::uint16_t>(b.data() + off);
    off += 2;
    need(nlen + 2);
    const std::string name(reinterpret_cast<const char*>(b.data() + off), nlen);
    off += nlen;
    const auto dtype = static_cast<TensorDType>(b[off]);
    const auto ndim = b[off + 1];
    off += 2;
    const auto& info = ps.info(i);
    if (name != info.name) throw FormatError(path.string() + ": expected tensor " + info.name + ", found " + name);
    if (ndim != 2) throw FormatError(path.string() + ": tensor " + name + " is not 2-D");
    need(16);
    const auto rows = le::get<std::uint64_t>(b.data() + off);
    const auto cols = le::get<std::uint64_t>(b.data() + off + 8);
    off += 16;
    if (rows != static_cast<std::uint64_t>(info.rows) || cols != static_cast<std::uint64_t>(info.cols))
      throw FormatError(path.string() + ": shape mismatch for " + name);
    const std::size_t width = dtype == TensorDType::kF32 ? 4 : dtype == TensorDType::kF64 ? 8 : 0;
    if (width == 0) throw FormatError(path.string() + ": unknown dtype for " + name);
    need(width * info.numel());
    double* p = ps[i].data();
    for (std::size_t k = 0; k < info.numel(); ++k, off += width)
      p[k] = width == 4 ? static_cast<double>(le::get<float>(b.data() + off)) : le::get<double>(b.data() + off);
  }
  if (!ps.all_finite()) throw FormatError(path.string() + ": non-finite parameter values");
  return ck;
}

}  // namespace dota
