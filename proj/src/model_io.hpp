#pragma once

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "model.hpp"

namespace scl {

// Checkpoint container: "SCLT" magic, version, dtype, then per tensor a
// name, shape and raw little-endian row-major data. A .json sidecar carries
// the model config and the optimizer step count.

namespace detail {

template <typename T>
void write_pod(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

template <typename S>
constexpr std::uint32_t dtype_code() {
  return sizeof(S) == 4 ? 0u : 1u;
}

}  // namespace detail

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return {{"layers", cfg.layers},   {"hidden", cfg.hidden},
          {"heads", cfg.heads},     {"ffn", cfg.ffn},
          {"vocab_size", cfg.vocab_size}, {"max_len", cfg.max_len},
          {"dropout", cfg.dropout}, {"seed", cfg.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.layers = j.at("layers").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.ffn = j.at("ffn").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.max_len = j.at("max_len").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

template <typename S>
void save_checkpoint(const std::string& path, const MlmModel<S>& model,
                     std::uint64_t step_count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write checkpoint '" + path + "'");
  out.write("SCLT", 4);
  detail::write_pod<std::uint32_t>(out, 1);  // version
  detail::write_pod<std::uint32_t>(out, detail::dtype_code<S>());
  std::uint32_t count = 0;
  model.visit([&](const std::string&, const Mat<S>&, ParamKind) { ++count; });
  detail::write_pod(out, count);
  model.visit([&](const std::string& name, const Mat<S>& p, ParamKind) {
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(p.rows()));
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(p.cols()));
    out.write(reinterpret_cast<const char*>(p.data()),
              static_cast<std::streamsize>(sizeof(S) * static_cast<std::size_t>(p.size())));
  });
  if (!out) fail(ErrorCode::Io, "failed while writing checkpoint '" + path + "'");

  nlohmann::json sidecar = {{"format", "sclt"},
                            {"version", 1},
                            {"step_count", step_count},
                            {"model", model_config_to_json(model.config())}};
  std::ofstream meta(path + ".json", std::ios::trunc);
  if (!meta) fail(ErrorCode::Io, "cannot write checkpoint sidecar for '" + path + "'");
  meta << sidecar.dump(2) << '\n';
}

template <typename S>
MlmModel<S> load_checkpoint(const std::string& path, std::uint64_t* step_count = nullptr) {
  std::ifstream meta_in(path + ".json");
  if (!meta_in) fail(ErrorCode::Io, "missing checkpoint sidecar '" + path + ".json'");
  nlohmann::json sidecar = nlohmann::json::parse(meta_in);
  if (step_count != nullptr) *step_count = sidecar.at("step_count").get<std::uint64_t>();
  MlmModel<S> model(model_config_from_json(sidecar.at("model")));

  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open checkpoint '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SCLT", 4) != 0) {
    fail(ErrorCode::Io, "'" + path + "' is not a checkpoint file");
  }
  const auto version = detail::read_pod<std::uint32_t>(in);
  if (version != 1) fail(ErrorCode::Io, "unsupported checkpoint version");
  const auto dtype = detail::read_pod<std::uint32_t>(in);
  if (dtype != detail::dtype_code<S>()) {
    fail(ErrorCode::Io, "checkpoint dtype does not match the requested scalar type");
  }
  const auto count = detail::read_pod<std::uint32_t>(in);

  auto ptrs = model.tensor_ptrs();
  auto names = model.tensor_names();
  if (count != ptrs.size()) fail(ErrorCode::Io, "checkpoint tensor count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = detail::read_pod<std::uint64_t>(in);
    const auto cols = detail::read_pod<std::uint64_t>(in);
    if (name != names[i]) fail(ErrorCode::Io, "unexpected tensor '" + name + "' in checkpoint");
    Mat<S>& p = *ptrs[i];
    if (rows != static_cast<std::uint64_t>(p.rows()) ||
        cols != static_cast<std::uint64_t>(p.cols())) {
      fail(ErrorCode::Io, "tensor '" + name + "' has unexpected shape");
    }
    in.read(reinterpret_cast<char*>(p.data()),
            static_cast<std::streamsize>(sizeof(S) * static_cast<std::size_t>(p.size())));
  }
  if (!in) fail(ErrorCode::Io, "checkpoint '" + path + "' is truncated");
  return model;
}

}  // namespace scl
