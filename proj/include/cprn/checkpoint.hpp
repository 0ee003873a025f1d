#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cprn/config.hpp"
#include "cprn/image.hpp"
#include "cprn/model.hpp"
#include "cprn/optim.hpp"

namespace cprn {

// Layout (all integers little-endian):
//   "CPRN" | u32 version | u32 len + UTF-8 JSON | u32 tensor count |
//   per tensor: u16 len + UTF-8 name, u8 ndim, u32 dims[ndim], f32 payload |
//   u32 CRC32 of everything before it
inline constexpr char kCheckpointMagic[4] = {'C', 'P', 'R', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : Error {
  using Error::Error;
};

// Where a training run stands; enough to resume bit-exactly.
struct TrainingState {
  std::uint64_t step = 0;      // optimizer steps taken
  std::uint64_t epoch = 0;     // current epoch (0-based)
  std::uint64_t in_epoch = 0;  // batches already consumed from the current epoch
  std::string epoch_rng;       // sampler engine state at the start of `epoch`
};

struct Checkpoint {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::optional<RunConfig> run;
  std::optional<OptimizerState<float>> optimizer;
  TrainingState state;
};

struct LoadedCheckpoint {
  Checkpoint meta;
  Model<float> model;
};

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    u32(v);
  }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& b, std::size_t end) : b_(b), end_(end) {}
  std::size_t pos() const { return pos_; }
  void need(std::size_t n, const char* what) const {
    if (end_ - pos_ < n)
      throw CheckpointError(std::string("truncated checkpoint while reading ") + what +
                            " at byte " + std::to_string(pos_));
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = b_[pos_] | (b_[pos_ + 1] << 8);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) {
    const std::uint32_t v = u32(what);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(b_.begin() + pos_, b_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::vector<unsigned char>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline void write_tensor(ByteWriter& w, const std::string& name, const Tensor<float>& t) {
  if (name.size() > 0xffff) throw CheckpointError("tensor name too long: " + name);
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.raw(name.data(), name.size());
  const Shape s = t.shape();
  w.u8(4);
  for (int d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
  for (float f : t.data()) w.f32(f);
}

inline std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline const char* kOptimM = "optim.m/";
inline const char* kOptimV = "optim.v/";

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const Model<float>& model,
                                                    const OptimizerState<float>* optimizer,
                                                    const TrainingState& state,
                                                    const RunConfig* run = nullptr) {
  json meta = {{"format", "cprn-checkpoint"},
               {"model", to_json(model.config())},
               {"seed", model.seed()},
               {"state",
                {{"step", state.step},
                 {"epoch", state.epoch},
                 {"in_epoch", state.in_epoch},
                 {"epoch_rng", state.epoch_rng}}},
               {"has_optimizer", optimizer != nullptr}};
  if (run) meta["run"] = to_json(*run);
  if (optimizer) meta["state"]["optimizer_step"] = optimizer->step;
  const std::string text = meta.dump();

  const auto& params = model.params().params();
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text.data(), text.size());
  std::uint32_t count = static_cast<std::uint32_t>(params.size());
  if (optimizer) {
    for (const auto& p : params)
      if (trainable(p.kind)) count += 2;
  }
  w.u32(count);
  for (const auto& p : params) detail::write_tensor(w, p.name, p.var.value());
  if (optimizer) {
    if (optimizer->m.size() != params.size())
      throw UsageError("optimizer state does not match the model parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!trainable(params[i].kind)) continue;
      detail::write_tensor(w, detail::kOptimM + params[i].name, optimizer->m[i]);
      detail::write_tensor(w, detail::kOptimV + params[i].name, optimizer->v[i]);
    }
  }
  w.u32(detail::crc32_of(w.bytes().data(), w.bytes().size()));
  return std::move(w.bytes());
}

inline void save_checkpoint(const std::string& path, const Model<float>& model,
                            const OptimizerState<float>* optimizer = nullptr,
                            const TrainingState& state = {}, const RunConfig* run = nullptr) {
  write_file(path, encode_checkpoint(model, optimizer, state, run));
}

inline LoadedCheckpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw CheckpointError("not a CPRN checkpoint: bad magic bytes (unsupported format/version)");
  if (bytes.size() < 12) throw CheckpointError("truncated checkpoint header");
  detail::ByteReader head(bytes, bytes.size());
  head.str(4, "magic");
  const std::uint32_t version = head.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  if (bytes.size() < 16) throw CheckpointError("truncated checkpoint: missing CRC");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (stored != detail::crc32_of(bytes.data(), body))
    throw CheckpointError("checkpoint CRC mismatch (file truncated or corrupted)");

  detail::ByteReader r(bytes, body);
  r.str(4, "magic");
  r.u32("version");
  const std::uint32_t len = r.u32("config length");
  const json meta = json::parse(r.str(len, "config"), nullptr, false);
  if (meta.is_discarded() || !meta.is_object())
    throw CheckpointError("checkpoint config block is not valid JSON");

  Checkpoint ck;
  try {
    ck.config = model_config_from_json(meta.at("model"));
    ck.seed = meta.at("seed").get<std::uint64_t>();
    const json& st = meta.at("state");
    ck.state.step = st.at("step").get<std::uint64_t>();
    ck.state.epoch = st.at("epoch").get<std::uint64_t>();
    ck.state.in_epoch = st.at("in_epoch").get<std::uint64_t>();
    ck.state.epoch_rng = st.at("epoch_rng").get<std::string>();
    if (meta.contains("run")) ck.run = run_config_from_json(meta.at("run"));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint config block is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config block is invalid: ") + e.what());
  }
  const bool has_opt = meta.value("has_optimizer", false);

  Model<float> model(ck.config, ck.seed);
  const auto& params = model.params().params();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < params.size(); ++i) index[params[i].name] = i;
  if (has_opt) {
    ck.optimizer = OptimizerState<float>::zeros_like(model.params());
    ck.optimizer->step = meta.at("state").value("optimizer_step", std::uint64_t{0});
  }

  std::vector<bool> seen(params.size(), false), seen_m(params.size(), false),
      seen_v(params.size(), false);
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint16_t nlen = r.u16("tensor name length");
    std::string name = r.str(nlen, "tensor name");
    const std::uint8_t ndim = r.u8("tensor rank");
    if (ndim < 1 || ndim > 4)
      throw CheckpointError("tensor " + name + " has unsupported rank " + std::to_string(ndim));
    int dims[4] = {1, 1, 1, 1};
    for (int d = 0; d < ndim; ++d) dims[4 - ndim + d] = static_cast<int>(r.u32("tensor dims"));
    const Shape shape{dims[0], dims[1], dims[2], dims[3]};

    Tensor<float>* target = nullptr;
    std::vector<bool>* flags = &seen;
    std::string pname = name;
    if (name.rfind(detail::kOptimM, 0) == 0 || name.rfind(detail::kOptimV, 0) == 0) {
      const bool is_m = name.rfind(detail::kOptimM, 0) == 0;
      pname = name.substr(std::strlen(is_m ? detail::kOptimM : detail::kOptimV));
      if (!has_opt) throw CheckpointError("unexpected optimizer tensor " + name);
      auto it = index.find(pname);
      if (it == index.end() || !trainable(params[it->second].kind))
        throw CheckpointError("unknown parameter name in checkpoint: " + name);
      target = &(is_m ? ck.optimizer->m : ck.optimizer->v)[it->second];
      flags = is_m ? &seen_m : &seen_v;
    } else {
      auto it = index.find(name);
      if (it == index.end()) throw CheckpointError("unknown parameter name in checkpoint: " + name);
      target = &params[it->second].var.mutable_value();
    }
    const std::size_t idx = index.at(pname);
    if ((*flags)[idx]) throw CheckpointError("duplicate tensor in checkpoint: " + name);
    (*flags)[idx] = true;
    if (!(target->shape() == shape))
      throw CheckpointError("tensor " + name + " has dims " + shape.str() + ", model expects " +
                            target->shape().str());
    r.need(shape.numel() * 4, "tensor payload");
    for (float& f : target->vec()) f = r.f32("tensor payload");
  }
  if (!r.done()) throw CheckpointError("trailing bytes after the last tensor");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!seen[i]) throw CheckpointError("checkpoint is missing parameter " + params[i].name);
    if (has_opt && trainable(params[i].kind) && !(seen_m[i] && seen_v[i]))
      throw CheckpointError("checkpoint is missing optimizer moments for " + params[i].name);
  }
  return {std::move(ck), std::move(model)};
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace cprn
