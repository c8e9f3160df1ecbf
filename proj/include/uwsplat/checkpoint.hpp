#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "uwsplat/common.hpp"
#include "uwsplat/gaussian_cloud.hpp"
#include "uwsplat/medium.hpp"
#include "uwsplat/optimizer.hpp"

namespace uwsplat {

inline constexpr std::uint32_t kCheckpointMagic = 0x55575350;  // "UWSP"
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Full training state. Byte-identical save files for identical states: the
// record set and order are fixed and nothing time- or path-dependent is
// stored.
struct Checkpoint {
  GaussianCloud cloud;
  MediumParams medium;
  OptimizerState opt;
  std::uint64_t projector_seed = 0;
  std::int64_t iteration = 0;
  std::string config_json;  // verbatim snapshot of the training config
  std::string rng_state;
  std::vector<double> densify_grad_accum;
  std::vector<std::int64_t> densify_view_count;
  std::vector<double> log_gamma;  // per-view interpolation uncertainty
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}
inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class CheckpointReader {
 public:
  explicit CheckpointReader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + k]))
           << (8 * k);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + k]))
           << (8 * k);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string blob(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    require(pos_ + n <= bytes_.size(),
            "checkpoint: file truncated or corrupted");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

enum class RecordType : std::uint8_t { F64 = 0, I64 = 1, Bytes = 2 };

struct RecordWriter {
  std::string out;
  std::uint32_t count = 0;

  void header(const std::string& name, RecordType type, std::uint64_t n) {
    require(name.size() < 256, "checkpoint: record name too long");
    out.push_back(static_cast<char>(name.size()));
    out += name;
    out.push_back(static_cast<char>(type));
    put_u64(out, n);
    ++count;
  }
  void f64s(const std::string& name, const double* data, std::size_t n) {
    header(name, RecordType::F64, n);
    for (std::size_t k = 0; k < n; ++k) put_f64(out, data[k]);
  }
  void f64s(const std::string& name, const std::vector<double>& v) {
    f64s(name, v.data(), v.size());
  }
  void i64s(const std::string& name, const std::vector<std::int64_t>& v) {
    header(name, RecordType::I64, v.size());
    for (std::int64_t x : v) put_u64(out, std::bit_cast<std::uint64_t>(x));
  }
  void i64(const std::string& name, std::int64_t x) { i64s(name, {x}); }
  void bytes(const std::string& name, const std::string& s) {
    header(name, RecordType::Bytes, s.size());
    out += s;
  }
};

struct Record {
  RecordType type;
  std::vector<double> f64s;
  std::vector<std::int64_t> i64s;
  std::string bytes;
};

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  detail::RecordWriter w;
  w.i64("sh_degree", ck.cloud.sh_degree);
  w.f64s("positions", ck.cloud.positions);
  w.f64s("log_scales", ck.cloud.log_scales);
  w.f64s("rotations", ck.cloud.rotations);
  w.f64s("sh_coeffs", ck.cloud.sh_coeffs);
  w.f64s("opacity_logits", ck.cloud.opacity_logits);
  w.f64s("semantic_features", ck.cloud.semantic_features);
  const std::array<double, 9> med = ck.medium.pack();
  w.f64s("medium_params", med.data(), med.size());
  w.i64("step_count", ck.opt.step_count);
  w.f64s("m_positions", ck.opt.m_positions);
  w.f64s("v_positions", ck.opt.v_positions);
  w.f64s("m_log_scales", ck.opt.m_log_scales);
  w.f64s("v_log_scales", ck.opt.v_log_scales);
  w.f64s("m_rotations", ck.opt.m_rotations);
  w.f64s("v_rotations", ck.opt.v_rotations);
  w.f64s("m_sh", ck.opt.m_sh);
  w.f64s("v_sh", ck.opt.v_sh);
  w.f64s("m_opacity", ck.opt.m_opacity);
  w.f64s("v_opacity", ck.opt.v_opacity);
  w.f64s("m_semantic", ck.opt.m_semantic);
  w.f64s("v_semantic", ck.opt.v_semantic);
  w.f64s("m_medium", ck.opt.m_medium.data(), 9);
  w.f64s("v_medium", ck.opt.v_medium.data(), 9);
  w.i64("projector_seed", std::bit_cast<std::int64_t>(ck.projector_seed));
  w.i64("iteration", ck.iteration);
  w.bytes("config_json", ck.config_json);
  w.bytes("rng_state", ck.rng_state);
  w.f64s("densify_grad_accum", ck.densify_grad_accum);
  w.i64s("densify_view_count", ck.densify_view_count);
  w.f64s("log_gamma", ck.log_gamma);

  std::string out;
  detail::put_u32(out, kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, w.count);
  out += w.out;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "save_checkpoint: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), "save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "load_checkpoint: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  detail::CheckpointReader r(std::move(bytes));

  require(r.u32() == kCheckpointMagic,
          "load_checkpoint: " + path + " is not a checkpoint file");
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion,
          "load_checkpoint: " + path + " has version " + std::to_string(version) +
              ", this build reads version " + std::to_string(kCheckpointVersion));
  const std::uint32_t count = r.u32();

  std::map<std::string, detail::Record> records;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::size_t name_len = static_cast<unsigned char>(r.blob(1)[0]);
    const std::string name = r.blob(name_len);
    const auto type = static_cast<detail::RecordType>(
        static_cast<unsigned char>(r.blob(1)[0]));
    const std::uint64_t n = r.u64();
    detail::Record rec;
    rec.type = type;
    switch (type) {
      case detail::RecordType::F64:
        rec.f64s.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) rec.f64s.push_back(r.f64());
        break;
      case detail::RecordType::I64:
        rec.i64s.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i)
          rec.i64s.push_back(std::bit_cast<std::int64_t>(r.u64()));
        break;
      case detail::RecordType::Bytes:
        rec.bytes = r.blob(n);
        break;
      default:
        throw Error("load_checkpoint: unknown record type in " + path);
    }
    records.emplace(name, std::move(rec));
  }
  require(r.exhausted(), "load_checkpoint: trailing bytes in " + path);

  auto f64s = [&](const std::string& name) -> std::vector<double>& {
    auto it = records.find(name);
    require(it != records.end() && it->second.type == detail::RecordType::F64,
            "load_checkpoint: missing array '" + name + "'");
    return it->second.f64s;
  };
  auto i64 = [&](const std::string& name) -> std::int64_t {
    auto it = records.find(name);
    require(it != records.end() && it->second.type == detail::RecordType::I64 &&
                it->second.i64s.size() == 1,
            "load_checkpoint: missing scalar '" + name + "'");
    return it->second.i64s[0];
  };
  auto bytes_of = [&](const std::string& name) -> std::string& {
    auto it = records.find(name);
    require(it != records.end() && it->second.type == detail::RecordType::Bytes,
            "load_checkpoint: missing blob '" + name + "'");
    return it->second.bytes;
  };

  Checkpoint ck;
  ck.cloud.sh_degree = static_cast<int>(i64("sh_degree"));
  ck.cloud.positions = std::move(f64s("positions"));
  ck.cloud.log_scales = std::move(f64s("log_scales"));
  ck.cloud.rotations = std::move(f64s("rotations"));
  ck.cloud.sh_coeffs = std::move(f64s("sh_coeffs"));
  ck.cloud.opacity_logits = std::move(f64s("opacity_logits"));
  ck.cloud.semantic_features = std::move(f64s("semantic_features"));
  ck.cloud.validate();

  const auto& med = f64s("medium_params");
  require(med.size() == 9, "load_checkpoint: medium_params must hold 9 values");
  std::array<double, 9> packed;
  std::copy(med.begin(), med.end(), packed.begin());
  ck.medium = MediumParams::unpack(packed);

  ck.opt.step_count = i64("step_count");
  ck.opt.m_positions = std::move(f64s("m_positions"));
  ck.opt.v_positions = std::move(f64s("v_positions"));
  ck.opt.m_log_scales = std::move(f64s("m_log_scales"));
  ck.opt.v_log_scales = std::move(f64s("v_log_scales"));
  ck.opt.m_rotations = std::move(f64s("m_rotations"));
  ck.opt.v_rotations = std::move(f64s("v_rotations"));
  ck.opt.m_sh = std::move(f64s("m_sh"));
  ck.opt.v_sh = std::move(f64s("v_sh"));
  ck.opt.m_opacity = std::move(f64s("m_opacity"));
  ck.opt.v_opacity = std::move(f64s("v_opacity"));
  ck.opt.m_semantic = std::move(f64s("m_semantic"));
  ck.opt.v_semantic = std::move(f64s("v_semantic"));
  const auto& mm = f64s("m_medium");
  const auto& vm = f64s("v_medium");
  require(mm.size() == 9 && vm.size() == 9,
          "load_checkpoint: medium moments must hold 9 values");
  std::copy(mm.begin(), mm.end(), ck.opt.m_medium.begin());
  std::copy(vm.begin(), vm.end(), ck.opt.v_medium.begin());
  require(ck.opt.m_positions.size() == ck.cloud.positions.size() &&
              ck.opt.m_sh.size() == ck.cloud.sh_coeffs.size(),
          "load_checkpoint: optimizer state incongruent with cloud");

  ck.projector_seed = std::bit_cast<std::uint64_t>(i64("projector_seed"));
  ck.iteration = i64("iteration");
  ck.config_json = std::move(bytes_of("config_json"));
  ck.rng_state = std::move(bytes_of("rng_state"));
  ck.densify_grad_accum = std::move(f64s("densify_grad_accum"));
  {
    auto it = records.find("densify_view_count");
    require(it != records.end() && it->second.type == detail::RecordType::I64,
            "load_checkpoint: missing array 'densify_view_count'");
    ck.densify_view_count = std::move(it->second.i64s);
  }
  ck.log_gamma = std::move(f64s("log_gamma"));
  return ck;
}

}  // namespace uwsplat
