#include "lcodom/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

namespace lcodom {
namespace {

class Writer {
 public:
  void bytes(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }

  template <typename U>
  void uint(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }

  void f64(double value) { uint(std::bit_cast<std::uint64_t>(value)); }

  void f32_array(const float* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(data, n * sizeof(float));
    } else {
      for (std::size_t i = 0; i < n; ++i) uint(std::bit_cast<std::uint32_t>(data[i]));
    }
  }

  void string(const std::string& s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
  }

  template <typename U>
  U uint(const char* what) {
    need(sizeof(U), what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return value;
  }

  double f64(const char* what) { return std::bit_cast<double>(uint<std::uint64_t>(what)); }

  void f32_array(float* data, std::size_t n, const char* what) {
    if (n > (in_.size() - pos_) / sizeof(float)) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(data, in_.data() + pos_, n * sizeof(float));
      pos_ += n * sizeof(float);
    } else {
      for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(uint<std::uint32_t>(what));
    }
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

OptimizerSnapshot snapshot(const Adam<float>& adam) {
  return {adam.options(), adam.step_count(), adam.first_moments(), adam.second_moments()};
}

Adam<float> restore_adam(const OptimizerSnapshot& snap) {
  Adam<float> adam(snap.options);
  adam.restore(snap.step, snap.m, snap.v);
  return adam;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.uint(kCheckpointVersion);
  w.uint(static_cast<std::uint64_t>(ckpt.metadata.size()));
  w.bytes(ckpt.metadata.data(), ckpt.metadata.size());
  w.uint(ckpt.params.seed());
  w.uint(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    w.string(p.name);
    w.uint(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.uint(static_cast<std::uint64_t>(d));
    w.f32_array(p.value.data(), p.value.size());
  }
  w.uint(static_cast<std::uint8_t>(ckpt.optimizer ? 1 : 0));
  if (ckpt.optimizer) {
    const auto& opt = *ckpt.optimizer;
    if (opt.m.size() != ckpt.params.size() || opt.v.size() != ckpt.params.size()) {
      throw CheckpointError("optimizer state does not match parameter count");
    }
    w.uint(opt.step);
    w.f64(opt.options.lr);
    w.f64(opt.options.beta1);
    w.f64(opt.options.beta2);
    w.f64(opt.options.epsilon);
    for (std::size_t i = 0; i < opt.m.size(); ++i) {
      if (opt.m[i].shape() != ckpt.params[i].value.shape() || opt.v[i].shape() != ckpt.params[i].value.shape()) {
        throw CheckpointError("optimizer moment shape mismatch for '" + ckpt.params[i].name + "'");
      }
      w.f32_array(opt.m[i].data(), opt.m[i].size());
      w.f32_array(opt.v[i].data(), opt.v[i].size());
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof(kCheckpointMagic), "magic") != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = r.uint<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto meta_len = r.uint<std::uint64_t>("metadata length");
  r.need(meta_len, "metadata");
  Checkpoint ckpt{r.bytes(meta_len, "metadata"), ParamStore<float>(r.uint<std::uint64_t>("seed")), std::nullopt};

  const auto count = r.uint<std::uint32_t>("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.uint<std::uint32_t>("name length");
    std::string name = r.bytes(name_len, "parameter name");
    const auto rank = r.uint<std::uint32_t>("rank");
    if (rank == 0 || rank > 8) throw CheckpointError("bad rank for '" + name + "'");
    Shape shape(rank);
    std::uint64_t total = 1;
    for (auto& d : shape) {
      const auto dim = r.uint<std::uint64_t>("dimension");
      if (dim == 0 || dim > bytes.size() || total > bytes.size() / dim) {
        throw CheckpointError("bad dimension for '" + name + "'");
      }
      total *= dim;
      d = static_cast<std::size_t>(dim);
    }
    Tensor32 value(shape);
    r.f32_array(value.data(), value.size(), "parameter values");
    if (ckpt.params.contains(name)) throw CheckpointError("duplicate parameter '" + name + "'");
    ckpt.params.add(std::move(name), std::move(value));
  }

  const auto has_opt = r.uint<std::uint8_t>("optimizer flag");
  if (has_opt > 1) throw CheckpointError("bad optimizer flag");
  if (has_opt == 1) {
    OptimizerSnapshot opt;
    opt.step = r.uint<std::uint64_t>("optimizer step");
    opt.options.lr = r.f64("lr");
    opt.options.beta1 = r.f64("beta1");
    opt.options.beta2 = r.f64("beta2");
    opt.options.epsilon = r.f64("epsilon");
    for (const auto& p : ckpt.params) {
      Tensor32 m(p.value.shape());
      Tensor32 v(p.value.shape());
      r.f32_array(m.data(), m.size(), "first moment");
      r.f32_array(v.data(), v.size(), "second moment");
      opt.m.push_back(std::move(m));
      opt.v.push_back(std::move(v));
    }
    ckpt.optimizer = std::move(opt);
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string data = serialize_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw CheckpointError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw CheckpointError("cannot move checkpoint into place at " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize_checkpoint(ss.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace lcodom
