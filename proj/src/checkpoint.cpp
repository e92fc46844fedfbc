#include "admp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace admp {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'M', 'P'};
constexpr std::uint64_t kMaxLength = std::uint64_t{1} << 32;

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out.append(s);
  }
  void tensor(const Tensor& t) {
    u64(t.rank());
    for (std::size_t d : t.shape()) u64(d);
    for (double v : t.values()) f64(v);
  }
  void params(const ParamSet& p) {
    u64(p.size());
    for (const auto& [name, t] : p) {
      str(name);
      tensor(t);
    }
  }
  std::string out;

 private:
  void le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = length();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const std::uint64_t rank = length();
    if (rank > 8) corrupt("tensor rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      shape.push_back(length());
      count *= shape.back();
      if (count > kMaxLength) corrupt("tensor too large");
    }
    need(count * 8);
    std::vector<double> values(count);
    for (double& v : values) v = f64();
    return Tensor(shape, std::move(values));
  }
  ParamSet params() {
    ParamSet p;
    const std::uint64_t n = length();
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string name = str();
      p[name] = tensor();
    }
    return p;
  }
  void magic() {
    need(4);
    if (std::memcmp(data_.data(), kMagic, 4) != 0) {
      throw CheckpointError(CheckpointError::Kind::format, "not a checkpoint file (bad magic header)");
    }
    pos_ = 4;
  }
  bool done() const { return pos_ == data_.size(); }
  [[noreturn]] static void corrupt(const std::string& what) {
    throw CheckpointError(CheckpointError::Kind::corrupt, "corrupt checkpoint: " + what);
  }

 private:
  std::uint64_t length() {
    const std::uint64_t n = u64();
    if (n > kMaxLength) corrupt("implausible length " + std::to_string(n));
    return n;
  }
  void need(std::uint64_t n) {
    if (n > data_.size() - pos_) corrupt("file is truncated");
  }
  std::uint64_t le(int bytes) {
    need(static_cast<std::uint64_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t{static_cast<unsigned char>(data_[pos_ + i])} << (8 * i);
    pos_ += bytes;
    return v;
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state, const CheckpointMeta& meta) {
  Writer w;
  w.out.append(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(meta.variant);
  w.str(meta.spec_hash);
  w.u64(state.step);
  w.str(state.rng.state());
  w.params(state.theta);
  w.params(state.phi);
  w.params(state.xi);
  w.u64(state.optimizers.size());
  for (const auto& [scope, opt] : state.optimizers) {
    w.str(scope);
    w.u64(opt.step);
    w.u64(opt.moments.size());
    for (const auto& [name, m] : opt.moments) {
      w.str(name);
      w.tensor(m.first);
      w.tensor(m.second);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot write checkpoint '" + path + "'");
  out.write(w.out.data(), static_cast<std::streamsize>(w.out.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "failed writing checkpoint '" + path + "'");
}

TrainState load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint '" + path + "'");
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));
  r.magic();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::version, "checkpoint format version " + std::to_string(version) +
                                                              " is not supported (expected " +
                                                              std::to_string(kCheckpointVersion) + ")");
  }
  CheckpointMeta m;
  m.variant = r.str();
  m.spec_hash = r.str();
  TrainState s;
  s.step = r.u64();
  const std::string rng_state = r.str();
  try {
    s.rng.set_state(rng_state);
  } catch (const std::exception&) {
    Reader::corrupt("unreadable RNG state");
  }
  s.theta = r.params();
  s.phi = r.params();
  s.xi = r.params();
  const std::uint64_t scopes = r.u64();
  for (std::uint64_t i = 0; i < scopes; ++i) {
    const std::string scope = r.str();
    OptimizerState& opt = s.optimizers[scope];
    opt.step = r.u64();
    const std::uint64_t n = r.u64();
    for (std::uint64_t k = 0; k < n; ++k) {
      const std::string name = r.str();
      Moments mo;
      mo.first = r.tensor();
      mo.second = r.tensor();
      opt.moments[name] = std::move(mo);
    }
  }
  if (!r.done()) Reader::corrupt("trailing bytes");
  if (meta) *meta = m;
  return s;
}

std::vector<std::string> shape_mismatches(const ParamSet& expected, const ParamSet& actual) {
  std::vector<std::string> out;
  for (const auto& [name, t] : expected) {
    auto it = actual.find(name);
    if (it == actual.end() || it->second.shape() != t.shape()) out.push_back(name);
  }
  for (const auto& [name, t] : actual)
    if (!expected.count(name)) out.push_back(name);
  return out;
}

}  // namespace admp
