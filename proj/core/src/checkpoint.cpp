#include "diffusion/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace diffusion {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'I', 'F', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kEndianTag = 0x01020304u;

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i64(std::int64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t n) : data_(data), n_(n) {}
  void raw(void* p, std::size_t n) {
    if (pos_ + n > n_) throw CheckpointError(CheckpointStatus::truncated, "checkpoint truncated");
    std::memcpy(p, data_ + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
  std::int64_t i64() { std::int64_t v; raw(&v, 8); return v; }
  double f64() { double v; raw(&v, 8); return v; }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > n_ - pos_) throw CheckpointError(CheckpointStatus::truncated, "checkpoint truncated");
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const unsigned char* data_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.u32(kEndianTag);

  const Schedule& s = ckpt.spec.schedule;
  w.u8(s.kind == ProcessKind::gaussian ? 0 : 1);
  w.u8(s.mode == ScheduleMode::fixed_rule ? 0 : 1);
  w.i64(s.steps);
  w.i64(ckpt.spec.dim);
  w.f64(s.beta1);
  for (double b : s.beta) w.f64(b);
  w.u8(s.u.empty() ? 0 : 1);
  for (double u : s.u) w.f64(u);

  const ModelDescriptor& md = ckpt.model_desc;
  w.u8(static_cast<std::uint8_t>(md.family));
  w.u8(md.readout == ReadoutMode::per_step ? 0 : 1);
  w.u8(md.output == GaussianOutputMode::transform ? 0 : 1);
  w.i64(md.bumps);
  w.i64(static_cast<std::int64_t>(md.hidden.size()));
  for (int h : md.hidden) w.i64(h);

  w.u64(ckpt.train_step);
  w.u64(ckpt.seed);
  w.f64(ckpt.standardization);

  w.u32(static_cast<std::uint32_t>(ckpt.params.layout().size()));
  for (const auto& e : ckpt.params.layout()) {
    w.str(e.name);
    w.i64(e.rows);
    w.i64(e.cols);
    w.raw(ckpt.params.values().data() + e.offset, e.count() * sizeof(double));
  }

  const std::uint64_t checksum = fnv1a64(w.bytes().data(), w.bytes().size());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes().data()),
            static_cast<std::streamsize>(w.bytes().size()));
  out.write(reinterpret_cast<const char*>(&checksum), 8);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + 16)
    throw CheckpointError(CheckpointStatus::truncated, "checkpoint too small");

  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(CheckpointStatus::bad_magic, "not a checkpoint file");

  const std::size_t payload = bytes.size() - 8;
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + payload, 8);
  if (fnv1a64(bytes.data(), payload) != stored)
    throw CheckpointError(CheckpointStatus::checksum_mismatch, "checkpoint checksum mismatch");

  Reader r(bytes.data(), payload);
  char magic[8];
  r.raw(magic, 8);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw CheckpointError(CheckpointStatus::version_mismatch,
                          "unsupported checkpoint version " + std::to_string(version));
  if (r.u32() != kEndianTag)
    throw CheckpointError(CheckpointStatus::malformed, "bad endianness tag");

  Checkpoint ckpt;
  Schedule& s = ckpt.spec.schedule;
  s.kind = r.u8() == 0 ? ProcessKind::gaussian : ProcessKind::binomial;
  s.mode = r.u8() == 0 ? ScheduleMode::fixed_rule : ScheduleMode::learnable;
  s.steps = static_cast<int>(r.i64());
  ckpt.spec.dim = static_cast<int>(r.i64());
  if (s.steps < 1 || ckpt.spec.dim < 1)
    throw CheckpointError(CheckpointStatus::malformed, "bad schedule dimensions");
  s.beta1 = r.f64();
  s.beta.resize(s.steps);
  for (double& b : s.beta) b = r.f64();
  if (r.u8()) {
    s.u.resize(s.steps - 1);
    for (double& u : s.u) u = r.f64();
  }
  {
    // Rebuild cumulative products from the stored rates.
    double acc = 1.0;
    s.cum.resize(s.steps);
    for (int i = 0; i < s.steps; ++i) {
      acc *= 1.0 - s.beta[i];
      s.cum[i] = acc;
    }
  }

  ModelDescriptor& md = ckpt.model_desc;
  const std::uint8_t fam = r.u8();
  if (fam > 2) throw CheckpointError(CheckpointStatus::malformed, "bad model family");
  md.family = static_cast<ModelFamily>(fam);
  md.readout = r.u8() == 0 ? ReadoutMode::per_step : ReadoutMode::bump;
  md.output = r.u8() == 0 ? GaussianOutputMode::transform : GaussianOutputMode::direct;
  md.bumps = static_cast<int>(r.i64());
  const std::int64_t nh = r.i64();
  if (nh < 0 || nh > 64) throw CheckpointError(CheckpointStatus::malformed, "bad hidden count");
  md.hidden.resize(nh);
  for (int& h : md.hidden) h = static_cast<int>(r.i64());

  ckpt.train_step = r.u64();
  ckpt.seed = r.u64();
  ckpt.standardization = r.f64();

  const std::uint32_t entries = r.u32();
  for (std::uint32_t i = 0; i < entries; ++i) {
    const std::string name = r.str();
    const int rows = static_cast<int>(r.i64());
    const int cols = static_cast<int>(r.i64());
    if (rows < 1 || cols < 1)
      throw CheckpointError(CheckpointStatus::malformed, "bad parameter entry shape");
    ckpt.params.add(name, rows, cols);
    r.raw(ckpt.params.data(name), static_cast<std::size_t>(rows) * cols * sizeof(double));
  }
  if (r.pos() != payload)
    throw CheckpointError(CheckpointStatus::malformed, "trailing bytes in checkpoint");
  return ckpt;
}

std::unique_ptr<ReverseModel> model_from_checkpoint(const Checkpoint& ckpt) {
  Rng rng(0);
  std::unique_ptr<ReverseModel> model = make_model(ckpt.spec, ckpt.model_desc, rng, nullptr);
  ParameterVector& dst = model->params();
  const auto& saved = ckpt.params.layout();
  const auto& fresh = dst.layout();
  if (saved.size() != fresh.size())
    throw CheckpointError(CheckpointStatus::malformed, "parameter layout mismatch");
  for (std::size_t i = 0; i < saved.size(); ++i) {
    if (saved[i].name != fresh[i].name || saved[i].rows != fresh[i].rows ||
        saved[i].cols != fresh[i].cols)
      throw CheckpointError(CheckpointStatus::malformed,
                            "parameter layout mismatch at " + saved[i].name);
  }
  dst.values() = ckpt.params.values();
  return model;
}

}  // namespace diffusion
