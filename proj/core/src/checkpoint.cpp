#include "gsurf/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

#include "gsurf/errors.hpp"

namespace gsurf {
namespace {

constexpr char kMagic[4] = {'G', 'S', 'R', 'F'};
constexpr std::uint32_t kVersion = 1;

// Fixed-width little-endian scalars; doubles are stored by bit pattern.
struct Writer {
  std::vector<unsigned char> buf;

  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    raw(b, 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    raw(b, 8);
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void u8(bool v) { buf.push_back(v ? 1 : 0); }

  void doubles(const double* p, std::size_t n) {
    u64(n);
    for (std::size_t i = 0; i < n; ++i) f64(p[i]);
  }
  template <typename V>
  void vecs(const std::vector<V>& v, int dim) {
    u64(v.size() * dim);
    for (const auto& e : v)
      for (int d = 0; d < dim; ++d) f64(e[d]);
  }
  void sh_array(const std::vector<ShCoeffs>& v) {
    u64(v.size() * kShCoeffCount);
    for (const auto& c : v) raw(c.data(), sizeof(double) * kShCoeffCount);
  }
};

struct Reader {
  const unsigned char* p;
  std::size_t left;
  const std::string& path;

  void need(std::size_t n) {
    if (left < n) throw IoError(IoErrorKind::truncated, path, "checkpoint ends early");
  }
  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, p, n);
    p += n;
    left -= n;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  bool u8() {
    need(1);
    bool v = *p != 0;
    ++p;
    --left;
    return v;
  }

  void expect_len(std::uint64_t got, std::uint64_t want, const char* what) {
    if (got != want)
      throw IoError(IoErrorKind::dimension_mismatch, path,
                    std::string(what) + " length does not match surfel count");
  }
  void doubles(std::vector<double>& out, std::uint64_t want, const char* what) {
    expect_len(u64(), want, what);
    out.resize(want);
    for (auto& v : out) v = f64();
  }
  template <typename V>
  void vecs(std::vector<V>& out, int dim, std::uint64_t n, const char* what) {
    expect_len(u64(), n * dim, what);
    out.resize(n);
    for (auto& e : out)
      for (int d = 0; d < dim; ++d) e[d] = f64();
  }
  void sh_array(std::vector<ShCoeffs>& out, std::uint64_t n, const char* what) {
    expect_len(u64(), n * kShCoeffCount, what);
    out.resize(n);
    for (auto& c : out) raw(c.data(), sizeof(double) * kShCoeffCount);
  }
};

// threads, background and the median-depth switch are runtime concerns and
// deliberately not part of the snapshot.
void put_config(Writer& w, const TrainConfig& c) {
  w.i64(c.total_iters);
  w.f64(c.lr_position_start);
  w.f64(c.lr_position_end);
  w.f64(c.lr_rotation);
  w.f64(c.lr_scale);
  w.f64(c.lr_opacity);
  w.f64(c.lr_sh);
  w.f64(c.lambda_c_end);
  w.f64(c.lambda_o);
  w.f64(c.lambda_m);
  w.f64(c.beta1);
  w.f64(c.beta2);
  w.f64(c.eps);
  w.i64(c.warmup_quarter_until);
  w.i64(c.warmup_half_until);
  w.i64(c.densify_start);
  w.i64(c.densify_stop);
  w.i64(c.densify_interval);
  w.f64(c.densify_grad_threshold);
  w.f64(c.split_scale_fraction);
  w.f64(c.split_shrink);
  w.f64(c.prune_opacity);
  w.f64(c.prune_scale_fraction);
  w.u64(c.seed);
  w.u8(c.use_consistency);
  w.u8(c.use_prior);
  w.u8(c.use_opacity_loss);
  w.u8(c.use_mask_loss);
  w.i64(c.render.tile_size);
  w.f64(c.render.alpha_min);
  w.f64(c.render.alpha_max);
  w.f64(c.render.t_stop);
  w.f64(c.render.coverage_eps);
  w.f64(c.render.lowpass);
  w.f64(c.render.cond_limit);
  w.f64(c.render.near_clip);
  w.f64(c.render.normal_grad_scale);
}

void get_config(Reader& r, TrainConfig& c) {
  c.total_iters = static_cast<int>(r.i64());
  c.lr_position_start = r.f64();
  c.lr_position_end = r.f64();
  c.lr_rotation = r.f64();
  c.lr_scale = r.f64();
  c.lr_opacity = r.f64();
  c.lr_sh = r.f64();
  c.lambda_c_end = r.f64();
  c.lambda_o = r.f64();
  c.lambda_m = r.f64();
  c.beta1 = r.f64();
  c.beta2 = r.f64();
  c.eps = r.f64();
  c.warmup_quarter_until = static_cast<int>(r.i64());
  c.warmup_half_until = static_cast<int>(r.i64());
  c.densify_start = static_cast<int>(r.i64());
  c.densify_stop = static_cast<int>(r.i64());
  c.densify_interval = static_cast<int>(r.i64());
  c.densify_grad_threshold = r.f64();
  c.split_scale_fraction = r.f64();
  c.split_shrink = r.f64();
  c.prune_opacity = r.f64();
  c.prune_scale_fraction = r.f64();
  c.seed = r.u64();
  c.use_consistency = r.u8();
  c.use_prior = r.u8();
  c.use_opacity_loss = r.u8();
  c.use_mask_loss = r.u8();
  c.render.tile_size = static_cast<int>(r.i64());
  c.render.alpha_min = r.f64();
  c.render.alpha_max = r.f64();
  c.render.t_stop = r.f64();
  c.render.coverage_eps = r.f64();
  c.render.lowpass = r.f64();
  c.render.cond_limit = r.f64();
  c.render.near_clip = r.f64();
  c.render.normal_grad_scale = r.f64();
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  if (!c.state.surfels.consistent() ||
      !c.state.opt.consistent(c.state.surfels.count()))
    throw IoError(IoErrorKind::write_failure, path, "inconsistent checkpoint state");

  Writer w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  put_config(w, c.config);

  const SurfelSet& s = c.state.surfels;
  const std::uint64_t n = s.count();
  w.u64(n);
  w.vecs(s.position, 3);
  w.vecs(s.rotation, 4);
  w.vecs(s.log_scale, 2);
  w.doubles(s.opacity_logit.data(), n);
  w.sh_array(s.sh);

  const OptimizerState& o = c.state.opt;
  w.i64(o.step);
  w.vecs(o.m_position, 3);
  w.vecs(o.v_position, 3);
  w.vecs(o.m_rotation, 4);
  w.vecs(o.v_rotation, 4);
  w.vecs(o.m_log_scale, 2);
  w.vecs(o.v_log_scale, 2);
  w.doubles(o.m_opacity.data(), n);
  w.doubles(o.v_opacity.data(), n);
  w.sh_array(o.m_sh);
  w.sh_array(o.v_sh);

  w.i64(c.state.iter);
  w.u64(c.seed);

  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, w.buf.data(), static_cast<uInt>(w.buf.size())));
  w.u32(crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoErrorKind::write_failure, path, "cannot open for writing");
  out.write(reinterpret_cast<const char*>(w.buf.data()),
            static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw IoError(IoErrorKind::write_failure, path, "short write");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::missing_file, path, "cannot open");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

  if (bytes.size() < 12)
    throw IoError(IoErrorKind::truncated, path, "checkpoint ends early");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IoError(IoErrorKind::bad_magic, path, "not a checkpoint file");

  const std::size_t payload = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<std::uint32_t>(bytes[payload + i]) << (8 * i);
  const auto computed = static_cast<std::uint32_t>(
      crc32(0L, bytes.data(), static_cast<uInt>(payload)));
  if (stored != computed)
    throw IoError(IoErrorKind::checksum_mismatch, path, "crc32 mismatch");

  Reader r{bytes.data() + 4, payload - 4, path};
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw IoError(IoErrorKind::version_mismatch, path,
                  "unsupported checkpoint version " + std::to_string(version));

  Checkpoint c;
  get_config(r, c.config);

  const std::uint64_t n = r.u64();
  SurfelSet& s = c.state.surfels;
  r.vecs(s.position, 3, n, "position");
  r.vecs(s.rotation, 4, n, "rotation");
  r.vecs(s.log_scale, 2, n, "log_scale");
  r.doubles(s.opacity_logit, n, "opacity");
  r.sh_array(s.sh, n, "sh");

  OptimizerState& o = c.state.opt;
  o.step = r.i64();
  r.vecs(o.m_position, 3, n, "m_position");
  r.vecs(o.v_position, 3, n, "v_position");
  r.vecs(o.m_rotation, 4, n, "m_rotation");
  r.vecs(o.v_rotation, 4, n, "v_rotation");
  r.vecs(o.m_log_scale, 2, n, "m_log_scale");
  r.vecs(o.v_log_scale, 2, n, "v_log_scale");
  r.doubles(o.m_opacity, n, "m_opacity");
  r.doubles(o.v_opacity, n, "v_opacity");
  r.sh_array(o.m_sh, n, "m_sh");
  r.sh_array(o.v_sh, n, "v_sh");

  c.state.iter = static_cast<int>(r.i64());
  c.seed = r.u64();
  if (r.left != 0)
    throw IoError(IoErrorKind::truncated, path, "trailing bytes after checkpoint");
  return c;
}

}  // namespace gsurf
