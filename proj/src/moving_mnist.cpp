#include "mklstm/moving_mnist.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mklstm/config.hpp"
#include "mklstm/io.hpp"

namespace mklstm {
namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

// 5x7 stroke glyphs for the built-in digit bank; bit 4 is the left column.
constexpr std::uint8_t kGlyphs[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

}  // namespace

void GeneratorConfig::validate() const {
  require(canvas > 0 && digit_size > 0 && digit_size <= canvas,
          "generator config: digit does not fit the canvas");
  require(frames >= 2, "generator config: need at least 2 frames");
  require(num_digits >= 1, "generator config: num_digits must be >= 1");
  require(int(speeds.size()) == num_digits,
          "generator config: speeds list must have one entry per digit (" +
              std::to_string(speeds.size()) + " given for " +
              std::to_string(num_digits) + " digits)");
  require(patch >= 1 && canvas % patch == 0,
          "generator config: patch size must divide the canvas side");
  require(jitter >= 0, "generator config: negative jitter");
  require(directions.empty() || int(directions.size()) == num_digits,
          "generator config: directions list must be empty or one per digit");
}

std::string GeneratorConfig::to_text() const {
  std::ostringstream os;
  os << "canvas=" << canvas << "\n"
     << "digit_size=" << digit_size << "\n"
     << "frames=" << frames << "\n"
     << "num_digits=" << num_digits << "\n"
     << "speeds=" << join_doubles(speeds) << "\n"
     << "jitter=" << jitter << "\n"
     << "seed=" << seed << "\n"
     << "patch=" << patch << "\n";
  if (!directions.empty()) os << "directions=" << join_doubles(directions) << "\n";
  return os.str();
}

IdxImages load_idx_images(const std::string& path) {
  io::ByteReader in(path);
  const std::uint32_t magic = in.u32_be("magic");
  if (magic != kIdxImagesMagic) {
    std::ostringstream os;
    os << path << ": bad image magic at byte offset 0: got 0x" << std::hex
       << magic << ", expected 0x" << kIdxImagesMagic;
    fail(os.str());
  }
  IdxImages out;
  out.count = int(in.u32_be("image count"));
  out.rows = int(in.u32_be("row count"));
  out.cols = int(in.u32_be("column count"));
  require(out.count >= 0 && out.rows > 0 && out.cols > 0,
          path + ": nonsensical dimensions in header");
  const std::uint64_t need =
      std::uint64_t(out.count) * out.rows * out.cols;
  if (in.remaining() != need) {
    std::ostringstream os;
    os << path << ": pixel payload at byte offset " << in.offset()
       << ": expected " << need << " bytes, found " << in.remaining();
    fail(os.str());
  }
  std::vector<std::uint8_t> raw(need);
  in.read_exact(raw.data(), need, "pixel data");
  out.pixels.resize(need);
  for (std::uint64_t i = 0; i < need; ++i)
    out.pixels[i] = float(raw[i]) / 255.0f;
  return out;
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
  io::ByteReader in(path);
  const std::uint32_t magic = in.u32_be("magic");
  if (magic != kIdxLabelsMagic) {
    std::ostringstream os;
    os << path << ": bad label magic at byte offset 0: got 0x" << std::hex
       << magic << ", expected 0x" << kIdxLabelsMagic;
    fail(os.str());
  }
  const std::uint32_t count = in.u32_be("label count");
  if (in.remaining() != count) {
    std::ostringstream os;
    os << path << ": label payload at byte offset " << in.offset()
       << ": expected " << count << " bytes, found " << in.remaining();
    fail(os.str());
  }
  std::vector<std::uint8_t> labels(count);
  in.read_exact(labels.data(), count, "label data");
  return labels;
}

void write_idx_images(const std::string& path, const IdxImages& images) {
  io::ByteWriter out(path);
  auto u32_be = [&](std::uint32_t v) {
    std::uint8_t b[4] = {std::uint8_t(v >> 24), std::uint8_t(v >> 16),
                         std::uint8_t(v >> 8), std::uint8_t(v)};
    out.write(b, 4);
  };
  u32_be(kIdxImagesMagic);
  u32_be(std::uint32_t(images.count));
  u32_be(std::uint32_t(images.rows));
  u32_be(std::uint32_t(images.cols));
  std::vector<std::uint8_t> raw(images.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    raw[i] = std::uint8_t(std::lround(std::clamp(images.pixels[i], 0.0f, 1.0f) * 255.0f));
  out.write(raw.data(), raw.size());
  out.close();
}

IdxImages crop_center(const IdxImages& src, int size) {
  require(size > 0 && size <= src.rows && size <= src.cols,
          "crop_center: crop size " + std::to_string(size) +
              " exceeds image dims " + std::to_string(src.rows) + "x" +
              std::to_string(src.cols));
  const int oy = (src.rows - size) / 2;
  const int ox = (src.cols - size) / 2;
  IdxImages out;
  out.count = src.count;
  out.rows = size;
  out.cols = size;
  out.pixels.resize(std::size_t(src.count) * size * size);
  for (int i = 0; i < src.count; ++i) {
    const float* im = src.image(i);
    float* dst = &out.pixels[std::size_t(i) * size * size];
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        dst[std::size_t(y) * size + x] =
            im[std::size_t(y + oy) * src.cols + (x + ox)];
  }
  return out;
}

IdxImages synthetic_digits(int variants_per_class, std::uint64_t seed) {
  require(variants_per_class >= 1, "synthetic_digits: need at least 1 variant");
  constexpr int kScale = 3;  // 5x7 glyph -> 15x21, inside the 22x22 center crop
  IdxImages out;
  out.count = 10 * variants_per_class;
  out.rows = 28;
  out.cols = 28;
  out.pixels.assign(std::size_t(out.count) * 28 * 28, 0.0f);
  Rng rng(seed);
  int idx = 0;
  for (int v = 0; v < variants_per_class; ++v) {
    for (int digit = 0; digit < 10; ++digit, ++idx) {
      const int sx = int(rng.next_below(5)) - 2;  // [-2, 2]
      const int sy = int(rng.next_below(3)) - 1;  // [-1, 1]
      const float intensity = float(rng.uniform(0.75, 1.0));
      float* im = &out.pixels[std::size_t(idx) * 28 * 28];
      const int oy = (28 - 7 * kScale) / 2 + sy;
      const int ox = (28 - 5 * kScale) / 2 + sx;
      for (int gy = 0; gy < 7; ++gy)
        for (int gx = 0; gx < 5; ++gx) {
          if (!((kGlyphs[digit][gy] >> (4 - gx)) & 1)) continue;
          for (int py = 0; py < kScale; ++py)
            for (int px = 0; px < kScale; ++px)
              im[std::size_t(oy + gy * kScale + py) * 28 +
                 (ox + gx * kScale + px)] = intensity;
        }
    }
  }
  return out;
}

SequenceSample generate_sequence(const GeneratorConfig& config,
                                 const IdxImages& digits) {
  config.validate();
  require(digits.count > 0, "generate_sequence: empty digit source");
  require(digits.rows == config.digit_size && digits.cols == config.digit_size,
          "generate_sequence: digit bank is " + std::to_string(digits.rows) +
              "x" + std::to_string(digits.cols) + ", config wants " +
              std::to_string(config.digit_size));

  const int canvas = config.canvas, ds = config.digit_size, T = config.frames;
  const double limit = double(canvas - ds);

  SequenceSample sample;
  sample.frames = Tensor<float>(T, canvas, canvas, 1);
  sample.flow = Tensor<float>(T, canvas, canvas, 2);
  sample.regions.assign(std::size_t(T) * canvas * canvas, 0);

  // Independent deterministic stream per digit; draw order is fixed.
  for (int d = 0; d < config.num_digits; ++d) {
    Rng rng(Rng::derive(config.seed, std::uint64_t(d)));
    DigitTrack track;
    track.digit_index = int(rng.next_below(std::uint64_t(digits.count)));
    double px = rng.uniform(0.0, limit);
    double py = rng.uniform(0.0, limit);
    track.direction = rng.uniform(0.0, 2.0 * std::numbers::pi);
    if (!config.directions.empty())
      track.direction = config.directions[std::size_t(d)];
    const double jit =
        config.jitter > 0 ? rng.uniform(-config.jitter / 2, config.jitter / 2) : 0.0;
    track.speed = std::max(0.0, config.speeds[std::size_t(d)] + jit);
    double vx = track.speed * std::cos(track.direction);
    double vy = track.speed * std::sin(track.direction);

    // one extra step so flow is defined at the last frame
    for (int t = 0; t <= T; ++t) {
      track.positions.push_back({px, py});
      track.velocities.push_back({vx, vy});
      track.raster.push_back({int(std::lround(px)), int(std::lround(py))});
      px += vx;
      py += vy;
      // reflect about the valid-area boundaries; speed magnitude is conserved
      while (px < 0.0 || px > limit) {
        if (px < 0.0) px = -px;
        else px = 2.0 * limit - px;
        vx = -vx;
      }
      while (py < 0.0 || py > limit) {
        if (py < 0.0) py = -py;
        else py = 2.0 * limit - py;
        vy = -vy;
      }
    }
    sample.tracks.push_back(std::move(track));
  }

  // Frames: paste digits in index order with a clamped sum.
  for (int t = 0; t < T; ++t) {
    for (int d = 0; d < config.num_digits; ++d) {
      const DigitTrack& track = sample.tracks[std::size_t(d)];
      const float* glyph = digits.image(track.digit_index);
      const auto [ox, oy] = track.raster[std::size_t(t)];
      for (int y = 0; y < ds; ++y)
        for (int x = 0; x < ds; ++x) {
          float& px_out = sample.frames.at(t, oy + y, ox + x, 0);
          px_out = std::min(1.0f, px_out + glyph[std::size_t(y) * ds + x]);
        }
    }
  }

  // Regions and flow: the faster digit owns overlapping pixels (ties go to
  // the lower digit id). Writing in ascending-speed order makes the last
  // writer the owner.
  std::vector<int> order(std::size_t(config.num_digits));
  for (int d = 0; d < config.num_digits; ++d) order[std::size_t(d)] = d;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double sa = sample.tracks[std::size_t(a)].speed;
    const double sb = sample.tracks[std::size_t(b)].speed;
    if (sa != sb) return sa < sb;
    return a > b;
  });
  for (int t = 0; t < T; ++t) {
    for (int d : order) {
      const DigitTrack& track = sample.tracks[std::size_t(d)];
      const float* glyph = digits.image(track.digit_index);
      const auto [ox, oy] = track.raster[std::size_t(t)];
      const auto [nx, ny] = track.raster[std::size_t(t) + 1];
      const float dx = float(nx - ox), dy = float(ny - oy);
      for (int y = 0; y < ds; ++y)
        for (int x = 0; x < ds; ++x) {
          if (glyph[std::size_t(y) * ds + x] <= 0.0f) continue;
          sample.regions[(std::size_t(t) * canvas + (oy + y)) * canvas +
                         (ox + x)] = std::uint8_t(d + 1);
          sample.flow.at(t, oy + y, ox + x, 0) = dx;
          sample.flow.at(t, oy + y, ox + x, 1) = dy;
        }
    }
  }
  return sample;
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& x, int p) {
  require(p >= 1, "patchify: patch size must be >= 1");
  require(x.shape.h % p == 0 && x.shape.w % p == 0,
          "patchify: patch " + std::to_string(p) + " does not divide dims " +
              x.shape.str());
  const int hp = x.shape.h / p, wp = x.shape.w / p, c = x.shape.c;
  Tensor<T> out(x.shape.n, hp, wp, c * p * p);
  for (int n = 0; n < x.shape.n; ++n)
    for (int i = 0; i < hp; ++i)
      for (int j = 0; j < wp; ++j)
        for (int cc = 0; cc < c; ++cc)
          for (int pr = 0; pr < p; ++pr)
            for (int pc = 0; pc < p; ++pc)
              out.at(n, i, j, cc * p * p + pr * p + pc) =
                  x.at(n, i * p + pr, j * p + pc, cc);
  return out;
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& x, int p) {
  require(p >= 1, "unpatchify: patch size must be >= 1");
  require(x.shape.c % (p * p) == 0,
          "unpatchify: channels of " + x.shape.str() +
              " are not a multiple of patch^2");
  const int c = x.shape.c / (p * p);
  Tensor<T> out(x.shape.n, x.shape.h * p, x.shape.w * p, c);
  for (int n = 0; n < x.shape.n; ++n)
    for (int i = 0; i < x.shape.h; ++i)
      for (int j = 0; j < x.shape.w; ++j)
        for (int cc = 0; cc < c; ++cc)
          for (int pr = 0; pr < p; ++pr)
            for (int pc = 0; pc < p; ++pc)
              out.at(n, i * p + pr, j * p + pc, cc) =
                  x.at(n, i, j, cc * p * p + pr * p + pc);
  return out;
}

namespace {

constexpr char kDatasetMagic[5] = {'M', 'K', 'D', 'S', '1'};
constexpr std::uint32_t kDatasetVersion = 1;

void write_f32(io::ByteWriter& out, const float* data, std::size_t n) {
  out.write(data, n * sizeof(float));
}

}  // namespace

void write_dataset(const std::string& path, const GeneratorConfig& config,
                   const std::vector<SequenceSample>& samples) {
  io::ByteWriter out(path);
  out.write(kDatasetMagic, 5);
  out.u32_le(kDatasetVersion);
  std::string header = config.to_text();
  header += "samples=" + std::to_string(samples.size()) + "\n";
  out.u32_le(std::uint32_t(header.size()));
  out.bytes(header);
  const int T = config.frames, canvas = config.canvas;
  std::vector<float> reg_f32(std::size_t(T) * canvas * canvas);
  for (const SequenceSample& s : samples) {
    write_f32(out, s.frames.data.data(), s.frames.data.size());
    write_f32(out, s.flow.data.data(), s.flow.data.size());
    for (std::size_t i = 0; i < reg_f32.size(); ++i)
      reg_f32[i] = float(s.regions[i]);
    write_f32(out, reg_f32.data(), reg_f32.size());
    // tracks: (digit, step, [px, py, vx, vy])
    for (const DigitTrack& tr : s.tracks)
      for (int t = 0; t <= T; ++t) {
        const float row[4] = {float(tr.positions[std::size_t(t)][0]),
                              float(tr.positions[std::size_t(t)][1]),
                              float(tr.velocities[std::size_t(t)][0]),
                              float(tr.velocities[std::size_t(t)][1])};
        write_f32(out, row, 4);
      }
  }
  out.close();
}

std::vector<SequenceSample> read_dataset(const std::string& path,
                                         GeneratorConfig* config_out) {
  io::ByteReader in(path);
  char magic[5];
  in.read_exact(magic, 5, "magic");
  require(std::equal(magic, magic + 5, kDatasetMagic),
          path + ": bad dataset magic at byte offset 0");
  const std::uint32_t version = in.u32_le("version");
  require(version == kDatasetVersion,
          path + ": unsupported dataset version " + std::to_string(version));
  const std::uint32_t header_len = in.u32_le("header length");
  const std::string header = in.bytes(header_len, "header");
  const ConfigMap cfg = ConfigMap::from_text(header);

  GeneratorConfig config;
  config.canvas = cfg.get_int("canvas", config.canvas);
  config.digit_size = cfg.get_int("digit_size", config.digit_size);
  config.frames = cfg.get_int("frames", config.frames);
  config.num_digits = cfg.get_int("num_digits", config.num_digits);
  config.speeds = cfg.get_doubles("speeds", config.speeds);
  config.jitter = cfg.get_double("jitter", config.jitter);
  config.directions = cfg.get_doubles("directions", config.directions);
  config.seed = cfg.get_u64("seed", config.seed);
  config.patch = cfg.get_int("patch", config.patch);
  const int count = cfg.get_int("samples", 0);
  if (config_out != nullptr) *config_out = config;

  const int T = config.frames, canvas = config.canvas, D = config.num_digits;
  std::vector<SequenceSample> samples;
  samples.reserve(std::size_t(count));
  std::vector<float> reg_f32(std::size_t(T) * canvas * canvas);
  for (int i = 0; i < count; ++i) {
    SequenceSample s;
    s.frames = Tensor<float>(T, canvas, canvas, 1);
    s.flow = Tensor<float>(T, canvas, canvas, 2);
    in.read_exact(s.frames.data.data(), s.frames.data.size() * sizeof(float),
                  "frames");
    in.read_exact(s.flow.data.data(), s.flow.data.size() * sizeof(float),
                  "flow");
    in.read_exact(reg_f32.data(), reg_f32.size() * sizeof(float), "regions");
    s.regions.resize(reg_f32.size());
    for (std::size_t j = 0; j < reg_f32.size(); ++j)
      s.regions[j] = std::uint8_t(reg_f32[j]);
    for (int d = 0; d < D; ++d) {
      DigitTrack tr;
      for (int t = 0; t <= T; ++t) {
        float row[4];
        in.read_exact(row, sizeof(row), "tracks");
        tr.positions.push_back({double(row[0]), double(row[1])});
        tr.velocities.push_back({double(row[2]), double(row[3])});
        tr.raster.push_back(
            {int(std::lround(row[0])), int(std::lround(row[1]))});
      }
      tr.speed = std::hypot(tr.velocities[0][0], tr.velocities[0][1]);
      tr.direction = std::atan2(tr.velocities[0][1], tr.velocities[0][0]);
      s.tracks.push_back(std::move(tr));
    }
    samples.push_back(std::move(s));
  }
  require(in.remaining() == 0,
          path + ": " + std::to_string(in.remaining()) +
              " unexpected trailing bytes");
  return samples;
}

void dump_frames_pgm(const std::string& dir, const std::string& prefix,
                     const SequenceSample& sample) {
  io::make_dirs(dir);
  const int T = sample.frames.shape.n;
  const int canvas = sample.frames.shape.h;
  for (int t = 0; t < T; ++t) {
    std::ostringstream name;
    name << dir << "/" << prefix << "_t";
    if (t < 10) name << "0";
    name << t << ".pgm";
    io::write_pgm(name.str(), &sample.frames.data[sample.frames.index(t, 0, 0, 0)],
                  canvas, canvas);
  }
}

template Tensor<float> patchify<float>(const Tensor<float>&, int);
template Tensor<double> patchify<double>(const Tensor<double>&, int);
template Tensor<float> unpatchify<float>(const Tensor<float>&, int);
template Tensor<double> unpatchify<double>(const Tensor<double>&, int);

}  // namespace mklstm
