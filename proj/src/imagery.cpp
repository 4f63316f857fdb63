#include "pursuit/imagery.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>

namespace pursuit {

PgmError::PgmError(const std::string& what, std::size_t offset)
    : std::runtime_error("pgm: " + what + " at byte " + std::to_string(offset)), offset_(offset) {}

namespace {

class PgmCursor {
 public:
  explicit PgmCursor(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }
  unsigned char peek() const { return static_cast<unsigned char>(bytes_[pos_]); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  unsigned char take() { return static_cast<unsigned char>(bytes_[pos_++]); }

  void skip_space_and_comments() {
    while (!at_end()) {
      const unsigned char c = peek();
      if (c == '#') {
        while (!at_end() && peek() != '\n' && peek() != '\r') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  unsigned long read_uint(const char* what) {
    skip_space_and_comments();
    if (at_end()) throw PgmError(std::string("unexpected end of data reading ") + what, pos_);
    if (!std::isdigit(peek())) throw PgmError(std::string("expected digits for ") + what, pos_);
    unsigned long v = 0;
    while (!at_end() && std::isdigit(peek())) {
      v = v * 10 + static_cast<unsigned long>(take() - '0');
      if (v > 0xFFFFFFFFul) throw PgmError(std::string("value too large for ") + what, pos_);
    }
    return v;
  }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage load_pgm(std::span<const std::byte> bytes) {
  PgmCursor cur(bytes);
  if (cur.remaining() < 2) throw PgmError("missing magic number", cur.pos());
  if (cur.take() != 'P') throw PgmError("bad magic number", 0);
  const unsigned char kind = cur.take();
  if (kind != '5' && kind != '2') throw PgmError("unsupported magic number (want P5 or P2)", 1);
  const bool binary = kind == '5';

  const unsigned long width = cur.read_uint("width");
  const unsigned long height = cur.read_uint("height");
  const std::size_t maxval_pos = cur.pos();
  const unsigned long maxval = cur.read_uint("maxval");
  if (width == 0 || height == 0) throw PgmError("zero image dimension", maxval_pos);
  if (maxval == 0 || maxval > 65535) throw PgmError("unsupported max value " + std::to_string(maxval), maxval_pos);

  GrayImage image(static_cast<Index>(height), static_cast<Index>(width));
  const auto scale = static_cast<double>(maxval);
  const std::size_t count = width * height;

  if (binary) {
    if (cur.at_end() || !std::isspace(cur.peek())) throw PgmError("missing whitespace after header", cur.pos());
    cur.take();
    const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
    const std::size_t needed = count * sample_bytes;
    if (cur.remaining() < needed) throw PgmError("truncated payload", cur.pos() + cur.remaining());
    for (std::size_t i = 0; i < count; ++i) {
      unsigned long v = cur.take();
      if (sample_bytes == 2) v = (v << 8) | cur.take();
      if (v > maxval) throw PgmError("sample exceeds max value", cur.pos() - sample_bytes);
      image(static_cast<Index>(i / width), static_cast<Index>(i % width)) = static_cast<double>(v) / scale;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t at = cur.pos();
      cur.skip_space_and_comments();
      if (cur.at_end()) throw PgmError("truncated payload", cur.pos());
      const unsigned long v = cur.read_uint("sample");
      if (v > maxval) throw PgmError("sample exceeds max value", at);
      image(static_cast<Index>(i / width), static_cast<Index>(i % width)) = static_cast<double>(v) / scale;
    }
  }
  return image;
}

GrayImage load_pgm(std::string_view bytes) {
  return load_pgm(std::as_bytes(std::span<const char>(bytes.data(), bytes.size())));
}

GrayImage read_pgm_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open image " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return load_pgm(buf.str());
  } catch (const PgmError& e) {
    throw PgmError(path.string() + ": " + e.what(), e.offset());
  }
}

std::string save_pgm(const GrayImage& image) {
  std::string out = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(image.size()));
  for (Index r = 0; r < image.rows(); ++r)
    for (Index c = 0; c < image.cols(); ++c) {
      const double v = std::clamp(image(r, c), 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  return out;
}

void write_pgm_file(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write image " + path.string());
  const std::string bytes = save_pgm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

GrayImage rescale_to_unit(const GrayImage& image) {
  const double lo = image.minCoeff();
  const double hi = image.maxCoeff();
  if (hi - lo <= 0.0) return GrayImage::Constant(image.rows(), image.cols(), 0.5);
  return ((image.array() - lo) / (hi - lo)).matrix();
}

GrayImage synth_texture(std::uint64_t seed, Index width, Index height) {
  if (width < Units::fovea_px || height < Units::fovea_px)
    throw std::invalid_argument("synth_texture: dimensions must be at least 55x55");

  Rng rng(derive_seed(seed, "texture"));
  GrayImage image = GrayImage::Zero(height, width);
  std::vector<unsigned char> filled(static_cast<std::size_t>(width * height), 0);
  std::size_t remaining = filled.size();

  // Radii follow p(r) ~ r^-3 on [r_min, r_max], the scale-invariant dead-leaves law.
  const double r_min = 1.0;
  const double r_max = static_cast<double>(std::min(width, height)) / 4.0;
  const double a = 1.0 / (r_min * r_min);
  const double b = 1.0 / (r_max * r_max);

  // Leaves are laid front to back: each disk only paints pixels not yet covered.
  const std::size_t max_leaves = 64 * filled.size();
  for (std::size_t leaf = 0; leaf < max_leaves && remaining > 0; ++leaf) {
    const double radius = 1.0 / std::sqrt(a - rng.uniform() * (a - b));
    const double cx = rng.uniform(0.0, static_cast<double>(width));
    const double cy = rng.uniform(0.0, static_cast<double>(height));
    const double shade = rng.uniform();
    const long x0 = static_cast<long>(std::floor(cx - radius));
    const long x1 = static_cast<long>(std::ceil(cx + radius));
    const long y0 = static_cast<long>(std::floor(cy - radius));
    const long y1 = static_cast<long>(std::ceil(cy + radius));
    for (long y = y0; y <= y1; ++y) {
      for (long x = x0; x <= x1; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double dy = static_cast<double>(y) + 0.5 - cy;
        if (dx * dx + dy * dy > radius * radius) continue;
        const Index wy = ((y % height) + height) % height;
        const Index wx = ((x % width) + width) % width;
        const std::size_t k = static_cast<std::size_t>(wy * width + wx);
        if (filled[k]) continue;
        filled[k] = 1;
        image(wy, wx) = shade;
        --remaining;
      }
    }
  }
  for (std::size_t k = 0; k < filled.size(); ++k)
    if (!filled[k]) image.data()[k] = rng.uniform();
  return image;
}

GrayImage normalize_contrast(const GrayImage& image) {
  const double mean = image.mean();
  const double var = (image.array() - mean).square().mean();
  if (var <= 0.0) return GrayImage::Zero(image.rows(), image.cols());
  return ((image.array() - mean) / std::sqrt(var)).matrix();
}

double sample_bilinear(const GrayImage& image, double x, double y) {
  const Index w = image.cols();
  const Index h = image.rows();
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const double tx = x - fx0;
  const double ty = y - fy0;
  auto wrap = [](double v, Index n) {
    const double m = std::fmod(v, static_cast<double>(n));
    return static_cast<Index>(m < 0.0 ? m + static_cast<double>(n) : m);
  };
  const Index xa = wrap(fx0, w);
  const Index ya = wrap(fy0, h);
  const Index xb = xa + 1 == w ? 0 : xa + 1;
  const Index yb = ya + 1 == h ? 0 : ya + 1;
  const double top = image(ya, xa) + tx * (image(ya, xb) - image(ya, xa));
  const double bottom = image(yb, xa) + tx * (image(yb, xb) - image(yb, xa));
  return top + ty * (bottom - top);
}

FoveaFrame sample_window(const GrayImage& image, double center_x, double center_y, long frame_index) {
  constexpr int n = Units::fovea_px;
  constexpr int half = n / 2;
  FoveaFrame frame;
  frame.frame_index = frame_index;
  frame.values.resize(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      frame.values(r, c) = sample_bilinear(image, center_x + (c - half), center_y + (r - half));
  return frame;
}

std::vector<GrayImage> load_texture_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("texture directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<GrayImage> corpus;
  for (const auto& f : files) {
    GrayImage img = read_pgm_file(f);
    if (img.cols() < Units::fovea_px || img.rows() < Units::fovea_px)
      throw ConfigError("texture smaller than 55x55: " + f.string());
    corpus.push_back(normalize_contrast(img));
  }
  if (corpus.empty()) throw ConfigError("no .pgm textures in " + dir.string());
  return corpus;
}

std::vector<GrayImage> synth_corpus(std::uint64_t seed, int count, Index size) {
  std::vector<GrayImage> corpus;
  corpus.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i)
    corpus.push_back(normalize_contrast(synth_texture(derive_seed(seed, "corpus/" + std::to_string(i)), size, size)));
  return corpus;
}

}  // namespace pursuit
