#include "pursuit/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace pursuit {

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  const bool same_policy = std::visit(
      [&](const auto& pa) {
        using P = std::decay_t<decltype(pa)>;
        const auto* pb = std::get_if<P>(&b.policy);
        return pb != nullptr && pa == *pb;
      },
      a.policy);
  return a.dictionary == b.dictionary && same_policy && a.critic == b.critic && a.env == b.env &&
         a.policy_rng == b.policy_rng && a.pending == b.pending && a.pending_features == b.pending_features &&
         a.pending_sample.raw == b.pending_sample.raw && a.pending_sample.index == b.pending_sample.index &&
         a.pending_sample.action.accel == b.pending_sample.action.accel && a.frame == b.frame &&
         a.config_hash == b.config_hash;
}

namespace {

constexpr const char* kMagic = "pursuit-checkpoint";

std::string exact(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", d);
  return buf;
}

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

class PayloadWriter {
 public:
  explicit PayloadWriter(PayloadScalar scalar) : scalar_(scalar) {}

  void put(double v) {
    if (scalar_ == PayloadScalar::f64) {
      put_le(std::bit_cast<std::uint64_t>(v), 8);
    } else {
      put_le(std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    }
    ++count_;
  }
  template <typename Derived>
  void put(const Eigen::DenseBase<Derived>& m) {
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) put(static_cast<double>(m(i, j)));
  }
  void put(const Vec2& v) { put(v.x()), put(v.y()); }

  const std::string& bytes() const { return bytes_; }
  long count() const { return count_; }

 private:
  void put_le(std::uint64_t bits, int width) {
    for (int b = 0; b < width; ++b) bytes_.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }

  PayloadScalar scalar_;
  std::string bytes_;
  long count_ = 0;
};

class PayloadReader {
 public:
  PayloadReader(std::string_view bytes, PayloadScalar scalar) : bytes_(bytes), scalar_(scalar) {}

  double get() {
    const int width = scalar_ == PayloadScalar::f64 ? 8 : 4;
    if (pos_ + static_cast<std::size_t>(width) > bytes_.size()) throw CheckpointError("checkpoint payload is short");
    std::uint64_t bits = 0;
    for (int b = 0; b < width; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(b)]))
              << (8 * b);
    pos_ += static_cast<std::size_t>(width);
    if (width == 8) return std::bit_cast<double>(bits);
    return static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(bits)));
  }
  template <typename Derived>
  void get(Eigen::DenseBase<Derived>& m) {
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = get();
  }
  template <typename Derived>
  void get(Eigen::DenseBase<Derived>&& m) {
    get(m);
  }
  void get(Vec2& v) {
    v.x() = get();
    v.y() = get();
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  PayloadScalar scalar_;
  std::size_t pos_ = 0;
};

class Header {
 public:
  explicit Header(std::map<std::string, std::string> fields) : fields_(std::move(fields)) {}

  const std::string& str(const std::string& key) const {
    const auto it = fields_.find(key);
    if (it == fields_.end()) throw CheckpointError("checkpoint header lacks " + key);
    return it->second;
  }
  long integer(const std::string& key) const {
    try {
      std::size_t used = 0;
      const long v = std::stol(str(key), &used);
      if (used == str(key).size()) return v;
    } catch (const std::logic_error&) {
    }
    throw CheckpointError("checkpoint header field " + key + " is not an integer");
  }
  std::uint64_t unsigned_integer(const std::string& key) const {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(str(key), &used);
      if (used == str(key).size()) return v;
    } catch (const std::logic_error&) {
    }
    throw CheckpointError("checkpoint header field " + key + " is not an integer");
  }
  double real(const std::string& key) const {
    const std::string& s = str(key);
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw CheckpointError("checkpoint header field " + key + " is not a number");
    return d;
  }

 private:
  std::map<std::string, std::string> fields_;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& c, PayloadScalar scalar) {
  const auto& d = c.dictionary;
  const auto& p = c.critic.params;
  std::ostringstream h;
  h << kMagic << '\n';
  h << "version " << kCheckpointVersion << '\n';
  h << "scalar " << (scalar == PayloadScalar::f64 ? "f64" : "f32") << '\n';
  h << "frame " << c.frame << '\n';
  h << "config_hash " << c.config_hash << '\n';
  h << "dictionary.dimension " << d.dimension() << '\n';
  h << "dictionary.atoms " << d.size() << '\n';
  h << "dictionary.generation " << d.generation << '\n';
  h << "policy.head " << head_name(c.policy) << '\n';
  if (const auto* sm = std::get_if<SoftmaxPolicy>(&c.policy)) {
    h << "policy.atoms " << sm->atoms() << '\n';
    h << "policy.actions " << sm->actions() << '\n';
    h << "policy.temperature " << exact(sm->temperature()) << '\n';
    h << "policy.max_accel " << exact(sm->max_accel()) << '\n';
  } else {
    const auto& g = std::get<GaussianPolicy>(c.policy);
    h << "policy.atoms " << g.atoms() << '\n';
    h << "policy.hidden " << g.hidden() << '\n';
    h << "policy.sigma " << exact(g.sigma()) << '\n';
    h << "policy.max_accel " << exact(g.max_accel()) << '\n';
  }
  h << "policy.parameters " << policy_params(c.policy).size() << '\n';
  h << "critic.alpha_v " << exact(p.alpha_v) << '\n';
  h << "critic.alpha_w " << exact(p.alpha_w) << '\n';
  h << "critic.alpha_theta " << exact(p.alpha_theta) << '\n';
  h << "critic.gamma " << exact(p.gamma) << '\n';
  h << "critic.lambda " << exact(p.lambda) << '\n';
  h << "critic.variant " << (p.variant == ActorCriticVariant::natural ? "natural" : "vanilla") << '\n';
  h << "critic.normalized_steps " << (p.normalized_steps ? 1 : 0) << '\n';
  h << "critic.value_size " << c.critic.v.size() << '\n';
  h << "env.texture_id " << c.env.target.texture_id << '\n';
  h << "env.phase " << c.env.target.phase << '\n';
  h << "env.frame_index " << c.env.frame_index << '\n';
  h << "env.rng " << c.env.rng.state() << '\n';
  h << "policy_rng " << c.policy_rng.state() << '\n';
  h << "pending " << (c.pending ? 1 : 0) << '\n';
  h << "pending.features " << c.pending_features.size() << '\n';
  h << "pending.index " << c.pending_sample.index[0] << ' ' << c.pending_sample.index[1] << '\n';

  PayloadWriter w(scalar);
  w.put(d.atoms);  // atom-major: each atom's 200 values are contiguous
  w.put(policy_params(c.policy));
  w.put(c.critic.v);
  w.put(c.critic.w);
  w.put(c.critic.trace_v);
  w.put(c.critic.trace_w);
  w.put(c.env.target.velocity);
  w.put(c.env.target.position);
  w.put(c.env.eye.velocity);
  w.put(c.env.eye.position);
  w.put(c.env.origin);
  w.put(c.env.previous_view);
  w.put(c.pending_features);
  w.put(c.pending_sample.raw);
  w.put(c.pending_sample.action.accel);

  h << "payload.values " << w.count() << '\n';
  h << '\n';
  std::string out = h.str() + w.bytes();
  char trailer[32];
  std::snprintf(trailer, sizeof trailer, "\ncrc32 %08x\n", crc_of(out));
  return out + trailer;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  // Trailer: "\ncrc32 xxxxxxxx\n" (16 bytes) over everything before it.
  constexpr std::size_t trailer_size = 16;
  if (bytes.rfind(kMagic, 0) != 0) throw CheckpointError("not a checkpoint file");
  if (bytes.size() < trailer_size || bytes.compare(bytes.size() - trailer_size, 7, "\ncrc32 ") != 0 ||
      bytes.back() != '\n')
    throw CheckpointError("checkpoint is truncated (missing checksum trailer)");
  const std::string_view body(bytes.data(), bytes.size() - trailer_size);
  const std::string stored = bytes.substr(bytes.size() - 9, 8);
  char computed[9];
  std::snprintf(computed, sizeof computed, "%08x", crc_of(body));
  if (stored != computed) throw CheckpointError("checkpoint checksum mismatch");

  const auto split = body.find("\n\n");
  if (split == std::string_view::npos) throw CheckpointError("checkpoint header is not terminated");
  std::map<std::string, std::string> fields;
  {
    std::istringstream in(std::string(body.substr(0, split)));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto sp = line.find(' ');
      if (sp == std::string::npos) throw CheckpointError("malformed checkpoint header line: " + line);
      fields[line.substr(0, sp)] = line.substr(sp + 1);
    }
  }
  const Header h(std::move(fields));
  if (h.integer("version") != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + h.str("version"));
  const std::string& scalar_name = h.str("scalar");
  if (scalar_name != "f64" && scalar_name != "f32") throw CheckpointError("unknown payload scalar " + scalar_name);
  const PayloadScalar scalar = scalar_name == "f64" ? PayloadScalar::f64 : PayloadScalar::f32;

  Checkpoint c;
  c.frame = h.integer("frame");
  c.config_hash = h.unsigned_integer("config_hash");
  const Index dim = h.integer("dictionary.dimension");
  const Index atoms = h.integer("dictionary.atoms");
  c.dictionary.atoms.resize(dim, atoms);
  c.dictionary.generation = h.integer("dictionary.generation");

  const std::string& head = h.str("policy.head");
  const Index policy_atoms = h.integer("policy.atoms");
  if (head == "softmax") {
    c.policy = SoftmaxPolicy(policy_atoms, static_cast<int>(h.integer("policy.actions")), h.real("policy.temperature"),
                             h.real("policy.max_accel"));
  } else if (head == "gaussian") {
    c.policy = GaussianPolicy(policy_atoms, static_cast<int>(h.integer("policy.hidden")), h.real("policy.sigma"),
                              h.real("policy.max_accel"));
  } else {
    throw CheckpointError("unknown policy head " + head);
  }
  VectorXd& theta = policy_params(c.policy);
  if (theta.size() != h.integer("policy.parameters")) throw CheckpointError("policy parameter count mismatch");

  CriticParams p;
  p.alpha_v = h.real("critic.alpha_v");
  p.alpha_w = h.real("critic.alpha_w");
  p.alpha_theta = h.real("critic.alpha_theta");
  p.gamma = h.real("critic.gamma");
  p.lambda = h.real("critic.lambda");
  const std::string& variant = h.str("critic.variant");
  if (variant != "natural" && variant != "vanilla") throw CheckpointError("unknown critic variant " + variant);
  p.variant = variant == "natural" ? ActorCriticVariant::natural : ActorCriticVariant::vanilla;
  p.normalized_steps = h.integer("critic.normalized_steps") != 0;
  c.critic = CriticState::zeros(h.integer("critic.value_size") - 1, theta.size(), p);

  c.env.target.texture_id = static_cast<std::size_t>(h.integer("env.texture_id"));
  c.env.target.phase = static_cast<int>(h.integer("env.phase"));
  c.env.frame_index = h.integer("env.frame_index");
  try {
    c.env.rng.restore(h.str("env.rng"));
    c.policy_rng.restore(h.str("policy_rng"));
  } catch (const ConfigError& e) {
    throw CheckpointError(e.what());
  }
  c.pending = h.integer("pending") != 0;
  c.pending_features.resize(h.integer("pending.features"));
  {
    std::istringstream idx(h.str("pending.index"));
    if (!(idx >> c.pending_sample.index[0] >> c.pending_sample.index[1]))
      throw CheckpointError("malformed pending.index");
  }

  const long expected = dim * atoms + theta.size() + 2 * c.critic.v.size() + 2 * theta.size() + 12 +
                        c.pending_features.size() + 4;
  if (h.integer("payload.values") != expected) throw CheckpointError("payload size disagrees with header shapes");
  const std::size_t width = scalar == PayloadScalar::f64 ? 8 : 4;
  const std::string_view payload = body.substr(split + 2);
  if (payload.size() != static_cast<std::size_t>(expected) * width)
    throw CheckpointError("checkpoint payload has " + std::to_string(payload.size()) + " bytes, expected " +
                          std::to_string(static_cast<std::size_t>(expected) * width));

  PayloadReader r(payload, scalar);
  r.get(c.dictionary.atoms);
  r.get(theta);
  r.get(c.critic.v);
  r.get(c.critic.w);
  r.get(c.critic.trace_v);
  r.get(c.critic.trace_w);
  r.get(c.env.target.velocity);
  r.get(c.env.target.position);
  r.get(c.env.eye.velocity);
  r.get(c.env.eye.position);
  r.get(c.env.origin);
  r.get(c.env.previous_view);
  r.get(c.pending_features);
  r.get(c.pending_sample.raw);
  r.get(c.pending_sample.action.accel);
  if (scalar == PayloadScalar::f32) {
    for (Index n = 0; n < c.dictionary.size(); ++n) c.dictionary.atoms.col(n).normalize();
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path, PayloadScalar scalar) {
  const std::string bytes = encode_checkpoint(ckpt, scalar);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace pursuit
