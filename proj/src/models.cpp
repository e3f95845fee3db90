#include "redsr/models.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "redsr/errors.hpp"
#include "redsr/ops.hpp"
#include "redsr/random.hpp"
#include "redsr/rdt.hpp"

namespace redsr {

void Architecture::validate() const {
  if (repr_dim == 0) throw ConfigError("architecture: repr_dim must be positive");
  if (scale < 1 || scale > 4) throw ConfigError("architecture: scale must be 1..4");
  if (encoder_channels.size() != 4) {
    throw ConfigError("architecture: encoder has five layers, need four hidden widths");
  }
  if (encoder_strides.size() != 5) throw ConfigError("architecture: need five encoder strides");
  for (auto c : encoder_channels)
    if (c == 0) throw ConfigError("architecture: zero encoder width");
  for (auto s : encoder_strides)
    if (s == 0) throw ConfigError("architecture: zero encoder stride");
  if (degrader_width == 0 || generator_width == 0 || mlp_width == 0) {
    throw ConfigError("architecture: zero network width");
  }
  if (!(slope >= 0.0 && slope < 1.0)) throw ConfigError("architecture: slope must lie in [0,1)");
}

nlohmann::json Architecture::to_json() const {
  return {{"repr_dim", repr_dim},
          {"scale", scale},
          {"encoder_channels", encoder_channels},
          {"encoder_strides", encoder_strides},
          {"degrader_width", degrader_width},
          {"degrader_blocks", degrader_blocks},
          {"generator_width", generator_width},
          {"generator_blocks", generator_blocks},
          {"mlp_width", mlp_width},
          {"logvar_head", logvar_head},
          {"slope", slope}};
}

Architecture Architecture::from_json(const nlohmann::json& j) {
  Architecture a;
  try {
    a.repr_dim = j.at("repr_dim").get<std::size_t>();
    a.scale = j.at("scale").get<std::size_t>();
    a.encoder_channels = j.at("encoder_channels").get<std::vector<std::size_t>>();
    a.encoder_strides = j.at("encoder_strides").get<std::vector<std::size_t>>();
    a.degrader_width = j.at("degrader_width").get<std::size_t>();
    a.degrader_blocks = j.at("degrader_blocks").get<std::size_t>();
    a.generator_width = j.at("generator_width").get<std::size_t>();
    a.generator_blocks = j.at("generator_blocks").get<std::size_t>();
    a.mlp_width = j.at("mlp_width").get<std::size_t>();
    a.logvar_head = j.at("logvar_head").get<bool>();
    a.slope = j.at("slope").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("architecture descriptor: ") + e.what());
  }
  return a;
}

namespace {

void add_conv(ParamMap& p, Rng& rng, const std::string& name, std::size_t cout, std::size_t cin,
              std::size_t k) {
  p[name + ".w"] = he_normal({cout, cin, k, k}, cin * k * k, rng);
  p[name + ".b"] = Tensor::zeros({cout}, true);
}

void add_linear(ParamMap& p, Rng& rng, const std::string& name, std::size_t dout, std::size_t din,
                bool zero) {
  p[name + ".w"] = zero ? Tensor::zeros({dout, din}, true) : he_normal({dout, din}, din, rng);
  p[name + ".b"] = Tensor::zeros({dout}, true);
}

// Tail conv of the degrader: kernel 2s-1, padding s-1, stride s maps H to H/s.
std::size_t tail_kernel(std::size_t s) { return 2 * s - 1; }

}  // namespace

Model Model::init(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Model m;
  m.arch = arch;
  Rng rng = make_rng(seed, {0x1417});
  auto& p = m.params;

  std::array<std::size_t, 6> enc{3, arch.encoder_channels[0], arch.encoder_channels[1],
                                 arch.encoder_channels[2], arch.encoder_channels[3],
                                 arch.repr_dim};
  for (std::size_t i = 0; i < 5; ++i) {
    add_conv(p, rng, "enc.conv" + std::to_string(i), enc[i + 1], enc[i], 5);
  }
  if (arch.logvar_head) add_conv(p, rng, "enc.logvar", arch.repr_dim, enc[4], 5);

  const std::size_t dw = arch.degrader_width;
  add_conv(p, rng, "deg.head", dw, 3, 3);
  for (std::size_t b = 0; b < arch.degrader_blocks; ++b) {
    const std::string n = "deg.block" + std::to_string(b);
    add_conv(p, rng, n, dw, dw, 3);
    add_linear(p, rng, n + ".gamma", dw, arch.repr_dim, true);
    add_linear(p, rng, n + ".beta", dw, arch.repr_dim, true);
  }
  add_conv(p, rng, "deg.tail", 3, dw, tail_kernel(arch.scale));

  const std::size_t gw = arch.generator_width;
  add_linear(p, rng, "gen.mlp0", arch.mlp_width, arch.repr_dim, false);
  add_linear(p, rng, "gen.mlp1", arch.mlp_width, arch.mlp_width, false);
  add_conv(p, rng, "gen.head", gw, 3, 3);
  for (std::size_t b = 0; b < arch.generator_blocks; ++b) {
    const std::string n = "gen.block" + std::to_string(b);
    add_conv(p, rng, n, gw, gw, 3);
    add_linear(p, rng, n + ".gamma", gw, arch.mlp_width, true);
    add_linear(p, rng, n + ".beta", gw, arch.mlp_width, true);
  }
  add_conv(p, rng, "gen.up", 3, gw, 3);
  return m;
}

const Tensor& Model::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw StateError("model has no parameter '" + name + "'");
  return it->second;
}

ParamMap Model::subset(const std::string& prefix) const {
  ParamMap out;
  for (const auto& [name, t] : params) {
    if (name.rfind(prefix, 0) == 0) out.emplace(name, t);
  }
  return out;
}

namespace {

void require_images(const Tensor& x, const char* what) {
  if (x.rank() != 4 || x.dim(1) != 3) {
    throw DimensionError(std::string(what) + ": expected [N,3,H,W], got " + shape_str(x.shape()));
  }
}

void require_repr(const Model& m, const Tensor& f, std::size_t n, const char* what) {
  if (f.rank() != 2 || f.dim(0) != n || f.dim(1) != m.arch.repr_dim) {
    throw DimensionError(std::string(what) + ": representation " + shape_str(f.shape()) +
                         " does not match batch " + std::to_string(n) + " x " +
                         std::to_string(m.arch.repr_dim));
  }
}

Tensor conv(const Model& m, const Tensor& x, const std::string& name, std::size_t stride,
            std::size_t pad) {
  return ops::conv2d(x, m.param(name + ".w"), m.param(name + ".b"), stride, pad);
}

Tensor dense(const Model& m, const Tensor& x, const std::string& name) {
  return ops::linear(x, m.param(name + ".w"), m.param(name + ".b"));
}

// x + lrelu(conv(x) * (1 + gamma(cond)) + beta(cond))
Tensor conditional_block(const Model& m, const Tensor& x, const Tensor& cond,
                         const std::string& name) {
  Tensor h = conv(m, x, name, 1, 1);
  const Tensor gamma = ops::add_scalar(dense(m, cond, name + ".gamma"), 1.0);
  const Tensor beta = dense(m, cond, name + ".beta");
  h = ops::channel_affine(h, gamma, beta);
  return ops::add(x, ops::leaky_relu(h, m.arch.slope));
}

}  // namespace

Encoding encode(const Model& model, const Tensor& lr) {
  require_images(lr, "encode");
  if (lr.dim(2) < 16 || lr.dim(3) < 16) {
    throw DimensionError("encode: input " + shape_str(lr.shape()) + " smaller than 16x16");
  }
  const auto& strides = model.arch.encoder_strides;
  Tensor h = lr;
  for (std::size_t i = 0; i < 4; ++i) {
    h = ops::leaky_relu(conv(model, h, "enc.conv" + std::to_string(i), strides[i], 2),
                        model.arch.slope);
  }
  Encoding out;
  out.f = ops::global_avg_pool(conv(model, h, "enc.conv4", strides[4], 2));
  if (model.arch.logvar_head) {
    out.logvar = ops::global_avg_pool(conv(model, h, "enc.logvar", strides[4], 2));
  }
  return out;
}

Tensor degrade_net(const Model& model, const Tensor& hr, const Tensor& f) {
  require_images(hr, "degrade_net");
  require_repr(model, f, hr.dim(0), "degrade_net");
  const std::size_t s = model.arch.scale;
  if (hr.dim(2) % s || hr.dim(3) % s) {
    throw DimensionError("degrade_net: " + shape_str(hr.shape()) + " not divisible by scale " +
                         std::to_string(s));
  }
  Tensor h = ops::leaky_relu(conv(model, hr, "deg.head", 1, 1), model.arch.slope);
  for (std::size_t b = 0; b < model.arch.degrader_blocks; ++b) {
    h = conditional_block(model, h, f, "deg.block" + std::to_string(b));
  }
  return conv(model, h, "deg.tail", s, s - 1);
}

Tensor generate(const Model& model, const Tensor& lr, const Tensor& f) {
  require_images(lr, "generate");
  require_repr(model, f, lr.dim(0), "generate");
  const std::size_t s = model.arch.scale;
  const double slope = model.arch.slope;
  Tensor cond = ops::leaky_relu(dense(model, f, "gen.mlp0"), slope);
  cond = ops::leaky_relu(dense(model, cond, "gen.mlp1"), slope);

  Tensor h = ops::leaky_relu(conv(model, lr, "gen.head", 1, 1), slope);
  for (std::size_t b = 0; b < model.arch.generator_blocks; ++b) {
    h = conditional_block(model, h, cond, "gen.block" + std::to_string(b));
  }
  const Tensor up = conv(model, ops::nn_upsample(h, s), "gen.up", 1, 1);
  return ops::add(up, ops::nn_upsample(lr, s));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[4] = {'R', 'D', 'C', 'K'};

void put_string(std::ostream& os, const std::string& s) {
  rdt::put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, std::size_t limit) {
  const std::uint32_t n = rdt::get_u32(is);
  if (n > limit) throw FormatError("checkpoint: string length " + std::to_string(n) + " too large");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError("checkpoint: truncated");
  return s;
}

Tensor vector_tensor(const std::vector<double>& v, const Shape& shape) {
  return Tensor(shape, v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Adam* optimizer,
                     std::uint64_t step) {
  nlohmann::json header{{"architecture", model.arch.to_json()}, {"step", step}};
  if (optimizer) {
    const auto& c = optimizer->config();
    header["optimizer"] = {{"step_count", optimizer->step_count()},
                           {"learning_rate", c.learning_rate},
                           {"beta1", c.beta1},
                           {"beta2", c.beta2},
                           {"epsilon", c.epsilon}};
  }

  std::vector<std::pair<std::string, Tensor>> blocks;
  for (const auto& [name, t] : model.params) blocks.emplace_back("param/" + name, t);
  if (optimizer) {
    for (const auto& [name, m] : optimizer->moments()) {
      const Shape shape = model.param(name).shape();
      blocks.emplace_back("adam.m/" + name, vector_tensor(m.first, shape));
      blocks.emplace_back("adam.v/" + name, vector_tensor(m.second, shape));
    }
  }

  // Write-then-rename keeps the previous checkpoint valid if interrupted.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint: " + tmp.string());
    os.write(kCheckpointMagic, 4);
    rdt::put_u32(os, kCheckpointVersion);
    put_string(os, header.dump());
    rdt::put_u32(os, static_cast<std::uint32_t>(blocks.size()));
    for (const auto& [name, t] : blocks) {
      put_string(os, name);
      rdt::write(os, t);
    }
    if (!os) throw IoError("checkpoint write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

Checkpoint read_checkpoint(const std::filesystem::path& path,
                           const std::optional<Architecture>& expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() != 4 || std::string(magic, 4) != std::string(kCheckpointMagic, 4)) {
    throw FormatError("not a checkpoint (bad magic): " + path.string());
  }
  const std::uint32_t version = rdt::get_u32(is);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) +
                      " does not match supported version " + std::to_string(kCheckpointVersion));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(get_string(is, 1u << 20));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  ck.model.arch = Architecture::from_json(header.at("architecture"));
  try {
    ck.model.arch.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint descriptor invalid: ") + e.what());
  }
  if (expected && !(*expected == ck.model.arch)) {
    throw FormatError("checkpoint architecture " + ck.model.arch.to_json().dump() +
                      " does not match expected " + expected->to_json().dump());
  }
  ck.step = header.value("step", std::uint64_t{0});

  // Reference shapes come from a fresh init of the stored descriptor.
  const Model reference = Model::init(ck.model.arch, 0);
  std::map<std::string, Adam::Moments> moments;
  const std::uint32_t count = rdt::get_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_string(is, 4096);
    Tensor t = rdt::read(is);
    const auto slash = name.find('/');
    if (slash == std::string::npos) throw FormatError("checkpoint: bad block name " + name);
    const std::string kind = name.substr(0, slash), pname = name.substr(slash + 1);
    auto ref = reference.params.find(pname);
    if (ref == reference.params.end() || ref->second.shape() != t.shape()) {
      throw FormatError("checkpoint block " + name + " does not match the architecture");
    }
    if (kind == "param") {
      t.set_requires_grad(true);
      ck.model.params[pname] = t;
    } else if (kind == "adam.m") {
      moments[pname].first.assign(t.data().begin(), t.data().end());
    } else if (kind == "adam.v") {
      moments[pname].second.assign(t.data().begin(), t.data().end());
    } else {
      throw FormatError("checkpoint: unknown block kind " + kind);
    }
  }
  if (ck.model.params.size() != reference.params.size()) {
    throw FormatError("checkpoint: missing parameter blocks");
  }
  if (header.contains("optimizer")) {
    const auto& o = header["optimizer"];
    AdamConfig c;
    c.learning_rate = o.at("learning_rate").get<double>();
    c.beta1 = o.at("beta1").get<double>();
    c.beta2 = o.at("beta2").get<double>();
    c.epsilon = o.at("epsilon").get<double>();
    Adam adam(c);
    adam.restore(o.at("step_count").get<std::uint64_t>(), std::move(moments));
    ck.optimizer = std::move(adam);
  }
  return ck;
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<Architecture>& expected) {
  try {
    return read_checkpoint(path, expected);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint header " + path.string() + ": " + e.what());
  } catch (const ParameterError& e) {
    throw FormatError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace redsr
