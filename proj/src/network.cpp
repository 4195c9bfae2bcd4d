#include "mambahash/network.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mambahash/errors.hpp"
#include "mambahash/ops.hpp"

namespace mambahash {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) {
      // allow simple fractions such as 1/16
      const auto slash = v.find('/');
      if (slash == std::string::npos) throw std::invalid_argument(v);
      d = std::stod(v.substr(0, slash)) / std::stod(v.substr(slash + 1));
    }
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a real number, got '" + v + "'");
  }
}

std::array<std::size_t, kStages> parse_quad(const std::string& key, const std::string& v) {
  std::array<std::size_t, kStages> out{};
  std::stringstream ss(v);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i == kStages) throw ConfigError("config key '" + key + "': expected 4 comma-separated values");
    out[i++] = parse_size(key, trim(item));
  }
  if (i != kStages) throw ConfigError("config key '" + key + "': expected 4 comma-separated values");
  return out;
}

std::string quad_str(const std::array<std::size_t, kStages>& q) {
  std::ostringstream os;
  for (std::size_t i = 0; i < kStages; ++i) os << (i ? "," : "") << q[i];
  return os.str();
}

std::string real_str(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace

ModelConfig ModelConfig::tiny(std::size_t bits) {
  ModelConfig c;
  c.depths = {1, 1, 2, 1};
  c.dims = {8, 16, 24, 32};
  c.hash_bits = bits;
  c.stem_width = 16;
  return c;
}

std::size_t default_ciam_kernel(std::size_t bits) { return bits <= 32 ? 3 : 5; }

std::size_t ModelConfig::resolved_ciam_kernel() const {
  return ciam_kernel == 0 ? default_ciam_kernel(hash_bits) : ciam_kernel;
}

blocks::BlockOptions ModelConfig::block_options() const {
  blocks::BlockOptions o;
  o.n_state = n_state;
  o.ffn_ratio = ffn_ratio;
  o.ciam_kernel = resolved_ciam_kernel();
  o.discretization = discretization;
  o.gate = gate;
  return o;
}

void ModelConfig::validate() const {
  for (std::size_t i = 0; i < kStages; ++i) {
    if (dims[i] == 0 || dims[i] % 4 != 0) {
      throw ConfigError("model: dims[" + std::to_string(i) + "] = " + std::to_string(dims[i]) +
                        " must be a positive multiple of 4");
    }
    if (depths[i] == 0) throw ConfigError("model: depths[" + std::to_string(i) + "] must be >= 1");
  }
  if (hash_bits == 0) throw ConfigError("model: hash_bits must be >= 1");
  if (resolved_ciam_kernel() % 2 == 0) {
    throw ConfigError("model: ciam_kernel " + std::to_string(ciam_kernel) + " must be odd");
  }
  if (n_state == 0) throw ConfigError("model: n_state must be >= 1");
  if (ffn_ratio == 0) throw ConfigError("model: ffn_ratio must be >= 1");
  if (stem_width == 0) throw ConfigError("model: stem_width must be >= 1");
  if (!std::isfinite(ratio_mu) || !std::isfinite(ratio_b)) {
    throw ConfigError("model: ratio constants must be finite");
  }
  if (!(eta >= 0.0)) throw ConfigError("model: eta must be >= 0");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "depths = " << quad_str(depths) << '\n'
     << "dims = " << quad_str(dims) << '\n'
     << "hash_bits = " << hash_bits << '\n'
     << "ciam_kernel = " << ciam_kernel << '\n'
     << "ratio_mu = " << real_str(ratio_mu) << '\n'
     << "ratio_b = " << real_str(ratio_b) << '\n'
     << "eta = " << real_str(eta) << '\n'
     << "n_state = " << n_state << '\n'
     << "ffn_ratio = " << ffn_ratio << '\n'
     << "stem_width = " << stem_width << '\n'
     << "discretization = " << ssm::to_string(discretization) << '\n'
     << "gate = " << blocks::to_string(gate) << '\n';
  return os.str();
}

bool ModelConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "depths") depths = parse_quad(key, value);
  else if (key == "dims") dims = parse_quad(key, value);
  else if (key == "hash_bits" || key == "bits") hash_bits = parse_size(key, value);
  else if (key == "ciam_kernel") ciam_kernel = parse_size(key, value);
  else if (key == "ratio_mu") ratio_mu = parse_real(key, value);
  else if (key == "ratio_b") ratio_b = parse_real(key, value);
  else if (key == "eta") eta = parse_real(key, value);
  else if (key == "n_state") n_state = parse_size(key, value);
  else if (key == "ffn_ratio") ffn_ratio = parse_size(key, value);
  else if (key == "stem_width") stem_width = parse_size(key, value);
  else if (key == "discretization") discretization = ssm::parse_discretization(value);
  else if (key == "gate") gate = blocks::parse_gate_activation(value);
  else return false;
  return true;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("model config: malformed line '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (!c.set(key, line.substr(eq + 1))) throw ConfigError("model config: unknown key '" + key + "'");
  }
  return c;
}

double enhancement_ratio(std::size_t bits, double mu, double b) {
  return std::exp2(mu * static_cast<double>(bits) + b);
}

std::size_t afem_inner_width(std::size_t channels, double lambda) {
  const double w = std::round(lambda * static_cast<double>(channels));
  return w < 1.0 ? 1 : static_cast<std::size_t>(w);
}

StemParams StemParams::init(std::size_t width, std::size_t out_channels, Rng& rng) {
  StemParams p;
  p.w1 = init::fan_in_uniform({7, 7, 3, width}, 7 * 7 * 3, rng);
  p.b1 = init::zeros({width});
  p.w2 = init::fan_in_uniform({3, 3, width, width}, 9 * width, rng);
  p.b2 = init::zeros({width});
  p.w3 = init::fan_in_uniform({3, 3, width, width}, 9 * width, rng);
  p.b3 = init::zeros({width});
  p.w4 = init::fan_in_uniform({3, 3, width, out_channels}, 9 * width, rng);
  p.b4 = init::zeros({out_channels});
  return p;
}

void StemParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "w1", w1);
  out.emplace_back(prefix + "b1", b1);
  out.emplace_back(prefix + "w2", w2);
  out.emplace_back(prefix + "b2", b2);
  out.emplace_back(prefix + "w3", w3);
  out.emplace_back(prefix + "b3", b3);
  out.emplace_back(prefix + "w4", w4);
  out.emplace_back(prefix + "b4", b4);
}

Tensor stem(const Tensor& image, const StemParams& p) {
  if (image.rank() != 4 || image.dim(3) != 3) {
    throw DimensionError("stem: expected (B, S, S, 3), got " + shape_str(image.shape()));
  }
  if (image.dim(1) % 4 != 0 || image.dim(2) % 4 != 0) {
    throw ConfigError("stem: image side " + std::to_string(image.dim(1)) + "x" +
                      std::to_string(image.dim(2)) + " is not divisible by 4");
  }
  Tensor x = ops::relu(ops::conv2d(image, p.w1, p.b1, 2, 3));
  x = ops::relu(ops::conv2d(x, p.w2, p.b2, 1, 1));
  x = ops::relu(ops::conv2d(x, p.w3, p.b3, 1, 1));
  return ops::relu(ops::conv2d(x, p.w4, p.b4, 2, 1));
}

DownsampleParams DownsampleParams::init(std::size_t in_channels, std::size_t out_channels, Rng& rng) {
  DownsampleParams p;
  p.w = init::fan_in_uniform({3, 3, in_channels, out_channels}, 9 * in_channels, rng);
  p.b = init::zeros({out_channels});
  p.ln_g = init::ones({out_channels});
  p.ln_b = init::zeros({out_channels});
  return p;
}

void DownsampleParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "w", w);
  out.emplace_back(prefix + "b", b);
  out.emplace_back(prefix + "ln_g", ln_g);
  out.emplace_back(prefix + "ln_b", ln_b);
}

Tensor downsample(const Tensor& x, const DownsampleParams& p) {
  if (x.rank() != 4) throw DimensionError("downsample: expected (B, H, W, C), got " + shape_str(x.shape()));
  if (x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
    throw ContractError("downsample: spatial size " + std::to_string(x.dim(1)) + "x" +
                        std::to_string(x.dim(2)) + " must be even");
  }
  return ops::layer_norm(ops::conv2d(x, p.w, p.b, 2, 1), p.ln_g, p.ln_b);
}

AfemParams AfemParams::init(std::size_t channels, double lambda, Rng& rng) {
  const std::size_t E = afem_inner_width(channels, lambda);
  AfemParams p;
  p.w_expand = init::fan_in_uniform({channels, E}, channels, rng);
  p.b_expand = init::zeros({E});
  p.dw1_w = init::fan_in_uniform({1, 1, E}, 1, rng);
  p.dw1_b = init::zeros({E});
  p.dw3_w = init::fan_in_uniform({3, 3, E}, 9, rng);
  p.dw3_b = init::zeros({E});
  p.dw5_w = init::fan_in_uniform({5, 5, E}, 25, rng);
  p.dw5_b = init::zeros({E});
  p.w_restore = init::fan_in_uniform({E, channels}, E, rng);
  p.b_restore = init::zeros({channels});
  return p;
}

void AfemParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "w_expand", w_expand);
  out.emplace_back(prefix + "b_expand", b_expand);
  out.emplace_back(prefix + "dw1_w", dw1_w);
  out.emplace_back(prefix + "dw1_b", dw1_b);
  out.emplace_back(prefix + "dw3_w", dw3_w);
  out.emplace_back(prefix + "dw3_b", dw3_b);
  out.emplace_back(prefix + "dw5_w", dw5_w);
  out.emplace_back(prefix + "dw5_b", dw5_b);
  out.emplace_back(prefix + "w_restore", w_restore);
  out.emplace_back(prefix + "b_restore", b_restore);
}

Tensor afem(const Tensor& x, const AfemParams& p) {
  if (x.rank() != 4) throw DimensionError("afem: expected (B, H, W, D), got " + shape_str(x.shape()));
  Tensor xf = ops::linear(x, p.w_expand, p.b_expand);
  Tensor t1 = ops::depthwise_conv2d(xf, p.dw1_w, p.dw1_b, 1, 0);
  Tensor t3 = ops::depthwise_conv2d(xf, p.dw3_w, p.dw3_b, 1, 1);
  Tensor t5 = ops::depthwise_conv2d(xf, p.dw5_w, p.dw5_b, 1, 2);
  Tensor fused = ops::relu(ops::add(ops::add(t1, t3), t5));
  return ops::linear(fused, p.w_restore, p.b_restore);
}

MambaHashNet::MambaHashNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto opt = config_.block_options();
  stem_ = StemParams::init(config_.stem_width, config_.dims[0], rng);
  for (std::size_t s = 0; s < kStages; ++s) {
    for (std::size_t d = 0; d < config_.depths[s]; ++d) {
      stages_[s].push_back(blocks::MambaBlockParams::init(config_.dims[s], opt, rng));
    }
    if (s + 1 < kStages) downsample_[s] = DownsampleParams::init(config_.dims[s], config_.dims[s + 1], rng);
  }
  const double lambda = enhancement_ratio(config_.hash_bits, config_.ratio_mu, config_.ratio_b);
  afem_ = AfemParams::init(config_.dims[kStages - 1], lambda, rng);
  hash_w_ = init::fan_in_uniform({config_.dims[kStages - 1], config_.hash_bits},
                                 config_.dims[kStages - 1], rng);
  hash_b_ = init::zeros({config_.hash_bits});
}

NamedParams MambaHashNet::parameters() const {
  NamedParams out;
  stem_.collect("stem.", out);
  for (std::size_t s = 0; s < kStages; ++s) {
    for (std::size_t d = 0; d < stages_[s].size(); ++d) {
      stages_[s][d].collect("stage" + std::to_string(s) + ".block" + std::to_string(d) + ".", out);
    }
    if (s + 1 < kStages) downsample_[s].collect("down" + std::to_string(s) + ".", out);
  }
  afem_.collect("afem.", out);
  out.emplace_back("hash.w", hash_w_);
  out.emplace_back("hash.b", hash_b_);
  return out;
}

std::size_t MambaHashNet::parameter_count() const { return count_values(parameters()); }

Tensor MambaHashNet::forward(const Tensor& images, NetworkTrace* trace) const {
  const auto opt = config_.block_options();
  Tensor x = stem(images, stem_);
  for (std::size_t s = 0; s < kStages; ++s) {
    const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), D = x.dim(3);
    if (trace) trace->stage_shapes.push_back(x.shape());
    Tensor seq = ops::reshape(x, {B, H * W, D});
    for (const auto& block : stages_[s]) seq = blocks::mamba_block(seq, H, W, block, opt);
    x = ops::reshape(seq, {B, H, W, D});
    if (s + 1 < kStages) x = downsample(x, downsample_[s]);
  }
  if (trace) trace->afem_shape = x.shape();
  x = afem(x, afem_);
  Tensor pooled = ops::global_avg_pool(x);
  if (trace) trace->pooled = pooled;
  return ops::tanh(ops::linear(pooled, hash_w_, hash_b_));
}

Tensor forward_hash(const Tensor& images, const MambaHashNet& net) { return net.forward(images); }

}  // namespace mambahash
