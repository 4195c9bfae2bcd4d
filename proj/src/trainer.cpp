#include "mambahash/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "mambahash/errors.hpp"

namespace mambahash {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a real number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size() || v[0] == '-') throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be finite and >= 0");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 (the loss needs pairs)");
  if (!(rmsprop_alpha >= 0.0 && rmsprop_alpha < 1.0)) throw ConfigError("train: rmsprop_alpha must be in [0, 1)");
  if (!(rmsprop_eps > 0.0)) throw ConfigError("train: rmsprop_eps must be > 0");
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "learning_rate = " << learning_rate << '\n'
     << "weight_decay = " << weight_decay << '\n'
     << "batch_size = " << batch_size << '\n'
     << "epochs = " << epochs << '\n'
     << "seed = " << seed << '\n'
     << "rmsprop_alpha = " << rmsprop_alpha << '\n'
     << "rmsprop_eps = " << rmsprop_eps << '\n'
     << "augment = " << (augment ? "true" : "false") << '\n'
     << "crop_side = " << crop_side << '\n'
     << "crop_pad = " << crop_pad << '\n';
  return os.str();
}

bool TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "learning_rate" || key == "lr") learning_rate = to_real(key, v);
  else if (key == "weight_decay") weight_decay = to_real(key, v);
  else if (key == "batch_size") batch_size = to_uint(key, v);
  else if (key == "epochs") epochs = to_uint(key, v);
  else if (key == "seed") seed = to_uint(key, v);
  else if (key == "rmsprop_alpha") rmsprop_alpha = to_real(key, v);
  else if (key == "rmsprop_eps") rmsprop_eps = to_real(key, v);
  else if (key == "augment") augment = to_bool(key, v);
  else if (key == "crop_side") crop_side = to_uint(key, v);
  else if (key == "crop_pad") crop_pad = to_uint(key, v);
  else return false;
  return true;
}

void rmsprop_update(std::span<double> param, std::span<const double> grad,
                    std::span<double> mean_square, const TrainConfig& cfg) {
  if (param.size() != grad.size() || param.size() != mean_square.size()) {
    throw DimensionError("rmsprop_update: parameter, gradient and state sizes differ");
  }
  const double a = cfg.rmsprop_alpha, lr = cfg.learning_rate;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    mean_square[i] = a * mean_square[i] + (1.0 - a) * g * g;
    param[i] = param[i] - lr * g / (std::sqrt(mean_square[i]) + cfg.rmsprop_eps) -
               lr * cfg.weight_decay * param[i];
  }
}

void rmsprop_step(NamedParams& params, RmspropState& state, const TrainConfig& cfg) {
  if (state.mean_square.empty()) {
    for (const auto& [name, t] : params) state.mean_square.emplace_back(t.numel(), 0.0);
  }
  if (state.mean_square.size() != params.size()) {
    throw DimensionError("rmsprop_step: optimizer state tracks " + std::to_string(state.mean_square.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.mean_square[i].size() != params[i].second.numel()) {
      throw DimensionError("rmsprop_step: state shape mismatch for '" + params[i].first + "'");
    }
    for (double g : params[i].second.grad()) {
      if (!std::isfinite(g)) throw NumericError("rmsprop_step: non-finite gradient in '" + params[i].first + "'");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].second;
    std::vector<double> zero;
    std::span<const double> g = t.grad();
    if (g.empty()) {
      zero.assign(t.numel(), 0.0);
      g = zero;
    }
    rmsprop_update(t.mutable_data(), g, state.mean_square[i], cfg);
  }
}

Image augment(const Image& image, Rng& rng, const AugmentOptions& opt) {
  const std::size_t S = image.side;
  const std::size_t padded = S + 2 * opt.pad;
  const std::size_t crop = opt.crop_side == 0 ? S : opt.crop_side;
  if (crop > padded) {
    throw ConfigError("augment: crop side " + std::to_string(crop) + " exceeds padded image side " +
                      std::to_string(padded));
  }
  std::bernoulli_distribution coin(0.5);
  const bool flip = opt.force_flip ? *opt.force_flip : coin(rng);
  std::size_t oy, ox;
  if (opt.force_offset) {
    std::tie(oy, ox) = *opt.force_offset;
    if (oy + crop > padded || ox + crop > padded) throw ConfigError("augment: crop offset out of range");
  } else {
    std::uniform_int_distribution<std::size_t> off(0, padded - crop);
    oy = off(rng);
    ox = off(rng);
  }
  Image out{crop, std::vector<std::uint8_t>(crop * crop * 3, 0)};
  for (std::size_t y = 0; y < crop; ++y)
    for (std::size_t x = 0; x < crop; ++x) {
      const long py = static_cast<long>(oy + y) - static_cast<long>(opt.pad);
      long px = static_cast<long>(ox + x) - static_cast<long>(opt.pad);
      if (py < 0 || px < 0 || py >= static_cast<long>(S) || px >= static_cast<long>(S)) continue;
      if (flip) px = static_cast<long>(S) - 1 - px;
      for (std::size_t c = 0; c < 3; ++c) out.pixels[(y * crop + x) * 3 + c] = image.at(py, px, c);
    }
  return out;
}

Trainer::Trainer(MambaHashNet& net, TrainConfig cfg)
    : net_(net), cfg_(std::move(cfg)), rng_(cfg_.seed ^ 0x9E3779B97F4A7C15ULL) {
  cfg_.validate();
}

std::vector<LossBreakdown> Trainer::train_epoch(const std::vector<TrainingItem>& data) {
  if (data.empty()) throw ContractError("train_epoch: empty dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng_);

  NamedParams params = net_.parameters();
  const AugmentOptions aug{cfg_.crop_side, cfg_.crop_pad, std::nullopt, std::nullopt};
  std::vector<LossBreakdown> losses;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size, ++batch_index) {
    const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
    if (end - start < 2) break;

    std::vector<Image> augmented;
    std::vector<const Image*> images;
    std::vector<LabelSet> labels;
    augmented.reserve(end - start);
    for (std::size_t k = start; k < end; ++k) {
      const TrainingItem& item = data[order[k]];
      if (cfg_.augment) {
        augmented.push_back(augment(*item.image, rng_, aug));
        images.push_back(&augmented.back());
      } else {
        images.push_back(item.image);
      }
      labels.push_back(item.labels);
    }

    for (auto& [name, t] : params) t.zero_grad();
    Tensor codes = net_.forward(images_to_tensor(images));
    LossResult loss = total_loss(codes, similarity_matrix(labels), net_.config().eta);
    if (!std::isfinite(loss.breakdown.total)) {
      throw NumericError("train_epoch: non-finite loss at epoch " + std::to_string(epoch_) +
                         ", batch " + std::to_string(batch_index));
    }
    loss.total.backward();
    rmsprop_step(params, state_, cfg_);
    losses.push_back(loss.breakdown);
    history_.push_back({epoch_, batch_index, loss.breakdown});
  }
  ++epoch_;
  return losses;
}

Tensor encode_images(const MambaHashNet& net, const std::vector<const Image*>& images,
                     std::size_t batch_size) {
  if (images.empty()) throw ContractError("encode_images: no images");
  if (batch_size == 0) throw ContractError("encode_images: batch_size must be >= 1");
  NoGradGuard no_grad;
  const std::size_t K = net.config().hash_bits;
  std::vector<double> codes;
  codes.reserve(images.size() * K);
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t end = std::min(images.size(), start + batch_size);
    std::vector<const Image*> batch(images.begin() + start, images.begin() + end);
    Tensor h = net.forward(images_to_tensor(batch));
    codes.insert(codes.end(), h.data().begin(), h.data().end());
  }
  return Tensor::from_data({images.size(), K}, std::move(codes));
}

PackedCodes encode_records(const MambaHashNet& net, const Dataset& data,
                           const std::vector<std::size_t>& indices, std::size_t batch_size) {
  std::vector<const Image*> images;
  std::vector<LabelSet> labels;
  for (auto i : indices) {
    images.push_back(&data.records.at(i).image);
    labels.push_back(data.records.at(i).labels);
  }
  return binarize_pack(encode_images(net, images, batch_size), std::move(labels));
}

TrainOutcome train_model(
    const ModelConfig& model, const TrainConfig& train, const Dataset& data,
    const std::function<void(std::size_t, const std::vector<LossBreakdown>&)>& on_epoch) {
  train.validate();
  std::vector<TrainingItem> items;
  for (auto i : data.indices(Split::kTrain)) items.push_back({&data.records[i].image, data.records[i].labels});
  if (items.empty()) throw DataError("train_model: dataset has no train split records");
  TrainOutcome out{MambaHashNet(model, train.seed), {}};
  Trainer trainer(out.net, train);
  for (std::size_t e = 0; e < train.epochs; ++e) {
    const auto losses = trainer.train_epoch(items);
    if (on_epoch) on_epoch(e, losses);
  }
  out.history = trainer.history();
  return out;
}

}  // namespace mambahash
