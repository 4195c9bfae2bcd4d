#include "doctest.h"

#include <cmath>
#include <sstream>

#include "mambahash/errors.hpp"
#include "mambahash/trainer.hpp"

using namespace mambahash;

namespace {

std::vector<TrainingItem> items_of(const Dataset& d, Split s) {
  std::vector<TrainingItem> out;
  for (auto i : d.indices(s)) out.push_back({&d.records[i].image, d.records[i].labels});
  return out;
}

std::vector<std::vector<double>> snapshot(const MambaHashNet& net) {
  std::vector<std::vector<double>> out;
  for (const auto& [n, t] : net.parameters()) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

SynthOptions small_synth(std::size_t per_class) {
  SynthOptions o;
  o.train_per_class = per_class;
  o.query_per_class = 0;
  o.database_per_class = 0;
  return o;
}

}  // namespace

TEST_CASE("rmsprop single step") {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.0;
  std::vector<double> p{1.0}, g{1.0}, v{0.0};
  rmsprop_update(p, g, v, cfg);
  CHECK(v[0] == doctest::Approx(0.01));
  CHECK(p[0] == doctest::Approx(1.0 - 0.01 / (0.1 + 1e-8)));
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("rmsprop two steps with constant gradient") {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.0;
  std::vector<double> p{1.0}, g{2.0}, v{0.0};
  rmsprop_update(p, g, v, cfg);
  rmsprop_update(p, g, v, cfg);
  const double a = 0.99;
  const double v2 = (1 - a * a) * 4.0;
  CHECK(v[0] == doctest::Approx(v2));
  const double p1 = 1.0 - 0.01 * 2.0 / (std::sqrt(0.04) + 1e-8);
  CHECK(p[0] == doctest::Approx(p1 - 0.01 * 2.0 / (std::sqrt(v2) + 1e-8)));
}

TEST_CASE("rmsprop zero gradient and no decay keeps parameters") {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  std::vector<double> p{0.3, -2.0}, g{0.0, 0.0}, v{0.0, 0.0};
  rmsprop_update(p, g, v, cfg);
  CHECK(p == std::vector<double>{0.3, -2.0});
}

TEST_CASE("rmsprop rejects a non-finite gradient before touching anything") {
  NamedParams params{{"a", Tensor::full({2}, 1.0, true)}, {"b", Tensor::full({2}, 1.0, true)}};
  params[0].second.mutable_grad()[0] = 1.0;
  params[1].second.mutable_grad()[1] = std::nan("");
  RmspropState st;
  TrainConfig cfg;
  try {
    rmsprop_step(params, st, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(params[0].second.data()[0] == 1.0);
}

TEST_CASE("augment") {
  Image img{4, std::vector<std::uint8_t>(48)};
  for (std::size_t i = 0; i < 48; ++i) img.pixels[i] = std::uint8_t(i * 5);
  Rng rng(1);
  AugmentOptions flip{0, 0, true, std::pair<std::size_t, std::size_t>{0, 0}};
  CHECK(augment(augment(img, rng, flip), rng, flip) == img);
  AugmentOptions same{0, 0, false, std::pair<std::size_t, std::size_t>{0, 0}};
  CHECK(augment(img, rng, same) == img);
  AugmentOptions padded{4, 2, false, std::pair<std::size_t, std::size_t>{0, 0}};
  const Image shifted = augment(img, rng, padded);
  CHECK(shifted.at(0, 0, 0) == 0);
  CHECK(shifted.at(2, 2, 1) == img.at(0, 0, 1));
  AugmentOptions flipped{0, 0, true, std::pair<std::size_t, std::size_t>{0, 0}};
  CHECK(augment(img, rng, flipped).at(1, 0, 2) == img.at(1, 3, 2));
  CHECK_THROWS_AS(augment(img, rng, AugmentOptions{9, 2, std::nullopt, std::nullopt}), ConfigError);

  AugmentOptions rnd{4, 2, std::nullopt, std::nullopt};
  Rng r1(42), r2(42);
  for (int i = 0; i < 5; ++i) CHECK(augment(img, r1, rnd) == augment(img, r2, rnd));
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  const Dataset data = synth_dataset(small_synth(3));
  MambaHashNet net(ModelConfig::tiny(16), 1);
  const auto before = snapshot(net);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.batch_size = 4;
  Trainer tr(net, cfg);
  tr.train_epoch(items_of(data, Split::kTrain));
  CHECK(snapshot(net) == before);
}

TEST_CASE("single batch loss equals total_loss on that batch") {
  const Dataset data = synth_dataset(small_synth(2));
  MambaHashNet net(ModelConfig::tiny(16), 2);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.augment = false;
  const auto items = items_of(data, Split::kTrain);
  std::vector<const Image*> images;
  std::vector<LabelSet> labels;
  for (const auto& it : items) {
    images.push_back(it.image);
    labels.push_back(it.labels);
  }
  const double direct = total_loss(net.forward(images_to_tensor(images)), similarity_matrix(labels),
                                   net.config().eta).breakdown.total;
  Trainer tr(net, cfg);
  const auto losses = tr.train_epoch(items);
  REQUIRE(losses.size() == 1);
  // shuffled order permutes pairs; the sum is the same up to rounding
  CHECK(losses[0].total == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("trailing singleton batch is skipped") {
  const Dataset data = synth_dataset(small_synth(3));
  MambaHashNet net(ModelConfig::tiny(16), 3);
  TrainConfig cfg;
  cfg.batch_size = 5;
  Trainer tr(net, cfg);
  CHECK(tr.train_epoch(items_of(data, Split::kTrain)).size() == 1);
  CHECK(tr.epochs_done() == 1);
}

TEST_CASE("loss decreases over the first epochs on the synthetic set") {
  const Dataset data = synth_dataset(small_synth(32));
  MambaHashNet net(ModelConfig::tiny(16), 5);
  TrainConfig cfg;
  cfg.learning_rate = 1e-4;
  cfg.batch_size = 16;
  cfg.augment = false;
  cfg.seed = 5;
  Trainer tr(net, cfg);
  const auto items = items_of(data, Split::kTrain);
  std::vector<double> means;
  for (int e = 0; e < 10; ++e) {
    double s = 0.0;
    const auto l = tr.train_epoch(items);
    for (const auto& b : l) s += b.total;
    means.push_back(s / double(l.size()));
  }
  MESSAGE("first/last epoch loss " << means.front() << " " << means.back());
  CHECK(means.back() < means.front());
}

TEST_CASE("fixed seed gives identical histories") {
  const Dataset data = synth_dataset(small_synth(3));
  TrainConfig cfg;
  cfg.batch_size = 3;
  cfg.epochs = 2;
  cfg.seed = 9;
  const auto a = train_model(ModelConfig::tiny(16), cfg, data);
  const auto b = train_model(ModelConfig::tiny(16), cfg, data);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].loss.total == b.history[i].loss.total);
  CHECK(snapshot(a.net) == snapshot(b.net));
}

TEST_CASE("train config validation and text") {
  TrainConfig c;
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  TrainConfig d;
  d.learning_rate = 0.00123;
  d.augment = false;
  d.crop_side = 28;
  TrainConfig e;
  std::istringstream is(d.to_text());
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    e.set(line.substr(0, eq - 1), line.substr(eq + 1));
  }
  CHECK(e == d);
}
