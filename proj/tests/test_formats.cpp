#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "mambahash/checkpoint.hpp"
#include "mambahash/config_file.hpp"
#include "mambahash/dataset.hpp"
#include "mambahash/errors.hpp"

using namespace mambahash;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mbhh_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  const MambaHashNet net(ModelConfig::tiny(16), 4);
  const fs::path path = scratch("ckpt.bin");
  save_checkpoint(net, path.string());
  const MambaHashNet back = load_checkpoint(path.string());
  CHECK(back.config() == net.config());
  const Dataset d = synth_dataset(SynthOptions{2, 32, 1, 0, 0, 3});
  std::vector<const Image*> imgs{&d.records[0].image, &d.records[1].image};
  const Tensor x = images_to_tensor(imgs);
  const Tensor a = net.forward(x), b = back.forward(x);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end()));
  CHECK(encode_checkpoint(back) == encode_checkpoint(net));
  fs::remove(path);
}

TEST_CASE("checkpoint rejection paths") {
  const MambaHashNet net(ModelConfig::tiny(16), 4);
  const auto bytes = encode_checkpoint(net);
  auto bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + bytes.size() / 2)),
                  FormatError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.bin"), IoError);
}

TEST_CASE("mismatched config load leaves the target untouched") {
  const MambaHashNet small(ModelConfig::tiny(16), 4);
  const fs::path path = scratch("ckpt16.bin");
  save_checkpoint(small, path.string());
  MambaHashNet other(ModelConfig::tiny(32), 5);
  const auto before = encode_checkpoint(other);
  CHECK_THROWS_AS(load_checkpoint_into(other, path.string()), ConfigError);
  CHECK(encode_checkpoint(other) == before);
  MambaHashNet same(ModelConfig::tiny(16), 6);
  load_checkpoint_into(same, path.string());
  CHECK(encode_checkpoint(same) == encode_checkpoint(small));
  fs::remove(path);
}

TEST_CASE("dataset write and load") {
  const fs::path dir = scratch("data");
  SynthOptions o;
  o.classes = 3;
  o.side = 8;
  o.train_per_class = 2;
  o.query_per_class = 1;
  o.database_per_class = 2;
  const Dataset d = synth_dataset(o);
  CHECK(d.records.size() == 15);
  CHECK(d.indices(Split::kQuery).size() == 3);
  write_dataset(dir.string(), d);
  const Dataset back = load_dataset(dir.string());
  REQUIRE(back.records.size() == d.records.size());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    CHECK(back.records[i].id == d.records[i].id);
    CHECK(back.records[i].labels == d.records[i].labels);
    CHECK(back.records[i].split == d.records[i].split);
    CHECK(back.records[i].image == d.records[i].image);
  }
  CHECK(synth_dataset(o).records[4].image == d.records[4].image);
  fs::remove_all(dir);
}

TEST_CASE("malformed manifests") {
  const fs::path dir = scratch("bad_data");
  fs::create_directories(dir / "images");
  std::vector<std::uint8_t> px(4 * 4 * 3, 7);
  std::ofstream(dir / "images" / "a.rgb", std::ios::binary).write(reinterpret_cast<const char*>(px.data()), px.size());
  std::ofstream(dir / "images" / "b.rgb", std::ios::binary).write("abcde", 5);
  auto write_manifest = [&](const std::string& text) { std::ofstream(dir / "manifest.tsv") << text; };

  write_manifest("a\timages/a.rgb\ttrain\t0,2\n");
  CHECK(load_dataset(dir.string()).records[0].labels == LabelSet{0, 2});
  write_manifest("a\timages/a.rgb\tvalidation\t0\n");
  CHECK_THROWS_AS(load_dataset(dir.string()), DataError);
  write_manifest("a\timages/a.rgb\ttrain\t\n");
  CHECK_THROWS_AS(load_dataset(dir.string()), DataError);
  write_manifest("a\timages/a.rgb\ttrain\t0\na\timages/a.rgb\tquery\t1\n");
  CHECK_THROWS_AS(load_dataset(dir.string()), DataError);
  write_manifest("a\timages/a.rgb\ttrain\n");
  CHECK_THROWS_AS(load_dataset(dir.string()), DataError);
  write_manifest("b\timages/b.rgb\ttrain\t0\n");
  CHECK_THROWS_AS(load_dataset(dir.string()), DataError);
  write_manifest("c\timages/missing.rgb\ttrain\t0\n");
  CHECK_THROWS_AS(load_dataset(dir.string()), IoError);
  CHECK_THROWS_AS(load_dataset((dir / "nope").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("run config sections") {
  const std::string text =
      "# comment\n"
      "[model]\n"
      "hash_bits = 32\n"
      "dims = 8,16,24,32\n"
      "discretization = euler\n"
      "[train]\n"
      "learning_rate = 0.002\n"
      "batch_size = 8\n"
      "[loss]\n"
      "eta = 0.1\n";
  const RunConfig rc = parse_run_config(text);
  CHECK(rc.model.hash_bits == 32);
  CHECK(rc.model.dims[2] == 24);
  CHECK(rc.model.discretization == ssm::Discretization::kEuler);
  CHECK(rc.train.learning_rate == 0.002);
  CHECK(rc.train.batch_size == 8);
  CHECK(rc.model.eta == 0.1);
  CHECK_THROWS_AS(parse_run_config("[model]\nwidth = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[optim]\nlr = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train]\nlearning_rate\n"), ConfigError);
  try {
    parse_run_config("[train]\n\nbatch_size = x\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}
