#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mambahash/checkpoint.hpp"
#include "mambahash/cli.hpp"
#include "mambahash/dataset.hpp"
#include "mambahash/parallel.hpp"
#include "mambahash/retrieval.hpp"
#include "mambahash/trainer.hpp"

using namespace mambahash;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_command(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mbhh_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  const fs::path dir = scratch("usage");
  const std::string m = (dir / "m.txt").string();
  CHECK(run({"--metrics-out", m, "frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"--metrics-out", m}).code == cli::kExitUsage);
  const Run r = run({"--metrics-out", m, "eval", "--query", "a", "--db", "b", "--bogus"});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find('\n') == r.err.size() - 1);
  CHECK(run({"--metrics-out", m, "train", "--data", "x", "--out", "y", "--preset", "huge"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);
  fs::remove_all(dir);
}

TEST_CASE("missing checkpoint exits 1 and names the path") {
  const fs::path dir = scratch("missing");
  const std::string ckpt = (dir / "missing.bin").string();
  const Run r = run({"--metrics-out", (dir / "m.txt").string(), "encode", "--ckpt", ckpt, "--data", dir.string(),
                     "--out", (dir / "c.mbhc").string()});
  CHECK(r.code == cli::kExitFailure);
  CHECK(r.err.find(ckpt) != std::string::npos);
  CHECK(fs::exists(dir / "m.txt"));
  CHECK(slurp(dir / "m.txt").find("exit_code=1") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("eval on the hand-built average precision case") {
  const fs::path dir = scratch("eval");
  save_codes((dir / "q.mbhc").string(), binarize_pack(std::vector<double>{1, 1, 1, 1}, 1, 4, {{0}}));
  save_codes((dir / "d.mbhc").string(),
             binarize_pack(std::vector<double>{1, 1, 1, 1, 1, 1, 1, -1, 1, 1, -1, -1}, 3, 4, {{0}, {1}, {0}}));
  const std::string m = (dir / "eval.manifest").string();
  const Run r = run({"--metrics-out", m, "eval", "--query", (dir / "q.mbhc").string(), "--db",
                     (dir / "d.mbhc").string(), "--topk", "0"});
  CHECK(r.code == 0);
  CHECK(r.out.find("map=0.833333\n") == 0);
  const std::string manifest = slurp(m);
  CHECK(manifest.rfind("command=eval\n", 0) == 0);
  CHECK(manifest.find("map=0.83333333333333") != std::string::npos);

  const Run q = run({"--metrics-out", m, "query", "--query", (dir / "q.mbhc").string(), "--db",
                     (dir / "d.mbhc").string(), "--topk", "2"});
  CHECK(q.code == 0);
  CHECK(q.out == "0\t0\t0\t1\n1\t1\t1\t0\n");

  const Run ok = run({"--metrics-out", m, "index-check", (dir / "d.mbhc").string()});
  CHECK(ok.code == 0);
  CHECK(ok.out == "ok codes=3 bits=4 labelled=3\n");
  std::ofstream(dir / "junk.mbhc") << "JUNKJUNKJUNK";
  const Run bad = run({"--metrics-out", m, "index-check", (dir / "junk.mbhc").string()});
  CHECK(bad.code == cli::kExitFailure);
  CHECK(bad.err.find("magic") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("train, encode and eval through the CLI match the library pipeline") {
  const fs::path dir = scratch("pipeline");
  const std::string data = (dir / "data").string();
  REQUIRE(run({"--seed", "5", "synth-data", "--out", data, "--side", "32", "--train-per-class", "4",
               "--query-per-class", "2", "--database-per-class", "4"})
              .code == 0);
  CHECK(fs::exists(dir / "data" / "manifest.tsv"));
  CHECK(fs::exists(dir / "data" / "run.manifest"));

  std::ofstream(dir / "cfg.ini") << "[train]\nbatch_size = 4\naugment = true\n[loss]\neta = 0.05\n";
  const std::string ckpt = (dir / "model.bin").string();
  const Run t = run({"--seed", "3", "--deterministic", "train", "--config", (dir / "cfg.ini").string(), "--data",
                     data, "--bits", "16", "--out", ckpt, "--epochs", "2", "--lr", "1e-4"});
  REQUIRE_MESSAGE(t.code == 0, t.err);
  const std::string manifest = slurp(ckpt + ".manifest");
  CHECK(manifest.rfind("command=train\n", 0) == 0);
  CHECK(manifest.find("epoch0.loss=") != std::string::npos);
  CHECK(manifest.find("epoch1.loss=") != std::string::npos);
  CHECK(manifest.find("seed=3") != std::string::npos);

  const std::string qf = (dir / "q.mbhc").string(), df = (dir / "d.mbhc").string();
  REQUIRE(run({"--deterministic", "encode", "--ckpt", ckpt, "--data", data, "--split", "query", "--out", qf}).code == 0);
  REQUIRE(run({"--deterministic", "encode", "--ckpt", ckpt, "--data", data, "--out", df}).code == 0);
  const Run e = run({"--metrics-out", (dir / "e.manifest").string(), "eval", "--query", qf, "--db", df});
  REQUIRE(e.code == 0);

  // same steps in process
  set_deterministic(true);
  const Dataset d = load_dataset(data);
  ModelConfig mc = ModelConfig::tiny(16);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 2;
  tc.learning_rate = 1e-4;
  tc.seed = 3;
  const TrainOutcome lib = train_model(mc, tc, d);
  set_deterministic(false);
  CHECK(encode_checkpoint(lib.net) == encode_checkpoint(load_checkpoint(ckpt)));
  const PackedCodes q = encode_records(lib.net, d, d.indices(Split::kQuery));
  const PackedCodes db = encode_records(lib.net, d, d.indices(Split::kDatabase));
  const std::string qbytes = slurp(qf);
  CHECK(encode_code_file(q) == std::vector<std::uint8_t>(qbytes.begin(), qbytes.end()));
  const std::string dbytes = slurp(df);
  CHECK(encode_code_file(db) == std::vector<std::uint8_t>(dbytes.begin(), dbytes.end()));
  char buf[64];
  std::snprintf(buf, sizeof buf, "map=%.6f\n", mean_average_precision(q, db, 0).map);
  CHECK(e.out.rfind(buf, 0) == 0);
  fs::remove_all(dir);
}
