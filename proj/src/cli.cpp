#include "mambahash/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "mambahash/checkpoint.hpp"
#include "mambahash/config_file.hpp"
#include "mambahash/dataset.hpp"
#include "mambahash/errors.hpp"
#include "mambahash/parallel.hpp"
#include "mambahash/retrieval.hpp"
#include "mambahash/selfcheck.hpp"
#include "mambahash/trainer.hpp"

namespace mambahash::cli {

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct Globals {
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string metrics_out;
};

struct TrainArgs {
  std::string config, data, out, preset = "tiny";
  std::optional<std::size_t> bits, epochs, batch_size;
  std::optional<double> lr;
};

struct EncodeArgs {
  std::string ckpt, data, out, split = "database";
  std::size_t batch_size = 32;
};

struct QueryArgs {
  std::string query, db;
  std::size_t index = 0, topk = 10;
};

struct EvalArgs {
  std::string query, db;
  std::size_t topk = 0;
  std::size_t precision_k = 0;
};

struct SynthArgs {
  std::string out;
  SynthOptions opt;
};

double mean_of(const std::vector<LossBreakdown>& v, double LossBreakdown::*field) {
  double s = 0.0;
  for (const auto& b : v) s += b.*field;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string config_snapshot(const std::string& text) {
  std::string s;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line.erase(std::remove(line.begin(), line.end(), ' '), line.end());
    if (line.empty()) continue;
    if (!s.empty()) s += ';';
    s += line;
  }
  return s;
}

void cmd_train(const TrainArgs& a, const Globals& g, RunManifest& m, std::ostream& out) {
  RunConfig base;
  if (a.preset == "tiny") base.model = ModelConfig::tiny(a.bits.value_or(16));
  else base.model = ModelConfig{};
  RunConfig rc = a.config.empty() ? base : load_run_config(a.config, base);
  if (a.bits) rc.model.hash_bits = *a.bits;
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.lr) rc.train.learning_rate = *a.lr;
  if (a.batch_size) rc.train.batch_size = *a.batch_size;
  if (g.seed) rc.train.seed = *g.seed;
  rc.model.validate();
  rc.train.validate();

  const Dataset data = load_dataset(a.data);
  m.add("model", config_snapshot(rc.model.to_text()));
  m.add("train", config_snapshot(rc.train.to_text()));
  m.add("seed", std::to_string(rc.train.seed));
  m.add("data", a.data);
  m.add("out", a.out);

  TrainOutcome result = train_model(rc.model, rc.train, data,
                                    [&](std::size_t e, const std::vector<LossBreakdown>& losses) {
                                      const double total = mean_of(losses, &LossBreakdown::total);
                                      out << "epoch=" << e << " loss=" << fixed6(total) << '\n';
                                    });
  save_checkpoint(result.net, a.out);

  std::size_t epoch = 0;
  std::vector<LossBreakdown> current;
  auto flush = [&] {
    if (current.empty()) return;
    m.add("epoch" + std::to_string(epoch) + ".loss", mean_of(current, &LossBreakdown::total));
    m.add("epoch" + std::to_string(epoch) + ".nll", mean_of(current, &LossBreakdown::nll_term));
    m.add("epoch" + std::to_string(epoch) + ".quant", mean_of(current, &LossBreakdown::quant_term));
    current.clear();
  };
  for (const auto& rec : result.history) {
    if (rec.epoch != epoch) {
      flush();
      epoch = rec.epoch;
    }
    current.push_back(rec.loss);
  }
  flush();
  m.add("batches", static_cast<double>(result.history.size()));
  m.add("parameters", static_cast<double>(result.net.parameter_count()));
  if (!result.history.empty()) m.add("final_loss", result.history.back().loss.total);
}

void cmd_encode(const EncodeArgs& a, RunManifest& m, std::ostream& out) {
  const MambaHashNet net = load_checkpoint(a.ckpt);
  const Dataset data = load_dataset(a.data);
  const Split split = parse_split(a.split);
  const auto idx = data.indices(split);
  if (idx.empty()) throw DataError("encode: dataset has no '" + a.split + "' records");
  const PackedCodes codes = encode_records(net, data, idx, a.batch_size);
  save_codes(a.out, codes);
  m.add("ckpt", a.ckpt);
  m.add("data", a.data);
  m.add("split", a.split);
  m.add("out", a.out);
  m.add("codes", static_cast<double>(codes.size()));
  m.add("bits", static_cast<double>(codes.bits()));
  out << "codes=" << codes.size() << " bits=" << codes.bits() << '\n';
}

void cmd_index_check(const std::string& path, RunManifest& m, std::ostream& out) {
  const PackedCodes codes = load_codes(path);
  std::size_t labelled = 0;
  for (std::size_t i = 0; i < codes.size(); ++i)
    if (codes.has_labels() && !codes.labels(i).empty()) ++labelled;
  m.add("codes_file", path);
  m.add("codes", static_cast<double>(codes.size()));
  m.add("bits", static_cast<double>(codes.bits()));
  m.add("labelled", static_cast<double>(labelled));
  out << "ok codes=" << codes.size() << " bits=" << codes.bits() << " labelled=" << labelled << '\n';
}

void cmd_query(const QueryArgs& a, RunManifest& m, std::ostream& out) {
  const PackedCodes q = load_codes(a.query);
  const PackedCodes db = load_codes(a.db);
  if (a.index >= q.size()) {
    throw ContractError("query: index " + std::to_string(a.index) + " out of range (" +
                        std::to_string(q.size()) + " queries)");
  }
  const RankedResult r = search_topk(q.code(a.index), db, a.topk);
  m.add("query", a.query);
  m.add("db", a.db);
  m.add("index", static_cast<double>(a.index));
  m.add("topk", static_cast<double>(a.topk));
  m.add("returned", static_cast<double>(r.hits.size()));
  std::size_t rank = 0;
  for (const Hit& h : r.hits) {
    out << rank << '\t' << h.index << '\t' << h.distance;
    if (q.has_labels() && db.has_labels()) out << '\t' << (labels_intersect(q.labels(a.index), db.labels(h.index)) ? 1 : 0);
    out << '\n';
    ++rank;
  }
}

void cmd_eval(const EvalArgs& a, RunManifest& m, std::ostream& out) {
  const PackedCodes q = load_codes(a.query);
  const PackedCodes db = load_codes(a.db);
  const MapReport rep = mean_average_precision(q, db, a.topk);
  m.add("query", a.query);
  m.add("db", a.db);
  m.add("topk", static_cast<double>(a.topk));
  m.add("map", rep.map);
  m.add("included", static_cast<double>(rep.included));
  m.add("excluded", static_cast<double>(rep.excluded));
  out << "map=" << fixed6(rep.map) << '\n';
  out << "included=" << rep.included << " excluded=" << rep.excluded << '\n';
  if (a.precision_k > 0) {
    const double p = precision_at_k(q, db, a.precision_k);
    m.add("precision@" + std::to_string(a.precision_k), p);
    out << "precision@" << a.precision_k << '=' << fixed6(p) << '\n';
  }
}

void cmd_synth(SynthArgs a, const Globals& g, RunManifest& m, std::ostream& out) {
  if (g.seed) a.opt.seed = *g.seed;
  const Dataset data = synth_dataset(a.opt);
  write_dataset(a.out, data);
  m.add("out", a.out);
  m.add("seed", std::to_string(a.opt.seed));
  m.add("classes", static_cast<double>(a.opt.classes));
  m.add("side", static_cast<double>(a.opt.side));
  m.add("records", static_cast<double>(data.records.size()));
  out << "records=" << data.records.size() << " dir=" << a.out << '\n';
}

bool cmd_selfcheck(bool quick, const Globals& g, RunManifest& m, std::ostream& out) {
  selfcheck::Options opt;
  if (g.seed) opt.seed = *g.seed;
  opt.quick = quick;
  std::size_t passed = 0, total = 0;
  selfcheck::run_all(opt, [&](const selfcheck::CheckResult& r) {
    out << selfcheck::format(r) << std::endl;
    m.add("check" + std::to_string(r.id), r.passed ? "pass" : "fail");
    ++total;
    if (r.passed) ++passed;
  });
  m.add("passed", static_cast<double>(passed));
  m.add("total", static_cast<double>(total));
  return passed == total;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mambahash: state-space hashing, training and Hamming retrieval", "mambahash"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "RNG seed override");
  app.add_flag("--deterministic", g.deterministic, "single-threaded, reproducible execution");
  app.add_option("--metrics-out", g.metrics_out, "run manifest path (key=value lines)");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a network and write a checkpoint");
  train->add_option("--config", ta.config, "config file with [model], [train], [loss] sections");
  train->add_option("--data", ta.data, "dataset directory")->required();
  train->add_option("--out", ta.out, "checkpoint path")->required();
  train->add_option("--bits", ta.bits, "hash code length K");
  train->add_option("--epochs", ta.epochs);
  train->add_option("--lr", ta.lr, "learning rate");
  train->add_option("--batch-size", ta.batch_size);
  train->add_option("--preset", ta.preset, "model preset")->check(CLI::IsMember({"tiny", "full"}));

  EncodeArgs ea;
  auto* encode = app.add_subcommand("encode", "encode a dataset split into a .mbhc code file");
  encode->add_option("--ckpt", ea.ckpt, "checkpoint path")->required();
  encode->add_option("--data", ea.data, "dataset directory")->required();
  encode->add_option("--out", ea.out, "output .mbhc path")->required();
  encode->add_option("--split", ea.split)->check(CLI::IsMember({"train", "query", "database"}));
  encode->add_option("--batch-size", ea.batch_size)->check(CLI::PositiveNumber);

  std::string check_path;
  auto* index_check = app.add_subcommand("index-check", "validate a .mbhc code file");
  index_check->add_option("codes", check_path, ".mbhc path")->required();

  QueryArgs qa;
  auto* query = app.add_subcommand("query", "list the top-k database codes for one query");
  query->add_option("--query", qa.query, "query .mbhc")->required();
  query->add_option("--db", qa.db, "database .mbhc")->required();
  query->add_option("--index", qa.index, "query row");
  query->add_option("--topk", qa.topk)->check(CLI::PositiveNumber);

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "MAP and precision@k of query codes against a database");
  eval->add_option("--query", va.query, "query .mbhc")->required();
  eval->add_option("--db", va.db, "database .mbhc")->required();
  eval->add_option("--topk", va.topk, "MAP cutoff, 0 = whole database");
  eval->add_option("--precision-k", va.precision_k, "also report precision@k");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth-data", "write the synthetic labelled dataset");
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--classes", sa.opt.classes)->check(CLI::PositiveNumber);
  synth->add_option("--side", sa.opt.side)->check(CLI::PositiveNumber);
  synth->add_option("--train-per-class", sa.opt.train_per_class);
  synth->add_option("--query-per-class", sa.opt.query_per_class);
  synth->add_option("--database-per-class", sa.opt.database_per_class);

  bool quick = false;
  auto* check = app.add_subcommand("selfcheck", "run the property suites");
  check->add_flag("--quick", quick, "skip the end-to-end training check");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "mambahash: usage error: " << one_line(e.what()) << '\n';
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  set_deterministic(g.deterministic);

  RunManifest manifest;
  manifest.command = name;
  std::string manifest_path = g.metrics_out;
  if (manifest_path.empty()) {
    if (name == "train") manifest_path = ta.out + ".manifest";
    else if (name == "encode") manifest_path = ea.out + ".manifest";
    else if (name == "synth-data") manifest_path = sa.out + "/run.manifest";
    else manifest_path = "mambahash-" + name + ".manifest";
  }

  const auto start = std::chrono::steady_clock::now();
  int code = kExitOk;
  try {
    if (name == "train") cmd_train(ta, g, manifest, out);
    else if (name == "encode") cmd_encode(ea, manifest, out);
    else if (name == "index-check") cmd_index_check(check_path, manifest, out);
    else if (name == "query") cmd_query(qa, manifest, out);
    else if (name == "eval") cmd_eval(va, manifest, out);
    else if (name == "synth-data") cmd_synth(sa, g, manifest, out);
    else if (name == "selfcheck") code = cmd_selfcheck(quick, g, manifest, out) ? kExitOk : kExitFailure;
  } catch (const ConfigError& e) {
    err << "mambahash " << name << ": " << one_line(e.what()) << '\n';
    code = kExitUsage;
  } catch (const std::exception& e) {
    err << "mambahash " << name << ": " << one_line(e.what()) << '\n';
    code = kExitFailure;
  }

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest.add("deterministic", g.deterministic ? "true" : "false");
  manifest.add("exit_code", static_cast<double>(code));
  manifest.add("wall_seconds", seconds);
  try {
    manifest.write(manifest_path);
  } catch (const std::exception& e) {
    err << "mambahash " << name << ": " << one_line(e.what()) << '\n';
    if (code == kExitOk) code = kExitFailure;
  }
  return code;
}

}  // namespace mambahash::cli
