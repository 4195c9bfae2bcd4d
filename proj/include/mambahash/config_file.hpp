#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mambahash/network.hpp"
#include "mambahash/trainer.hpp"

namespace mambahash {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// Parses "key = value" lines grouped under [model], [train] and [loss]
// sections ('#' starts a comment). [loss] accepts `eta`. Unknown sections
// or keys raise ConfigError with the line number.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::string& path, RunConfig base = {});

// Machine-readable record of one CLI run, written as key=value lines.
struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> entries;

  void add(const std::string& key, const std::string& value);
  void add(const std::string& key, double value);
  std::string to_text() const;
  void write(const std::string& path) const;
};

}  // namespace mambahash
