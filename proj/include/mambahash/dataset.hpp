#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mambahash/objective.hpp"
#include "mambahash/params.hpp"
#include "mambahash/tensor.hpp"

namespace mambahash {

enum class Split { kTrain, kQuery, kDatabase };

Split parse_split(const std::string& name);
std::string to_string(Split s);

// Square 8-bit RGB image stored row-major, channels last.
struct Image {
  std::size_t side = 0;
  std::vector<std::uint8_t> pixels;  // side * side * 3

  std::uint8_t at(std::size_t row, std::size_t col, std::size_t ch) const {
    return pixels[(row * side + col) * 3 + ch];
  }
  bool operator==(const Image&) const = default;
};

struct ImageRecord {
  std::string id;
  std::string path;  // relative to the dataset directory
  Split split = Split::kTrain;
  LabelSet labels;
  Image image;
};

// A dataset directory holds raw images (side*side*3 bytes, side inferred
// from the file size) and manifest.tsv with the columns
//   id <TAB> relative path <TAB> split <TAB> comma-separated label ids.
struct Dataset {
  std::vector<ImageRecord> records;

  std::vector<std::size_t> indices(Split s) const;
  // Throws DataError when an id appears twice or a record has no labels.
  void validate() const;
};

Dataset load_dataset(const std::string& dir);
void write_dataset(const std::string& dir, const Dataset& data);

struct SynthOptions {
  std::size_t classes = 2;
  std::size_t side = 32;
  std::size_t train_per_class = 32;
  std::size_t query_per_class = 8;
  std::size_t database_per_class = 32;
  std::uint64_t seed = 7;
};

// Class-conditioned oriented stripe patterns with a class-dependent
// dominant colour plus per-image phase and pixel noise.
Dataset synth_dataset(const SynthOptions& opt);

// Stacks images into (B, S, S, 3) with (p / 255 - 0.5) / 0.25 scaling.
Tensor images_to_tensor(const std::vector<const Image*>& images);

}  // namespace mambahash
