#include "mambahash/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "mambahash/binary_io.hpp"
#include "mambahash/errors.hpp"

namespace mambahash {

namespace fs = std::filesystem;

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "query") return Split::kQuery;
  if (name == "database") return Split::kDatabase;
  throw DataError("unknown split '" + name + "' (expected train, query or database)");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kDatabase: return "database";
  }
  return "?";
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == s) out.push_back(i);
  return out;
}

void Dataset::validate() const {
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) throw DataError("dataset: duplicate record id '" + r.id + "'");
    if (r.labels.empty()) throw DataError("dataset: record '" + r.id + "' has no labels");
  }
}

namespace {

LabelSet parse_labels(const std::string& field, const std::string& id) {
  LabelSet out;
  std::stringstream ss(field);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const unsigned long v = std::stoul(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::uint32_t>(v));
    } catch (const std::exception&) {
      throw DataError("manifest: record '" + id + "' has malformed label '" + item + "'");
    }
  }
  if (out.empty()) throw DataError("manifest: record '" + id + "' has an empty label set");
  return out;
}

Image read_image(const fs::path& path) {
  std::vector<std::uint8_t> bytes = io::read_file(path.string());
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(bytes.size()) / 3.0)));
  if (side == 0 || side * side * 3 != bytes.size()) {
    throw DataError("image '" + path.string() + "' is not a square RGB raw file (" +
                    std::to_string(bytes.size()) + " bytes)");
  }
  return Image{side, std::move(bytes)};
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream manifest(root / "manifest.tsv");
  if (!manifest) throw IoError("cannot open '" + (root / "manifest.tsv").string() + "'");
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 4) {
      throw DataError("manifest line " + std::to_string(line_no) + ": expected 4 tab-separated columns");
    }
    ImageRecord r;
    r.id = cols[0];
    r.path = cols[1];
    r.split = parse_split(cols[2]);
    r.labels = parse_labels(cols[3], r.id);
    r.image = read_image(root / r.path);
    data.records.push_back(std::move(r));
  }
  data.validate();
  return data;
}

void write_dataset(const std::string& dir, const Dataset& data) {
  data.validate();
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
  std::ofstream manifest(root / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw IoError("cannot write '" + (root / "manifest.tsv").string() + "'");
  for (const auto& r : data.records) {
    const fs::path file = root / r.path;
    fs::create_directories(file.parent_path(), ec);
    io::write_file(file.string(), r.image.pixels);
    manifest << r.id << '\t' << r.path << '\t' << to_string(r.split) << '\t';
    for (std::size_t i = 0; i < r.labels.size(); ++i) manifest << (i ? "," : "") << r.labels[i];
    manifest << '\n';
  }
}

Dataset synth_dataset(const SynthOptions& opt) {
  if (opt.classes == 0 || opt.side == 0) throw ConfigError("synth: classes and side must be >= 1");
  Rng rng(opt.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 12.0);

  Dataset data;
  const std::pair<Split, std::size_t> plan[] = {{Split::kTrain, opt.train_per_class},
                                               {Split::kQuery, opt.query_per_class},
                                               {Split::kDatabase, opt.database_per_class}};
  std::size_t serial = 0;
  for (const auto& [split, per_class] : plan) {
    for (std::size_t k = 0; k < per_class; ++k) {
      for (std::size_t c = 0; c < opt.classes; ++c) {
        const double angle = std::numbers::pi * static_cast<double>(c) / static_cast<double>(opt.classes);
        const double freq = 3.0 + static_cast<double>(c % 3);
        const double ph = phase(rng);
        Image img{opt.side, std::vector<std::uint8_t>(opt.side * opt.side * 3)};
        for (std::size_t y = 0; y < opt.side; ++y)
          for (std::size_t x = 0; x < opt.side; ++x) {
            const double u = (std::cos(angle) * static_cast<double>(x) + std::sin(angle) * static_cast<double>(y)) /
                             static_cast<double>(opt.side);
            const double wave = std::sin(2.0 * std::numbers::pi * freq * u + ph);
            for (std::size_t ch = 0; ch < 3; ++ch) {
              const double base = ch == c % 3 ? 150.0 : 90.0;
              const double v = base + 60.0 * wave + noise(rng);
              img.pixels[(y * opt.side + x) * 3 + ch] =
                  static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
          }
        ImageRecord r;
        r.id = "img" + std::to_string(serial);
        r.path = "images/" + r.id + ".rgb";
        r.split = split;
        r.labels = {static_cast<std::uint32_t>(c)};
        r.image = std::move(img);
        data.records.push_back(std::move(r));
        ++serial;
      }
    }
  }
  return data;
}

Tensor images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ContractError("images_to_tensor: empty batch");
  const std::size_t S = images[0]->side;
  std::vector<double> data;
  data.reserve(images.size() * S * S * 3);
  for (const Image* img : images) {
    if (img->side != S) throw DimensionError("images_to_tensor: mixed image sides in one batch");
    for (auto p : img->pixels) data.push_back((static_cast<double>(p) / 255.0 - 0.5) / 0.25);
  }
  return Tensor::from_data({images.size(), S, S, 3}, std::move(data));
}

}  // namespace mambahash
