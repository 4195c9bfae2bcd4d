#include "mambahash/checkpoint.hpp"

#include <algorithm>

#include "mambahash/binary_io.hpp"
#include "mambahash/errors.hpp"

namespace mambahash {

namespace {

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct StoredCheckpoint {
  ModelConfig config;
  std::vector<StoredTensor> tensors;
};

StoredCheckpoint parse(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.raw(4, "magic") != "MBHH") throw FormatError("checkpoint: bad magic", 0);
  const auto version_at = r.offset();
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version), version_at);
  }
  StoredCheckpoint ck;
  const auto cfg_len = r.u32("config length");
  const auto cfg_at = r.offset();
  const std::string text = r.raw(cfg_len, "config text");
  try {
    ck.config = ModelConfig::from_text(text);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what(), cfg_at);
  }
  const auto count = r.u64("tensor count");
  for (std::uint64_t t = 0; t < count; ++t) {
    StoredTensor st;
    const auto name_len = r.u32("tensor name length");
    st.name = r.raw(name_len, "tensor name");
    const auto dtype_at = r.offset();
    if (r.u8("dtype tag") != kDtypeF64) {
      throw FormatError("checkpoint: tensor '" + st.name + "' has unsupported dtype", dtype_at);
    }
    const auto rank = r.u32("tensor rank");
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      st.shape.push_back(r.u64("tensor dim"));
      n *= st.shape.back();
    }
    if (n * 8 > r.remaining()) {
      throw FormatError("checkpoint: truncated tensor block for '" + st.name + "'", r.offset());
    }
    st.values.resize(n);
    for (auto& v : st.values) v = r.f64("tensor value");
    ck.tensors.push_back(std::move(st));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes", r.offset());
  return ck;
}

void apply(MambaHashNet& net, const StoredCheckpoint& ck) {
  if (!(ck.config == net.config())) {
    throw ConfigError("checkpoint: stored model config does not match the target model");
  }
  NamedParams params = net.parameters();
  if (params.size() != ck.tensors.size()) {
    throw ConfigError("checkpoint: stores " + std::to_string(ck.tensors.size()) +
                      " tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != ck.tensors[i].name || params[i].second.shape() != ck.tensors[i].shape) {
      throw ConfigError("checkpoint: tensor '" + ck.tensors[i].name + "' " +
                        shape_str(ck.tensors[i].shape) + " does not match model tensor '" +
                        params[i].first + "' " + shape_str(params[i].second.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].second.mutable_data();
    std::copy(ck.tensors[i].values.begin(), ck.tensors[i].values.end(), dst.begin());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const MambaHashNet& net) {
  io::ByteWriter w;
  w.raw("MBHH");
  w.u32(kCheckpointVersion);
  const std::string text = net.config().to_text();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  const NamedParams params = net.parameters();
  w.u64(params.size());
  for (const auto& [name, t] : params) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u8(kDtypeF64);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  return w.buffer();
}

void save_checkpoint(const MambaHashNet& net, const std::string& path) {
  io::write_file(path, encode_checkpoint(net));
}

MambaHashNet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  StoredCheckpoint ck = parse(bytes);
  MambaHashNet net(ck.config, 0);
  apply(net, ck);
  return net;
}

MambaHashNet load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

void load_checkpoint_into(MambaHashNet& net, const std::string& path) {
  apply(net, parse(io::read_file(path)));
}

}  // namespace mambahash
