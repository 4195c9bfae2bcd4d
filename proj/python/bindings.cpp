#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "mambahash/checkpoint.hpp"
#include "mambahash/cli.hpp"
#include "mambahash/dataset.hpp"
#include "mambahash/errors.hpp"
#include "mambahash/network.hpp"
#include "mambahash/objective.hpp"
#include "mambahash/retrieval.hpp"
#include "mambahash/ssm.hpp"
#include "mambahash/trainer.hpp"

namespace py = pybind11;
using namespace mambahash;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from_data(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor images_tensor(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& images) {
  if (images.ndim() != 4 || images.shape(1) != images.shape(2) || images.shape(3) != 3) {
    throw DimensionError("images must be (B, S, S, 3) uint8");
  }
  const std::size_t B = images.shape(0), S = images.shape(1);
  std::vector<Image> owned(B);
  std::vector<const Image*> ptrs;
  for (std::size_t b = 0; b < B; ++b) {
    owned[b].side = S;
    owned[b].pixels.assign(images.data() + b * S * S * 3, images.data() + (b + 1) * S * S * 3);
    ptrs.push_back(&owned[b]);
  }
  return images_to_tensor(ptrs);
}

PackedCodes pack(const Array& h, const std::vector<LabelSet>& labels) {
  if (h.ndim() != 2) throw DimensionError("codes must be (N, K)");
  return binarize_pack(std::span<const double>(h.data(), h.size()), h.shape(0), h.shape(1), labels);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "State-space hashing core";

  static py::exception<Error> base(m, "Error");
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_static("tiny", &ModelConfig::tiny, py::arg("bits") = 16)
      .def_readwrite("hash_bits", &ModelConfig::hash_bits)
      .def_readwrite("dims", &ModelConfig::dims)
      .def_readwrite("depths", &ModelConfig::depths)
      .def_readwrite("ciam_kernel", &ModelConfig::ciam_kernel)
      .def_readwrite("eta", &ModelConfig::eta)
      .def_readwrite("n_state", &ModelConfig::n_state)
      .def_readwrite("stem_width", &ModelConfig::stem_width)
      .def("resolved_ciam_kernel", &ModelConfig::resolved_ciam_kernel)
      .def("validate", &ModelConfig::validate)
      .def("set", &ModelConfig::set)
      .def("to_text", &ModelConfig::to_text)
      .def_static("from_text", &ModelConfig::from_text)
      .def("__eq__", [](const ModelConfig& a, const ModelConfig& b) { return a == b; });

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("augment", &TrainConfig::augment)
      .def("validate", &TrainConfig::validate);

  py::class_<MambaHashNet>(m, "MambaHashNet")
      .def(py::init<const ModelConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def_property_readonly("config", &MambaHashNet::config)
      .def("parameter_count", &MambaHashNet::parameter_count)
      .def("parameter_names",
           [](const MambaHashNet& n) {
             std::vector<std::string> out;
             for (const auto& [name, t] : n.parameters()) out.push_back(name);
             return out;
           })
      .def("forward",
           [](const MambaHashNet& n, const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& images) {
             NoGradGuard guard;
             return to_array(n.forward(images_tensor(images)));
           },
           py::arg("images"), "uint8 images (B, S, S, 3) -> codes (B, K) in (-1, 1)")
      .def("save", [](const MambaHashNet& n, const std::string& path) { save_checkpoint(n, path); })
      .def_static("load", &load_checkpoint);

  m.def("discretize_zoh", [](double a, double b, double delta) {
    const auto z = ssm::discretize_zoh(a, b, delta);
    return py::make_tuple(z.a_bar, z.b_bar);
  });
  m.def("selective_scan",
        [](const Array& x, const Array& delta, const Array& b, const Array& c, const Array& a) {
          return to_array(ssm::selective_scan({to_tensor(x), to_tensor(delta), to_tensor(b), to_tensor(c)}, to_tensor(a)));
        },
        py::arg("x"), py::arg("delta"), py::arg("b"), py::arg("c"), py::arg("a"),
        "x, delta (B, L, D); b, c (B, L, N); a (D, N) negative");
  m.def("enhancement_ratio", &enhancement_ratio, py::arg("bits"), py::arg("mu") = 1.0 / 16.0, py::arg("b") = 0.0);
  m.def("pair_nll", &pair_nll, py::arg("theta"), py::arg("similar"));
  m.def("quantization_loss", [](const Array& h) { return quantization_loss(to_tensor(h)).item(); });
  m.def("total_loss",
        [](const Array& h, const std::vector<LabelSet>& labels, double eta) {
          const auto r = total_loss(to_tensor(h), similarity_matrix(labels), eta).breakdown;
          py::dict d;
          d["nll"] = r.nll_term;
          d["quant"] = r.quant_term;
          d["total"] = r.total;
          return d;
        },
        py::arg("h"), py::arg("labels"), py::arg("eta") = 0.05);

  m.def("pack_codes",
        [](const Array& h) {
          const PackedCodes p = pack(h, {});
          py::array_t<std::uint64_t> out({static_cast<py::ssize_t>(p.size()), static_cast<py::ssize_t>(p.words_per_code())});
          std::copy(p.words().begin(), p.words().end(), out.mutable_data());
          return out;
        },
        "sign-binarize (N, K) codes into (N, ceil(K/64)) uint64 words");
  m.def("hamming_distances",
        [](const Array& query, const Array& db) {
          const PackedCodes q = pack(query, {}), d = pack(db, {});
          py::array_t<std::int64_t> out({static_cast<py::ssize_t>(q.size()), static_cast<py::ssize_t>(d.size())});
          auto* o = out.mutable_data();
          for (std::size_t i = 0; i < q.size(); ++i)
            for (std::size_t j = 0; j < d.size(); ++j) o[i * d.size() + j] = hamming_distance(q.code(i), d.code(j));
          return out;
        });
  m.def("search_topk",
        [](const Array& query, const Array& db, std::size_t topk) {
          const PackedCodes q = pack(query, {}), d = pack(db, {});
          std::vector<std::pair<std::size_t, std::size_t>> out;
          for (const Hit& h : search_topk(q.code(0), d, topk).hits) out.emplace_back(h.index, h.distance);
          return out;
        },
        py::arg("query"), py::arg("db"), py::arg("topk"));
  m.def("mean_average_precision",
        [](const Array& q, const std::vector<LabelSet>& ql, const Array& db, const std::vector<LabelSet>& dl,
           std::size_t topk) { return mean_average_precision(pack(q, ql), pack(db, dl), topk).map; },
        py::arg("queries"), py::arg("query_labels"), py::arg("db"), py::arg("db_labels"), py::arg("topk") = 0);

  m.def("run_command",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = cli::run_command(args, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        "run a CLI subcommand in process; returns (exit_code, stdout, stderr)");
}
