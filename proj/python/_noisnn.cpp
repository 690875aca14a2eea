#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <cstring>

#include "noisnn/arch.hpp"
#include "noisnn/checkpoint.hpp"
#include "noisnn/dataset.hpp"
#include "noisnn/error.hpp"
#include "noisnn/runtime.hpp"
#include "noisnn/runtime_env.hpp"
#include "noisnn/spiking.hpp"
#include "noisnn/trainer.hpp"

namespace py = pybind11;
using namespace noisnn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  Tensor t(shape);
  std::memcpy(t.data(), a.data(), t.numel() * sizeof(float));
  return t;
}

py::array_t<float> to_numpy(const Tensor& t) {
  py::array_t<float> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::memcpy(out.mutable_data(), t.data(), t.numel() * sizeof(float));
  return out;
}

Dataset to_dataset(const FloatArray& images, const py::array_t<std::uint8_t>& labels) {
  Dataset ds;
  ds.images = to_tensor(images);
  if (ds.images.rank() != 4) throw DimensionError("images must be [n, 1, rows, cols]");
  ds.labels.assign(labels.data(), labels.data() + labels.size());
  if (ds.labels.size() != ds.images.dim(0)) throw DimensionError("image and label counts differ");
  return ds;
}

RunMode make_mode(int stage, std::size_t T, float alpha, float beta) {
  RunMode m{stage, stage == 1 ? 1 : T, {alpha, beta}};
  m.validate();
  return m;
}

// Python-side view of a checkpoint: architecture, parameters and run mode.
struct Model {
  Checkpoint ckpt;

  static Model create(const std::string& arch, const std::vector<std::size_t>& input_shape,
                      const std::string& noise, const std::string& readout, std::uint64_t seed) {
    Model m;
    m.ckpt.spec = parse_arch(arch, input_shape);
    m.ckpt.spec.noise.family = parse_noise_family(noise);
    m.ckpt.spec.readout = parse_readout(readout);
    m.ckpt.seed = seed;
    Rng rng = Rng::substream(seed, StreamTag::init, {});
    m.ckpt.params = init_params(m.ckpt.spec, rng);
    return m;
  }

  py::array_t<float> forward(const FloatArray& images, int stage, std::size_t T, float alpha,
                             float beta, std::uint64_t seed) const {
    const RunMode mode = make_mode(stage, T, alpha, beta);
    const NoiseStream noise(seed, StreamTag::eval_noise, 0);
    return to_numpy(run_forward(ckpt.params, ckpt.spec, to_tensor(images), mode, noise)
                        .averaged_output);
  }

  double evaluate(const FloatArray& images, const py::array_t<std::uint8_t>& labels, int stage,
                  std::size_t T, float alpha, float beta, std::uint64_t seed) const {
    const Dataset ds = to_dataset(images, labels);
    return noisnn::evaluate(ckpt.params, ckpt.spec, ds, make_mode(stage, T, alpha, beta), seed)
        .accuracy;
  }

  Model converted(int stage, std::size_t T, float alpha, float beta) const {
    return Model{convert(ckpt, make_mode(stage, T, alpha, beta))};
  }

  std::vector<py::array_t<float>> params() const {
    std::vector<py::array_t<float>> out;
    for (const auto& p : ckpt.params) out.push_back(to_numpy(p));
    return out;
  }

  void set_params(const std::vector<FloatArray>& arrays) {
    ParamSet next;
    for (const auto& a : arrays) next.push_back(to_tensor(a));
    const auto shapes = param_shapes(ckpt.spec);
    if (next.size() != shapes.size()) throw DimensionError("wrong number of parameter arrays");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (next[i].shape() != shapes[i]) {
        throw DimensionError("parameter " + std::to_string(i) + " has shape " +
                             shape_str(next[i].shape()) + ", expected " + shape_str(shapes[i]));
      }
    }
    ckpt.params = std::move(next);
  }
};

}  // namespace

PYBIND11_MODULE(_noisnn, m) {
  m.doc() = "Noise-trained single-step SNNs with multi-step inference";
  apply_runtime_env();

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ArchParseError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "surrogate_grad",
      [](float x, float a, float v_th) { return surrogate_grad(x, {a, v_th}); }, py::arg("x"),
      py::arg("a") = 3.0f, py::arg("v_th") = 1.0f);

  m.def(
      "renormalize",
      [](const FloatArray& a, float alpha, float beta) {
        return to_numpy(renormalize_potential(to_tensor(a), {alpha, beta}));
      },
      py::arg("a"), py::arg("alpha") = 4.0f, py::arg("beta") = 0.5f,
      "Standardize and rescale into (beta - 1/alpha, beta + 1/alpha).");

  m.def(
      "lif_step",
      [](const FloatArray& v, const FloatArray& weighted, const FloatArray& injection, float lam,
         float v_th, float v_reset) {
        auto r = lif_step({to_tensor(v)}, {lam, v_th, v_reset}, to_tensor(weighted),
                          to_tensor(injection));
        return py::make_tuple(to_numpy(r.spikes), to_numpy(r.state.v));
      },
      py::arg("v"), py::arg("weighted"), py::arg("injection"), py::arg("lam") = 0.5f,
      py::arg("v_th") = 1.0f, py::arg("v_reset") = 0.0f, "Returns (spikes, new potential).");

  m.def(
      "parameter_count",
      [](const std::string& arch, const std::vector<std::size_t>& input_shape) {
        return parameter_count(parse_arch(arch, input_shape));
      },
      py::arg("arch"), py::arg("input_shape") = std::vector<std::size_t>{1, 28, 28});

  m.def(
      "load_idx",
      [](const std::string& images, const std::string& labels) {
        const Dataset ds = load_idx(images, labels);
        py::array_t<std::uint8_t> lab(static_cast<py::ssize_t>(ds.labels.size()));
        std::memcpy(lab.mutable_data(), ds.labels.data(), ds.labels.size());
        return py::make_tuple(to_numpy(ds.images), lab);
      },
      py::arg("images"), py::arg("labels"), "Returns (images [n,1,rows,cols] in [0,1], labels).");

  py::class_<Model>(m, "Model")
      .def(py::init(&Model::create), py::arg("arch"),
           py::arg("input_shape") = std::vector<std::size_t>{1, 28, 28},
           py::arg("noise") = "gaussian", py::arg("readout") = "spikes", py::arg("seed") = 0)
      .def_static(
          "load", [](const std::string& path) { return Model{load_checkpoint(path)}; },
          py::arg("path"))
      .def("save", [](const Model& self, const std::string& path) { save_checkpoint(self.ckpt, path); },
           py::arg("path"))
      .def_static(
          "train",
          [](const std::string& arch, const FloatArray& images,
             const py::array_t<std::uint8_t>& labels, std::size_t epochs, std::size_t batch,
             float lr, std::uint64_t seed, const std::string& noise) {
            const Dataset ds = to_dataset(images, labels);
            NetworkSpec spec = parse_arch(arch, {ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
            spec.noise.family = parse_noise_family(noise);
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch;
            cfg.lr0 = lr;
            cfg.seed = seed;
            TrainResult r;
            {
              py::gil_scoped_release release;
              r = train_stage1(spec, ds, cfg);
            }
            py::list losses;
            for (const auto& e : r.metrics) losses.append(e.loss);
            return py::make_tuple(Model{std::move(r.checkpoint)}, losses);
          },
          py::arg("arch"), py::arg("images"), py::arg("labels"), py::arg("epochs") = 1,
          py::arg("batch") = 64, py::arg("lr") = 1e-4f, py::arg("seed") = 0,
          py::arg("noise") = "gaussian", "Stage-1 training. Returns (model, per-epoch losses).")
      .def("forward", &Model::forward, py::arg("images"), py::arg("stage") = 1, py::arg("T") = 1,
           py::arg("alpha") = 4.0f, py::arg("beta") = 0.5f, py::arg("seed") = 0,
           "Averaged output [batch, classes].")
      .def("evaluate", &Model::evaluate, py::arg("images"), py::arg("labels"),
           py::arg("stage") = 1, py::arg("T") = 1, py::arg("alpha") = 4.0f,
           py::arg("beta") = 0.5f, py::arg("seed") = 0)
      .def("convert", &Model::converted, py::arg("stage"), py::arg("T") = 1,
           py::arg("alpha") = 4.0f, py::arg("beta") = 0.5f)
      .def_property_readonly("arch", [](const Model& self) { return render_arch(self.ckpt.spec); })
      .def_property_readonly("stage", [](const Model& self) { return self.ckpt.mode.stage; })
      .def_property_readonly("T", [](const Model& self) { return self.ckpt.mode.T; })
      .def_property_readonly("seed", [](const Model& self) { return self.ckpt.seed; })
      .def_property_readonly("num_classes",
                             [](const Model& self) { return self.ckpt.spec.num_classes(); })
      .def_property_readonly("payload_hash",
                             [](const Model& self) { return payload_hash(self.ckpt.params); })
      .def_property("params", &Model::params, &Model::set_params);
}
