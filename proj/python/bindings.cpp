#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <ATen/Context.h>

#include <sstream>

#include "kpgan/config.hpp"
#include "kpgan/evaluation.hpp"
#include "kpgan/experiments.hpp"
#include "kpgan/pose_geometry.hpp"
#include "kpgan/tensor_ops.hpp"
#include "kpgan/training.hpp"

namespace py = pybind11;
using namespace kpgan;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

KeypointSet to_keypoints(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 2) throw std::invalid_argument("keypoints must be K x 2");
  KeypointSet p(a.shape(0));
  auto v = a.unchecked<2>();
  for (py::ssize_t k = 0; k < a.shape(0); ++k) p[k] = {v(k, 0), v(k, 1)};
  return p;
}

EdgeSet to_edges(int k, const std::vector<std::pair<int, int>>& edges) {
  std::vector<Edge> e;
  for (const auto& [i, j] : edges) e.push_back({i, j});
  return EdgeSet(k, e);
}

torch::Tensor to_tensor(const Array& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

Array to_array(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kFloat64).contiguous();
  Array out(std::vector<py::ssize_t>(c.sizes().begin(), c.sizes().end()));
  std::copy_n(c.data_ptr<double>(), c.numel(), out.mutable_data());
  return out;
}

class Model {
 public:
  explicit Model(const std::filesystem::path& checkpoint) : state_(TrainState::load(checkpoint)) {}

  Array predict(const Array& images, bool correct_orientation) {
    torch::NoGradGuard ng;
    state_->model.eval();
    return to_array(predict_keypoints(state_->model, to_tensor(images).to(torch::kFloat32), state_->edges,
                                      correct_orientation));
  }

  Array skeleton(const Array& images) {
    torch::NoGradGuard ng;
    state_->model.eval();
    return to_array(state_->model.phi_forward(to_tensor(images).to(torch::kFloat32)));
  }

  TrainConfig config() const { return state_->config; }
  long long iteration() const { return state_->iteration; }

 private:
  std::unique_ptr<TrainState> state_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  at::globalContext().setFlushDenormal(true);
  py::register_exception<TrainingAborted>(m, "TrainingAborted", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def(py::init([](const std::map<std::string, std::string>& overrides) {
        TrainConfig c;
        for (const auto& [k, v] : overrides) c.set(k, v);
        c.validate();
        return c;
      }))
      .def("set", &TrainConfig::set)
      .def("get", &TrainConfig::get)
      .def_static("keys", &TrainConfig::keys)
      .def("validate", &TrainConfig::validate)
      .def("hash", &TrainConfig::hash)
      .def("__str__", [](const TrainConfig& c) {
        std::ostringstream os;
        c.write(os);
        return os.str();
      });

  m.def("stick_figure_edges", [] {
    const auto figure = EdgeSet::stick_figure();
    std::vector<std::pair<int, int>> out;
    for (const auto& e : figure.edges()) out.emplace_back(e.i, e.j);
    return out;
  });

  m.def(
      "render_skeleton",
      [](const Array& keypoints, const std::vector<std::pair<int, int>>& edges, int height, int width, double gamma) {
        const auto p = to_keypoints(keypoints);
        const auto img = render_skeleton(p, to_edges(static_cast<int>(p.size()), edges), {height, width}, gamma);
        Array out({height, width});
        std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
        return out;
      },
      py::arg("keypoints"), py::arg("edges"), py::arg("height") = 64, py::arg("width") = 64, py::arg("gamma") = 25.0,
      "exp(-gamma d^2) skeleton image, H x W.");

  m.def(
      "render_skeleton_gradient",
      [](const Array& keypoints, const std::vector<std::pair<int, int>>& edges, int height, int width, double gamma) {
        const auto p = to_keypoints(keypoints);
        const int k = static_cast<int>(p.size());
        const auto jac = render_skeleton_gradient(p, to_edges(k, edges), {height, width}, gamma);
        Array out({height, width, k, 2});
        std::copy(jac.values.begin(), jac.values.end(), out.mutable_data());
        return out;
      },
      py::arg("keypoints"), py::arg("edges"), py::arg("height") = 64, py::arg("width") = 64, py::arg("gamma") = 25.0,
      "d pixel / d keypoint, H x W x K x 2.");

  m.def("keypoints_from_heatmaps", [](const Array& heatmaps) {
    if (heatmaps.ndim() != 3) throw std::invalid_argument("heatmaps must be K x H x W");
    const int k = static_cast<int>(heatmaps.shape(0));
    const Resolution res{static_cast<int>(heatmaps.shape(1)), static_cast<int>(heatmaps.shape(2))};
    const auto p = keypoints_from_heatmaps({heatmaps.data(), static_cast<std::size_t>(heatmaps.size())}, k, res);
    Array out({k, 2});
    for (int i = 0; i < k; ++i) out.mutable_at(i, 0) = p[i].x, out.mutable_at(i, 1) = p[i].y;
    return out;
  });

  m.def("normalized_error_pct", [](const Array& pred, const Array& gt, int image_side) {
    return normalized_error_pct(to_tensor(pred), to_tensor(gt), image_side).mean;
  });

  py::class_<Model>(m, "Model")
      .def(py::init<std::filesystem::path>())
      .def("predict", &Model::predict, py::arg("images"), py::arg("correct_orientation") = true,
           "B x 3 x H x W images in [0, 1] -> B x K x 2 keypoints.")
      .def("skeleton", &Model::skeleton)
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("iteration", &Model::iteration);

  m.def(
      "train",
      [](const TrainConfig& config, const std::filesystem::path& out_dir) {
        config.validate();
        const auto data = datasets_for(config);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_training(config, data.train, data.test, {out_dir, std::nullopt});
        }
        return py::make_tuple(r.final_checkpoint, r.final_error_pct);
      },
      py::arg("config"), py::arg("out_dir"), "Trains and returns (final checkpoint, test error %).");
}
