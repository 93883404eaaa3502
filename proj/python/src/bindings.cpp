#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dposelets/detector.hpp"
#include "dposelets/features.hpp"
#include "dposelets/harness/eval.hpp"
#include "dposelets/harness/io.hpp"
#include "dposelets/harness/synth.hpp"

namespace py = pybind11;
using namespace dposelets;

namespace {

// Accepts (h, w) or (h, w, c) float arrays with values in [0, 1].
imaging::Image to_image(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("image must have shape (h, w) or (h, w, c)");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  if (c != 1 && c != 3) throw py::value_error("image must have 1 or 3 channels");
  return imaging::Image(w, h, c, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const imaging::Image& img) {
  std::vector<py::ssize_t> shape{img.height(), img.width()};
  if (img.channels() > 1) shape.push_back(img.channels());
  py::array_t<float> out(shape);
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

harness::TruthMap to_truths(const std::map<std::string, std::vector<Box>>& m) { return {m.begin(), m.end()}; }

}  // namespace

PYBIND11_MODULE(_dposelets, m) {
  m.doc() = "Poselet person detection";

  static py::handle error_type = PyErr_NewException("dposelets.DposeletsError", PyExc_RuntimeError, nullptr);
  m.attr("DposeletsError") = error_type;
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = error_type(e.what());
      inst.attr("code") = std::string(errc_name(e.code()));
      PyErr_SetObject(error_type.ptr(), inst.ptr());
    }
  });

  py::class_<Box>(m, "Box")
      .def(py::init<>())
      .def(py::init([](double x, double y, double w, double h) { return Box{x, y, w, h}; }), py::arg("x"),
           py::arg("y"), py::arg("w"), py::arg("h"))
      .def_readwrite("x", &Box::x)
      .def_readwrite("y", &Box::y)
      .def_readwrite("w", &Box::w)
      .def_readwrite("h", &Box::h)
      .def("iou", [](const Box& a, const Box& b) { return iou(a, b); })
      .def("__repr__", [](const Box& b) {
        return "Box(" + std::to_string(b.x) + ", " + std::to_string(b.y) + ", " + std::to_string(b.w) + ", " +
               std::to_string(b.h) + ")";
      });

  py::class_<detector::Detection>(m, "Detection")
      .def(py::init([](std::string id, Box box, double score) { return detector::Detection{std::move(id), box, score}; }),
           py::arg("image_id"), py::arg("box"), py::arg("score"))
      .def_readwrite("image_id", &detector::Detection::image_id)
      .def_readwrite("box", &detector::Detection::box)
      .def_readwrite("score", &detector::Detection::score);

  py::class_<detector::DetectConfig>(m, "DetectConfig")
      .def(py::init<>())
      .def_readwrite("stride", &detector::DetectConfig::stride)
      .def_readwrite("threshold", &detector::DetectConfig::threshold)
      .def_readwrite("nms_iou", &detector::DetectConfig::nms_iou)
      .def_readwrite("cluster_iou", &detector::DetectConfig::cluster_iou)
      .def_readwrite("final_nms_iou", &detector::DetectConfig::final_nms_iou);

  py::class_<detector::PoseletModel>(m, "Model")
      .def_static("load", [](const std::filesystem::path& p) { return harness::read_model(p); })
      .def_static("from_bytes", [](const py::bytes& b) { return harness::deserialize_model(std::string(b)); })
      .def("save", [](const detector::PoseletModel& model, const std::filesystem::path& p) { harness::write_model(model, p); })
      .def("to_bytes", [](const detector::PoseletModel& model) { return py::bytes(harness::serialize_model(model)); })
      .def_property_readonly("extractor_tag", [](const detector::PoseletModel& model) { return model.extractor.tag(); })
      .def_property_readonly("poselet_count", [](const detector::PoseletModel& model) { return model.poselets.size(); })
      .def_property_readonly("poselet_names", [](const detector::PoseletModel& model) {
        std::vector<std::string> names;
        for (const auto& p : model.poselets) names.push_back(p.seed.name);
        return names;
      });

  m.def("load_image", [](const std::filesystem::path& p) { return to_array(imaging::load_image(p)); }, py::arg("path"));

  m.def(
      "hog_descriptor",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& patch) {
        return features::hog_descriptor(to_image(patch), features::HogConfig{}).values;
      },
      py::arg("patch"), "HOG descriptor of a patch resampled to 64x64.");

  m.def(
      "detect",
      [](const detector::PoseletModel& model, const py::array_t<float, py::array::c_style | py::array::forcecast>& image,
         const detector::DetectConfig& cfg, const std::string& image_id) {
        const auto img = to_image(image);
        py::gil_scoped_release release;
        return detector::detect(img, model, cfg, image_id);
      },
      py::arg("model"), py::arg("image"), py::arg("config") = detector::DetectConfig{}, py::arg("image_id") = "image");

  m.def(
      "evaluate",
      [](std::vector<detector::Detection> dets, const std::map<std::string, std::vector<Box>>& truths, double iou,
         const std::string& mode) {
        return harness::evaluate(std::move(dets), to_truths(truths), iou, harness::parse_ap_mode(mode)).ap;
      },
      py::arg("detections"), py::arg("truths"), py::arg("iou") = 0.5, py::arg("ap_mode") = "cont",
      "Average precision of detections against per-image truth boxes.");

  m.def(
      "average_precision",
      [](const std::vector<bool>& flags, std::size_t truth_count, const std::string& mode) {
        return harness::average_precision(flags, truth_count, harness::parse_ap_mode(mode)).ap;
      },
      py::arg("flags"), py::arg("truth_count"), py::arg("ap_mode") = "cont");

  m.def(
      "classifier_ap",
      [](const std::vector<double>& scores, const std::vector<int>& labels, const std::string& mode) {
        return harness::classifier_ap(scores, labels, harness::parse_ap_mode(mode));
      },
      py::arg("scores"), py::arg("labels"), py::arg("ap_mode") = "cont");

  m.def(
      "generate_toy_corpus",
      [](const std::filesystem::path& out, std::uint64_t seed, int train_images, int test_images, int pool_images,
         int pool_backgrounds) {
        harness::ToyCorpusConfig cfg;
        cfg.seed = seed;
        cfg.train_images = train_images;
        cfg.test_images = test_images;
        cfg.pool_images = pool_images;
        cfg.pool_backgrounds = pool_backgrounds;
        harness::write_toy_corpus(harness::generate_toy_corpus(cfg), out);
      },
      py::arg("out"), py::arg("seed") = 1, py::arg("train_images") = 160, py::arg("test_images") = 50,
      py::arg("pool_images") = 300, py::arg("pool_backgrounds") = 60);
}
