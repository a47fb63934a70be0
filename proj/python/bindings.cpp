#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "pss/io.hpp"
#include "pss/metrics.hpp"
#include "pss/registry.hpp"
#include "pss/runner.hpp"
#include "pss/synth.hpp"

namespace py = pybind11;
using namespace pss;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// Specs and configs cross the boundary as plain dicts via the JSON schema.
nlohmann::json to_cpp_json(const py::object& obj) {
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(text);
}

py::object to_py_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

template <typename T>
T from_dict(const py::object& obj) {
  if (obj.is_none()) return T{};
  return to_cpp_json(obj).get<T>();
}

LabelSpace label_space_named(const std::string& name) {
  for (const auto& ls : {base_label_space(), extended_label_space()})
    if (ls.name == name) return ls;
  throw py::value_error("unknown label space: " + name);
}

Tensor image_from_array(const FloatArray& a) {
  if (a.ndim() != 3) throw py::value_error("image must be a [3,h,w] float array");
  Shape shape{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2))};
  return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray out(shape);
  std::memcpy(out.mutable_data(), t.ptr(), t.numel() * sizeof(float));
  return out;
}

ByteArray mask_array(const std::vector<std::uint8_t>& mask, int h, int w) {
  ByteArray out({h, w});
  std::memcpy(out.mutable_data(), mask.data(), mask.size());
  return out;
}

DatasetShard shard_from_arrays(const std::string& domain, const FloatArray& images, const ByteArray& masks,
                               const std::string& label_space) {
  if (images.ndim() != 4 || masks.ndim() != 3 || images.shape(0) != masks.shape(0))
    throw py::value_error("expected images [n,3,h,w] and masks [n,h,w]");
  const int n = static_cast<int>(images.shape(0)), h = static_cast<int>(images.shape(2)),
            w = static_cast<int>(images.shape(3));
  if (masks.shape(1) != h || masks.shape(2) != w) throw py::value_error("mask size does not match images");
  DatasetShard shard;
  shard.manifest.domain = domain;
  shard.manifest.split = "train";
  shard.manifest.height = h;
  shard.manifest.width = w;
  shard.manifest.label_space = label_space_named(label_space);
  const std::size_t img = static_cast<std::size_t>(images.shape(1)) * h * w, px = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.image = Tensor({static_cast<int>(images.shape(1)), h, w},
                     std::vector<float>(images.data() + i * img, images.data() + (i + 1) * img));
    s.mask.assign(masks.data() + i * px, masks.data() + (i + 1) * px);
    s.domain_id = domain;
    shard.samples.push_back(std::move(s));
  }
  return shard;
}

py::dict train_dict(const TrainResult& r) {
  py::dict d;
  d["loss_history"] = r.loss_history;
  d["converged"] = r.converged;
  d["final_loss"] = r.final_loss;
  d["warnings"] = r.warnings;
  return d;
}

py::dict routing_dict(const RoutingDecision& r) {
  py::dict d;
  d["chosen_index"] = r.chosen_index;
  d["chosen_domain_id"] = r.chosen_domain_id;
  d["losses"] = r.losses;
  return d;
}

// Runs a C++ call with the GIL released.
template <typename F>
auto nogil(F&& f) {
  py::gil_scoped_release release;
  return f();
}

}  // namespace

PYBIND11_MODULE(_pss, m) {
  m.doc() = "Progressive semantic segmentation core";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<InvariantError>(m, "InvariantError", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);

  m.def("domains", [] {
    std::vector<std::string> names;
    for (auto d : all_domains()) names.emplace_back(domain_name(d));
    return names;
  });

  m.def(
      "generate_dataset",
      [](const std::string& domain, int n, std::uint64_t seed, const std::string& split, int height, int width) {
        auto shard = nogil([&] { return generate_dataset(domain, n, seed, split, height, width); });
        FloatArray images({n, 3, height, width});
        ByteArray masks({n, height, width});
        const std::size_t img = static_cast<std::size_t>(3) * height * width, px = static_cast<std::size_t>(height) * width;
        for (int i = 0; i < n; ++i) {
          std::memcpy(images.mutable_data() + i * img, shard.samples[i].image.ptr(), img * sizeof(float));
          std::memcpy(masks.mutable_data() + i * px, shard.samples[i].mask.data(), px);
        }
        return py::make_tuple(images, masks, shard.manifest.label_space.name);
      },
      py::arg("domain"), py::arg("n"), py::arg("seed") = 7, py::arg("split") = "train", py::arg("height") = 64,
      py::arg("width") = 64, "Returns (images [n,3,h,w] float32, masks [n,h,w] uint8, label space name).");

  m.def(
      "iou_per_class",
      [](const ByteArray& pred, const ByteArray& gt, const std::string& label_space) {
        if (pred.size() != gt.size()) throw DimensionError("pred and gt differ in size");
        const auto ls = label_space_named(label_space);
        const auto r = iou_per_class(std::span(pred.data(), pred.size()), std::span(gt.data(), gt.size()), ls);
        py::dict d;
        d["per_class_iou"] = r.per_class_iou;
        d["miou"] = r.miou;
        d["num_eval_pixels"] = r.num_eval_pixels;
        return d;
      },
      py::arg("pred"), py::arg("gt"), py::arg("label_space") = "base6");

  py::class_<AutoencoderModel>(m, "Autoencoder")
      .def(py::init([](const py::object& spec, std::uint64_t seed) {
             return build_autoencoder(from_dict<AutoencoderSpec>(spec), seed);
           }),
           py::arg("spec") = py::none(), py::arg("seed") = 0)
      .def_property_readonly("spec", [](const AutoencoderModel& a) { return to_py_json(nlohmann::json(a.spec)); })
      .def("param_count", &AutoencoderModel::param_count)
      .def("train",
           [](AutoencoderModel& a, const FloatArray& images, std::uint64_t seed) {
             if (images.ndim() != 4) throw py::value_error("images must be [n,3,h,w]");
             std::vector<Tensor> imgs;
             const py::ssize_t per = images.size() / std::max<py::ssize_t>(1, images.shape(0));
             for (py::ssize_t i = 0; i < images.shape(0); ++i)
               imgs.emplace_back(Shape{static_cast<int>(images.shape(1)), static_cast<int>(images.shape(2)),
                                       static_cast<int>(images.shape(3))},
                                 std::vector<float>(images.data() + i * per, images.data() + (i + 1) * per));
             return train_dict(nogil([&] { return train_autoencoder(a, imgs, seed); }));
           },
           py::arg("images"), py::arg("seed") = 0)
      .def("reconstruction_loss",
           [](const AutoencoderModel& a, const FloatArray& image) {
             return reconstruction_loss(a, image_from_array(image));
           })
      .def("reconstruct", [](const AutoencoderModel& a, const FloatArray& image) {
        return array_from_tensor(a.forward(as_batch(image_from_array(image))));
      })
      .def("checkpoint", [](const AutoencoderModel& a) {
        const auto bytes = encode_checkpoint(a.named_parameters());
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      });

  py::class_<SegmenterModel>(m, "Segmenter")
      .def(py::init([](const py::object& spec, const std::string& label_space, std::uint64_t seed) {
             const auto ls = label_space_named(label_space);
             auto s = from_dict<SegmenterSpec>(spec);
             s.num_classes = ls.num_classes();
             return build_segmenter(s, ls, seed);
           }),
           py::arg("spec") = py::none(), py::arg("label_space") = "base6", py::arg("seed") = 0)
      .def_property_readonly("spec", [](const SegmenterModel& s) { return to_py_json(nlohmann::json(s.spec)); })
      .def("param_count", &SegmenterModel::param_count)
      .def("train",
           [](SegmenterModel& s, const FloatArray& images, const ByteArray& masks, std::uint64_t seed) {
             const auto shard = shard_from_arrays("train", images, masks, s.label_space.name);
             return train_dict(nogil([&] { return train_segmenter(s, shard, seed); }));
           },
           py::arg("images"), py::arg("masks"), py::arg("seed") = 0)
      .def("predict", [](const SegmenterModel& s, const FloatArray& image) {
        return mask_array(predict_mask(s, image_from_array(image)), static_cast<int>(image.shape(1)),
                          static_cast<int>(image.shape(2)));
      });

  py::class_<ExpertRegistry>(m, "Registry")
      .def(py::init<>())
      .def("__len__", &ExpertRegistry::size)
      .def_property_readonly("domains",
                             [](const ExpertRegistry& r) {
                               std::vector<std::string> ids;
                               for (const auto& e : r.entries()) ids.push_back(e.domain_id);
                               return ids;
                             })
      .def(
          "learn_task",
          [](ExpertRegistry& r, const std::string& domain, const FloatArray& images, const ByteArray& masks,
             const py::object& ae_spec, const py::object& seg_spec, std::uint64_t seed) {
            const auto label = parse_domain(domain) == DomainKind::unstructured ? extended_label_space().name : base_label_space().name;
            const auto shard = shard_from_arrays(domain, images, masks, label);
            auto a = from_dict<AutoencoderSpec>(ae_spec);
            auto s = from_dict<SegmenterSpec>(seg_spec);
            s.num_classes = shard.manifest.label_space.num_classes();
            const auto rep = nogil([&] { return learn_task(r, domain, shard, a, s, seed); });
            py::dict d;
            d["task_expert"] = train_dict(rep.task_expert);
            d["domain_expert"] = train_dict(rep.domain_expert);
            return d;
          },
          py::arg("domain"), py::arg("images"), py::arg("masks"), py::arg("ae_spec") = py::none(),
          py::arg("seg_spec") = py::none(), py::arg("seed") = 0)
      .def("route", [](const ExpertRegistry& r, const FloatArray& image) {
        return routing_dict(infer_domain(r, image_from_array(image)));
      })
      .def("segment",
           [](const ExpertRegistry& r, const FloatArray& image) {
             const auto res = segment(r, image_from_array(image));
             return py::make_tuple(mask_array(res.mask, static_cast<int>(image.shape(1)), static_cast<int>(image.shape(2))),
                                   routing_dict(res.routing));
           })
      .def("checksums",
           [](const ExpertRegistry& r) {
             std::vector<std::uint64_t> sums;
             for (const auto& e : r.entries()) sums.push_back(entry_checksum(e));
             return sums;
           })
      .def("save", [](const ExpertRegistry& r, const std::filesystem::path& dir) { save_registry(dir, r); })
      .def_static("load", [](const std::filesystem::path& dir) { return load_registry(dir); });

  m.def(
      "run_experiment",
      [](const py::object& config, const std::filesystem::path& out) {
        auto cfg = from_dict<ExperimentConfig>(config);
        cfg.validate();
        const auto art = nogil([&] { return run_experiment(cfg, out, nullptr); });
        std::vector<std::string> files;
        for (const auto& f : art.files) files.push_back(f.string());
        return files;
      },
      py::arg("config"), py::arg("out"), "Runs a configured experiment and returns the files written.");
}
