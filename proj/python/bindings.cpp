// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Python bindings. Frames, X maps and masks cross the boundary as NumPy
// arrays; configurations as plain dicts in the same schema as the JSON
// run configuration.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "xprompt/cli.hpp"
#include "xprompt/errors.hpp"
#include "xprompt/evaluation.hpp"
#include "xprompt/gradcheck_suite.hpp"
#include "xprompt/losses.hpp"
#include "xprompt/metrics.hpp"
#include "xprompt/synth.hpp"
#include "xprompt/training.hpp"

namespace py = pybind11;
using namespace xprompt;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

nlohmann::json to_json(const py::handle& obj) {
  const std::string text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(text);
}

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Tensor tensor_from(const F64Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

F64Array array_from(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  F64Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

SegmentationMask mask_from(const U8Array& a) {
  if (a.ndim() != 2) throw ContractError("masks must be 2-d arrays of object ids");
  SegmentationMask m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.ids.begin());
  return m;
}

U8Array array_from(const SegmentationMask& m) {
  U8Array out({static_cast<py::ssize_t>(m.height), static_cast<py::ssize_t>(m.width)});
  std::copy(m.ids.begin(), m.ids.end(), out.mutable_data());
  return out;
}

U8Array stack_masks(const std::vector<SegmentationMask>& masks) {
  const auto T = static_cast<py::ssize_t>(masks.size());
  const auto H = T ? static_cast<py::ssize_t>(masks[0].height) : 0, W = T ? static_cast<py::ssize_t>(masks[0].width) : 0;
  U8Array out({T, H, W});
  auto* p = out.mutable_data();
  for (const auto& m : masks) p = std::copy(m.ids.begin(), m.ids.end(), p);
  return out;
}

F64Array stack(const std::vector<Tensor>& frames) {
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(frames.size())};
  if (!frames.empty()) shape.insert(shape.end(), frames[0].shape().begin(), frames[0].shape().end());
  F64Array out(shape);
  double* p = out.mutable_data();
  for (const auto& f : frames) p = std::copy(f.values().begin(), f.values().end(), p);
  return out;
}

py::dict sample_to_py(const VideoSample& s) {
  py::dict d;
  d["name"] = s.name;
  d["objects"] = s.objects;
  d["scenario"] = s.scenario;
  d["frames"] = stack(s.frames);
  d["xmaps"] = stack(s.xmaps);
  d["masks"] = stack_masks(s.masks);
  return d;
}

VideoSample sample_from_py(const py::dict& d) {
  VideoSample s;
  s.name = d.contains("name") ? d["name"].cast<std::string>() : "sequence";
  s.objects = d["objects"].cast<std::size_t>();
  s.scenario = d.contains("scenario") ? d["scenario"].cast<std::string>() : "";
  const F64Array frames = d["frames"].cast<F64Array>();
  const U8Array masks = d["masks"].cast<U8Array>();
  if (frames.ndim() != 4 || masks.ndim() != 3) throw ContractError("frames must be T x H x W x 3, masks T x H x W");
  const auto T = static_cast<std::size_t>(frames.shape(0)), H = static_cast<std::size_t>(frames.shape(1)),
             W = static_cast<std::size_t>(frames.shape(2)), C = static_cast<std::size_t>(frames.shape(3));
  for (std::size_t t = 0; t < T; ++t) {
    const double* f = frames.data() + t * H * W * C;
    s.frames.push_back(Tensor::from({H, W, C}, std::vector<double>(f, f + H * W * C)));
    SegmentationMask m(H, W);
    std::copy(masks.data() + t * H * W, masks.data() + (t + 1) * H * W, m.ids.begin());
    s.masks.push_back(std::move(m));
  }
  if (d.contains("xmaps") && !d["xmaps"].is_none()) {
    const F64Array x = d["xmaps"].cast<F64Array>();
    for (std::size_t t = 0; t < T; ++t) {
      const double* f = x.data() + t * H * W;
      s.xmaps.push_back(Tensor::from({H, W, 1}, std::vector<double>(f, f + H * W)));
    }
  }
  s.validate();
  return s;
}

std::vector<VideoSample> samples_from_py(const py::list& items) {
  std::vector<VideoSample> out;
  for (const auto& item : items) out.push_back(sample_from_py(item.cast<py::dict>()));
  return out;
}

py::dict report_to_py(const ParamReport& r) {
  py::dict d;
  d["total"] = r.total;
  d["trainable"] = r.trainable;
  d["frozen"] = r.frozen;
  d["experts"] = r.experts;
  d["prompter"] = r.prompter;
  d["x_embed"] = r.x_embed;
  d["trainable_foundation"] = r.trainable_foundation;
  d["trainable_ratio"] = r.trainable_ratio();
  d["expert_ratio"] = r.expert_ratio();
  return d;
}

ModelConfig model_config(const py::object& cfg) {
  return cfg.is_none() ? ModelConfig{} : model_config_from_json(to_json(cfg));
}

TrainConfig train_config(const py::object& cfg) {
  return cfg.is_none() ? TrainConfig{} : train_config_from_json(to_json(cfg));
}

}  // namespace

PYBIND11_MODULE(_xprompt, m) {
  m.doc() = "X-Prompt desk: RGB-X video object segmentation with prompts and adaptation experts";

  const auto& contract_error = py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", contract_error.ptr());
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("default_config", [] { return from_json(xprompt::to_json(RunConfig{})); },
        "The default run configuration as a dict.");
  m.def("validate_config", [](const py::dict& cfg) { return from_json(xprompt::to_json(run_config_from_json(to_json(cfg)))); },
        "Parse and validate a run configuration; returns it with defaults filled in.");
  m.def("config_hash", [](const py::dict& cfg) { return config_hash(run_config_from_json(to_json(cfg))); });

  m.def(
      "synth",
      [](const py::object& cfg) {
        const SynthConfig s = cfg.is_none() ? SynthConfig{} : synth_config_from_json(to_json(cfg));
        py::list out;
        for (const auto& sample : synth_generate(s)) out.append(sample_to_py(sample));
        return out;
      },
      py::arg("config") = py::none(), "Generate synthetic RGB-X sequences as dicts of NumPy arrays.");

  m.def("metric_j", [](const U8Array& pred, const U8Array& gt, int id) {
    return metric_j(mask_from(pred), mask_from(gt), static_cast<std::uint8_t>(id));
  });
  m.def(
      "metric_f",
      [](const U8Array& pred, const U8Array& gt, int id, std::optional<double> tol) {
        const SegmentationMask p = mask_from(pred), g = mask_from(gt);
        return metric_f(p, g, static_cast<std::uint8_t>(id), tol ? *tol : default_boundary_tol(g.height, g.width));
      },
      py::arg("pred"), py::arg("gt"), py::arg("id"), py::arg("tol") = py::none(),
      "Boundary F-measure; the tolerance defaults to ceil(0.008 * image diagonal).");
  m.def("metric_jf", &metric_jf);
  m.def("default_boundary_tol", &default_boundary_tol);
  m.def("boundary_map", [](const U8Array& mask, int id) {
    const SegmentationMask mk = mask_from(mask);
    const auto b = boundary_map(mk, static_cast<std::uint8_t>(id));
    SegmentationMask out(mk.height, mk.width);
    out.ids = b;
    return array_from(out);
  });

  m.def("soft_jaccard_loss", [](const F64Array& probs, const U8Array& gt) {
    return soft_jaccard_loss(tensor_from(probs), mask_from(gt)).item();
  });
  m.def("cross_entropy", [](const F64Array& logits, const U8Array& gt) {
    return ops::mean(pixel_cross_entropy(tensor_from(logits), mask_from(gt))).item();
  });
  m.def("bootstrapped_ce_loss", [](const F64Array& logits, const U8Array& gt, double keep) {
    return bootstrapped_ce_loss(tensor_from(logits), mask_from(gt), keep).item();
  });
  m.def("keep_ratio_at", &keep_ratio_at);

  m.def(
      "op_gradchecks",
      [](std::size_t seeds, std::uint64_t seed) {
        std::vector<std::tuple<std::string, double, std::size_t>> out;
        for (const auto& r : op_gradchecks(seeds, seed)) out.emplace_back(r.name, r.max_error, r.cases);
        return out;
      },
      py::arg("seeds") = 20, py::arg("seed") = 0, "Finite-difference checks of every op: (name, max error, cases).");

  m.def("parse_variant", [](const std::string& text) { return Variant::parse(text).name(); },
        "Canonical name of a variant such as 'mvp+maes(K=3)'.");

  py::class_<XPromptModel>(m, "Model")
      .def(py::init([](const py::object& cfg, std::uint64_t seed) {
             return std::make_unique<XPromptModel>(model_config(cfg), seed);
           }),
           py::arg("config") = py::none(), py::arg("seed") = 0)
      .def_property_readonly("config", [](const XPromptModel& self) { return from_json(xprompt::to_json(self.config())); })
      .def_property_readonly("variant", [](const XPromptModel& self) { return self.variant().name(); })
      .def_property_readonly("adapting", &XPromptModel::adapting)
      .def("begin_adaptation",
           [](XPromptModel& self, const std::string& variant, std::uint64_t seed) {
             self.begin_adaptation(Variant::parse(variant), seed);
           },
           py::arg("variant"), py::arg("seed") = 0)
      .def("report", [](const XPromptModel& self) { return report_to_py(self.report()); })
      .def("parameter_names",
           [](const XPromptModel& self) {
             std::vector<std::string> names;
             for (const auto& e : self.params().entries()) names.push_back(e.name);
             return names;
           })
      .def("parameter", [](const XPromptModel& self, const std::string& name) { return array_from(self.params().get(name)); })
      .def("is_frozen", [](const XPromptModel& self, const std::string& name) { return self.params().is_frozen(name); })
      .def("segment",
           [](const XPromptModel& self, const py::dict& sample) {
             const VideoSample s = sample_from_py(sample);
             py::gil_scoped_release release;
             const auto masks = self.segment_video(s, s.masks.front());
             py::gil_scoped_acquire acquire;
             return stack_masks(masks);
           },
           "Segment a sequence from its first-frame mask; returns T x H x W ids.")
      .def("evaluate",
           [](const XPromptModel& self, const py::list& samples, double tol) {
             const VariantResult r = evaluate_model(self, samples_from_py(samples), tol);
             py::dict d;
             d["J"] = r.J;
             d["F"] = r.F;
             d["JF"] = r.JF;
             py::list rows;
             for (const auto& row : r.per_sequence) rows.append(py::make_tuple(row.name, row.J, row.F, row.JF));
             d["per_sequence"] = rows;
             return d;
           },
           py::arg("samples"), py::arg("tol") = 0.0)
      .def("pretrain",
           [](XPromptModel& self, const py::list& samples, const py::object& cfg, std::uint64_t seed) {
             const auto data = samples_from_py(samples);
             const TrainConfig tc = train_config(cfg);
             py::gil_scoped_release release;
             return pretrain(self, data, tc, seed).losses;
           },
           py::arg("samples"), py::arg("train") = py::none(), py::arg("seed") = 0,
           "RGB pretraining; returns the per-step losses.")
      .def("adapt",
           [](XPromptModel& self, const py::list& samples, const std::string& variant, const py::object& cfg,
              std::uint64_t seed) {
             const auto data = samples_from_py(samples);
             const TrainConfig tc = train_config(cfg);
             const Variant v = Variant::parse(variant);
             py::gil_scoped_release release;
             return adapt(self, data, v, tc, seed).losses;
           },
           py::arg("samples"), py::arg("variant") = "mvp+maes", py::arg("train") = py::none(), py::arg("seed") = 0,
           "Multi-modal adaptation; returns the per-step losses.")
      .def("save", [](const XPromptModel& self, const std::string& dir) { save_model(dir, self); })
      .def_static("load", [](const std::string& dir) { return load_model(dir); });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      "Run the command-line tool in-process; returns (exit code, stdout, stderr).");
}
