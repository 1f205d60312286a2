// Python bindings. Images are uint8 numpy arrays of shape (H, W, 3); patch
// batches are float32 (N, P, P, 3) in the model input range [-0.5, 0.5).
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "patchlikely/analysis.hpp"
#include "patchlikely/checkpoint.hpp"
#include "patchlikely/generation.hpp"
#include "patchlikely/gradcheck.hpp"
#include "patchlikely/patch.hpp"
#include "patchlikely/training.hpp"

namespace py = pybind11;
using namespace patchlikely;

namespace {

using U8Array = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image8 to_image(const U8Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw Error(ErrorKind::kShape, "expected an (H, W, 3) uint8 array");
  Image8 img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

U8Array from_image(const Image8& img) {
  U8Array out({img.height, img.width, 3});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

Tensor to_tensor(const F32Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  Tensor t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data().begin());
  return t;
}

F32Array from_tensor(const Tensor& t) {
  F32Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> from_vector(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

template <size_t N>
py::array_t<double> from_array(const std::array<double, N>& v) {
  return from_vector(std::vector<double>(v.begin(), v.end()));
}

std::vector<Image8> to_patches(const U8Array& a) {
  if (a.ndim() != 4 || a.shape(3) != 3) throw Error(ErrorKind::kShape, "expected an (N, P, P, 3) uint8 array");
  std::vector<Image8> out;
  const auto per = static_cast<size_t>(a.shape(1) * a.shape(2) * 3);
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    Image8 p(static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1)));
    std::copy(a.data() + i * per, a.data() + (i + 1) * per, p.pixels.begin());
    out.push_back(std::move(p));
  }
  return out;
}

struct Model {
  Checkpoint ckpt;
};

Model train_model(const std::string& corpus, const std::string& image, int64_t steps, uint64_t seed, int patch_size,
                  int flow_steps, int hidden, int batch_size, double lr, int64_t warmup) {
  if (corpus.empty() == image.empty()) throw Error(ErrorKind::kInvalidArgument, "pass exactly one of corpus or image");
  TrainConfig cfg;
  cfg.model = FlowConfig{patch_size, 3, flow_steps, hidden};
  cfg.steps = steps;
  cfg.seed = seed;
  cfg.batch_size = batch_size;
  cfg.learning_rate = lr;
  cfg.warmup_steps = warmup;
  cfg.validate();
  PatchDataset ds = corpus.empty() ? PatchDataset::from_image(image, patch_size)
                                   : PatchDataset::from_corpus(corpus, patch_size);
  py::gil_scoped_release release;
  return Model{train(cfg, ds)};
}

Template make_template(const std::string& illusion, const std::string& channel, const py::object& context,
                       int patch_size) {
  Template t;
  t.kind = parse_template_kind(illusion);
  t.channel = parse_channel_mode(channel);
  t.patch_size = patch_size;
  if (!context.is_none()) {
    switch (t.kind) {
      case TemplateKind::kContrast: t.surround = context.cast<int>(); break;
      case TemplateKind::kWhites: t.polarity = parse_polarity(context.cast<std::string>()); break;
      case TemplateKind::kHermannCross: t.hermann_bar = context.cast<int>(); break;
    }
  }
  return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Patch likelihood flows: scoring, illusion sweeps and latent-step generation";

  py::register_exception<Error>(m, "PatchlikelyError", PyExc_RuntimeError);

  py::class_<Model>(m, "Model")
      .def_property_readonly("patch_size", [](const Model& s) { return s.ckpt.params.config.patch_size; })
      .def_property_readonly("flow_steps", [](const Model& s) { return s.ckpt.params.config.steps; })
      .def_property_readonly("hidden_width", [](const Model& s) { return s.ckpt.params.config.hidden_width; })
      .def_property_readonly("step", [](const Model& s) { return s.ckpt.step; })
      .def_property_readonly("seed", [](const Model& s) { return s.ckpt.seed; })
      .def("save", [](const Model& s, const std::filesystem::path& p) { save_checkpoint(s.ckpt, p); })
      .def(
          "score",
          [](const Model& s, const U8Array& patches) {
            return from_vector(score_patches(to_patches(patches), s.ckpt.params));
          },
          py::arg("patches"), "NLL in nats of (N, P, P, 3) uint8 patches")
      .def(
          "log_likelihood",
          [](const Model& s, const F32Array& x) { return from_vector(log_likelihood(to_tensor(x), s.ckpt.params)); },
          py::arg("x"))
      .def(
          "forward",
          [](const Model& s, const F32Array& x) {
            LayerOutput<float> out = flow_forward(to_tensor(x), s.ckpt.params);
            return py::make_tuple(from_tensor(out.y), from_vector(out.logdet));
          },
          py::arg("x"), "Latent codes and log-determinants")
      .def(
          "inverse", [](const Model& s, const F32Array& z) { return from_tensor(flow_inverse(to_tensor(z), s.ckpt.params)); },
          py::arg("z"));

  m.def(
      "load_checkpoint", [](const std::filesystem::path& p) { return Model{load_checkpoint(p)}; }, py::arg("path"));
  m.def("train", &train_model, py::arg("corpus") = "", py::arg("image") = "", py::arg("steps") = 2000,
        py::arg("seed") = 0, py::arg("patch_size") = 16, py::arg("flow_steps") = 8, py::arg("hidden") = 64,
        py::arg("batch_size") = 32, py::arg("lr") = 1e-3, py::arg("warmup") = 100);

  m.def(
      "load_image", [](const std::filesystem::path& p) { return from_image(load_image(p)); }, py::arg("path"));
  m.def(
      "save_image", [](const U8Array& a, const std::filesystem::path& p) { save_image(to_image(a), p); },
      py::arg("image"), py::arg("path"));

  m.def(
      "render_template",
      [](const std::string& illusion, int target, const std::string& channel, const py::object& context,
         int patch_size) { return from_image(make_template(illusion, channel, context, patch_size).render(target)); },
      py::arg("illusion"), py::arg("target"), py::arg("channel") = "gray", py::arg("context") = py::none(),
      py::arg("patch_size") = 16);

  m.def(
      "explain",
      [](const Model& s, const std::string& illusion, const std::string& channel, const py::object& context) {
        const TemplateSweep sw =
            sweep_target(make_template(illusion, channel, context, s.ckpt.params.config.patch_size), s.ckpt.params);
        py::dict d;
        d["nll"] = from_array(sw.nll);
        d["normalized_likelihood"] = from_array(sw.normalized_likelihood);
        d["percentile_rank"] = from_array(sw.rank);
        d["argmax"] = argmax_likelihood(sw);
        d["csv"] = sweep_csv(sw);
        return d;
      },
      py::arg("model"), py::arg("illusion") = "contrast", py::arg("channel") = "gray", py::arg("context") = py::none(),
      "Sweeps the template target over 0..255");

  m.def(
      "heatmap",
      [](const Model& s, const U8Array& image, int stride) {
        const NllHeatmap hm = nll_heatmap(to_image(image), s.ckpt.params, stride);
        py::array_t<double> out({hm.rows, hm.cols});
        std::copy(hm.nll.begin(), hm.nll.end(), out.mutable_data());
        return out;
      },
      py::arg("model"), py::arg("image"), py::arg("stride") = 1);

  m.def(
      "minmax",
      [](const Model& s, const U8Array& image, int k, int stride) {
        const MinMaxPatches mm = minmax_patches(to_image(image), s.ckpt.params, k, stride);
        auto pack = [](const std::vector<ScoredPatch>& ps) {
          py::list out;
          for (const ScoredPatch& p : ps) out.append(py::make_tuple(p.x, p.y, p.nll, from_image(p.patch)));
          return out;
        };
        return py::make_tuple(pack(mm.most_likely), pack(mm.least_likely));
      },
      py::arg("model"), py::arg("image"), py::arg("k") = 100, py::arg("stride") = 1,
      "(most_likely, least_likely) lists of (x, y, nll, patch)");

  m.def(
      "generate",
      [](const Model& s, const U8Array& image, const py::array_t<bool, py::array::c_style | py::array::forcecast>& mask,
         double eta, int stride) {
        if (mask.ndim() != 2) throw Error(ErrorKind::kShape, "mask must be (H, W)");
        Mask mk(static_cast<int>(mask.shape(1)), static_cast<int>(mask.shape(0)));
        for (py::ssize_t i = 0; i < mask.size(); ++i) mk.target[static_cast<size_t>(i)] = mask.data()[i] ? 1 : 0;
        GenerationConfig cfg;
        cfg.eta = static_cast<float>(eta);
        cfg.stride = stride;
        return from_image(generate_illusion(to_image(image), mk, s.ckpt.params, cfg).image);
      },
      py::arg("model"), py::arg("image"), py::arg("mask"), py::arg("eta") = 0.6, py::arg("stride") = 8);

  m.def("latent_step", py::overload_cast<double, double>(&latent_step), py::arg("z"), py::arg("eta"));
  m.def(
      "latent_step_array", [](const F32Array& z, float eta) { return from_tensor(latent_step(to_tensor(z), eta)); },
      py::arg("z"), py::arg("eta"));

  m.def(
      "gradcheck",
      [](uint64_t seed, int inject) {
        GradcheckOptions opt;
        opt.seed = seed;
        opt.inject = inject;
        const GradcheckReport rep = run_gradcheck(opt);
        py::dict per;
        for (const GradcheckEntry& e : rep.entries) per[py::str(e.name)] = e.rel_error;
        return py::make_tuple(rep.passed, rep.max_rel_error, per);
      },
      py::arg("seed") = 0, py::arg("inject") = -1);
}
