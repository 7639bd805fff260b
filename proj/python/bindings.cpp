#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cli.hpp"
#include "lmac/error.hpp"
#include "lmac/interpret.hpp"
#include "lmac/metrics.hpp"
#include "lmac/models.hpp"
#include "lmac/ops.hpp"
#include "lmac/sanity.hpp"
#include "lmac/synth.hpp"

namespace py = pybind11;
using namespace lmac;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

FloatArray to_array(const std::vector<float>& v) {
  FloatArray out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<float> to_samples(const FloatArray& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-D waveform");
  return {a.data(), a.data() + a.size()};
}

const MelFilterbank& default_filterbank() {
  static const MelFilterbank fb;
  return fb;
}

Spectrogram make_spectrogram(const FloatArray& magnitude, const FloatArray& phase, std::int64_t num_samples) {
  Spectrogram spec;
  spec.magnitude = to_tensor(magnitude);
  spec.phase = to_tensor(phase);
  if (spec.magnitude.shape() != spec.phase.shape() || spec.magnitude.shape().size() != 2) {
    throw ShapeError("magnitude and phase must be matching [F, T] arrays");
  }
  spec.num_samples = num_samples;
  return spec;
}

}  // namespace

PYBIND11_MODULE(_lmac, m) {
  m.doc() = "Listenable masks for audio classifier interpretation";

  auto base = py::register_exception<Error>(m, "LmacError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<MissingPrerequisite>(m, "MissingPrerequisite", base.ptr());

  m.def(
      "generate_clip",
      [](int class_id, std::uint64_t seed) {
        if (class_id < 0 || class_id >= kNumClasses) throw ConfigError("class id out of range");
        Rng rng(seed);
        return to_array(generate_clip(class_id, rng).samples);
      },
      py::arg("class_id"), py::arg("seed") = 0, "2 s synthetic clip of one class at 16 kHz.");

  m.def(
      "stft",
      [](const FloatArray& samples) {
        const Spectrogram spec = stft(std::span<const float>(to_samples(samples)));
        return py::make_tuple(to_array(spec.magnitude), to_array(spec.phase));
      },
      py::arg("samples"), "Magnitude and phase [257, T] of a 16 kHz waveform.");

  m.def(
      "istft",
      [](const FloatArray& magnitude, const FloatArray& phase, std::int64_t num_samples) {
        return to_array(istft(make_spectrogram(magnitude, phase, num_samples)).samples);
      },
      py::arg("magnitude"), py::arg("phase"), py::arg("num_samples"));

  m.def(
      "log_mel", [](const FloatArray& magnitude) { return to_array(default_filterbank().log_mel(to_tensor(magnitude))); },
      py::arg("magnitude"), "40-band log-mel features of a linear magnitude [257, T].");

  m.def(
      "sparseness", [](const FloatArray& a) { return sparseness(to_tensor(a).data()); }, py::arg("attribution"),
      "Gini index of |a|.");
  m.def(
      "complexity", [](const FloatArray& a) { return complexity(to_tensor(a).data()); }, py::arg("attribution"),
      "Entropy of |a| / sum |a|.");
  m.def(
      "ssim", [](const FloatArray& a, const FloatArray& b) { return ssim(to_tensor(a), to_tensor(b)); }, py::arg("a"),
      py::arg("b"));

  m.def(
      "evaluate_masks",
      [](const std::function<std::vector<std::vector<double>>(std::vector<FloatArray>)>& logits,
         const std::vector<FloatArray>& inputs, const std::vector<FloatArray>& masks) {
        const ScoreFn f = [&logits](const std::vector<Tensor>& xs) {
          std::vector<FloatArray> arrays;
          for (const auto& x : xs) arrays.push_back(to_array(x));
          return logits(arrays);
        };
        std::vector<Tensor> in, ms;
        for (const auto& a : inputs) in.push_back(to_tensor(a));
        for (const auto& a : masks) ms.push_back(to_tensor(a));
        return evaluate_masks(f, in, ms).to_json().dump();
      },
      py::arg("logits"), py::arg("inputs"), py::arg("masks"),
      "Metrics for masks over inputs; `logits` maps a list of arrays to one logit row each. Returns JSON.");

  py::class_<Classifier>(m, "Classifier")
      .def_static("load", [](const std::string& path) { return Classifier::load(path); }, py::arg("path"))
      .def(
          "predict",
          [](const Classifier& c, const FloatArray& features) {
            NoGradGuard guard;
            return c.forward(to_tensor(features)).probs;
          },
          py::arg("features"), "Class probabilities for [n_mels, T] or [B, n_mels, T] log-mel features.")
      .def_property_readonly("num_classes", [](const Classifier& c) { return c.arch().num_classes; })
      .def_property_readonly("parameter_count", &Classifier::parameter_count);

  py::class_<Decoder>(m, "Decoder").def_static(
      "load", [](const std::string& path) { return Decoder::load(path); }, py::arg("path"));

  m.def(
      "interpret",
      [](const Classifier& clf, const Decoder& dec, const FloatArray& samples) {
        const Spectrogram spec = stft(std::span<const float>(to_samples(samples)));
        NoGradGuard guard;
        const auto out = clf.forward(default_filterbank().log_mel(spec.magnitude));
        const Tensor mask = lmac::select(dec.forward(out.latents, spec.frames()), 0);
        const AudioClip listen = synthesize_interpretation(mask, spec);
        py::dict d;
        d["mask"] = to_array(mask);
        d["interpretation"] = to_array(listen.samples);
        d["class"] = out.predicted[0];
        d["probability"] = out.probs[0][static_cast<std::size_t>(out.predicted[0])];
        return d;
      },
      py::arg("classifier"), py::arg("decoder"), py::arg("samples"),
      "Mask, listenable waveform and decision for one 16 kHz clip.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one lmac command in-process; returns (exit_code, stdout, stderr).");
}
