// Python bindings for the main operations: tensor ops, cells, the sequence
// generator, patchification, loss, parameter counting and gradient checks.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "mklstm/analysis.hpp"
#include "mklstm/attention.hpp"
#include "mklstm/autodiff.hpp"
#include "mklstm/cells.hpp"
#include "mklstm/gradcheck.hpp"
#include "mklstm/moving_mnist.hpp"
#include "mklstm/predictor.hpp"

namespace py = pybind11;
using namespace mklstm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<double> to_tensor(const Array& a, const char* what) {
  if (a.ndim() != 4)
    throw std::invalid_argument(std::string(what) +
                                ": expected a 4-D array (n, h, w, c)");
  Tensor<double> t(int(a.shape(0)), int(a.shape(1)), int(a.shape(2)),
                   int(a.shape(3)));
  std::memcpy(t.data.data(), a.data(), sizeof(double) * std::size_t(t.size()));
  return t;
}

Array from_tensor(const Tensor<double>& t) {
  Array a({t.shape.n, t.shape.h, t.shape.w, t.shape.c});
  std::memcpy(a.mutable_data(), t.data.data(),
              sizeof(double) * std::size_t(t.size()));
  return a;
}

Array py_conv2d(const Array& x, const Array& kernel,
                std::optional<Array> bias) {
  Tape<double> tape;
  Var<double> b;
  if (bias.has_value()) b = tape.leaf(to_tensor(*bias, "bias"));
  Var<double> y = conv2d(tape.leaf(to_tensor(x, "input")),
                         tape.leaf(to_tensor(kernel, "kernel")), b);
  return from_tensor(y.value());
}

Array py_patchify(const Array& x, int p) {
  return from_tensor(patchify(to_tensor(x, "input"), p));
}

Array py_unpatchify(const Array& x, int p) {
  return from_tensor(unpatchify(to_tensor(x, "input"), p));
}

MultiKernelSpec spec_from_args(const std::vector<int>& kernels,
                               const std::vector<int>& channels,
                               const std::string& fusion, int out_channels,
                               bool fusion_tanh,
                               const std::vector<int>& attended) {
  if (kernels.size() != channels.size())
    throw std::invalid_argument("kernels and channels must have equal length");
  MultiKernelSpec spec;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    Branch b{kernels[i], channels[i], 0, false};
    if (!attended.empty()) {
      if (attended.size() != kernels.size())
        throw std::invalid_argument("attended must match kernels length");
      b.attended = attended[i] != 0;
    }
    spec.branches.push_back(b);
  }
  if (fusion == "one_by_one") {
    spec.fusion = Fusion::one_by_one;
    spec.out_channels = out_channels > 0 ? out_channels
                                         : spec.sum_branch_channels();
    spec.fusion_tanh = fusion_tanh;
  } else if (fusion != "interleave") {
    throw std::invalid_argument("fusion must be 'interleave' or 'one_by_one'");
  }
  return spec;
}

py::tuple py_count_parameters(const std::vector<int>& kernels,
                              const std::vector<int>& channels, int c_in,
                              const std::string& fusion, int out_channels) {
  const ParamCount c = count_parameters(
      spec_from_args(kernels, channels, fusion, out_channels, false, {}), c_in);
  return py::make_tuple(c.weights, c.biases);
}

double py_sce_loss(const Array& predictions, const Array& targets) {
  Tape<double> tape;
  Var<double> pred = tape.leaf(to_tensor(predictions, "predictions"));
  Var<double> loss = sce_sum(pred, to_tensor(targets, "targets"));
  return loss.value().data[0] / double(predictions.shape(0));
}

py::dict py_generate_sequence(int frames, int num_digits,
                              const std::vector<double>& speeds,
                              std::uint64_t seed, double jitter, int patch) {
  GeneratorConfig cfg;
  cfg.frames = frames;
  cfg.num_digits = num_digits;
  cfg.speeds = speeds;
  cfg.seed = seed;
  cfg.jitter = jitter;
  cfg.patch = patch;
  static IdxImages bank = crop_center(synthetic_digits(20, 20240101), 22);
  SequenceSample s = generate_sequence(cfg, bank);

  py::dict out;
  out["frames"] = from_tensor(s.frames.cast<double>());
  out["flow"] = from_tensor(s.flow.cast<double>());
  py::array_t<std::uint8_t> regions({frames, cfg.canvas, cfg.canvas});
  std::memcpy(regions.mutable_data(), s.regions.data(), s.regions.size());
  out["regions"] = regions;
  py::list tracks;
  for (const DigitTrack& tr : s.tracks) {
    py::dict track;
    track["speed"] = tr.speed;
    track["direction"] = tr.direction;
    py::array_t<double> pos({int(tr.positions.size()), 2});
    for (std::size_t t = 0; t < tr.positions.size(); ++t) {
      pos.mutable_at(py::ssize_t(t), 0) = tr.positions[t][0];
      pos.mutable_at(py::ssize_t(t), 1) = tr.positions[t][1];
    }
    track["positions"] = pos;
    tracks.append(track);
  }
  out["tracks"] = tracks;
  return out;
}

// Single- or multi-kernel convolutional LSTM cell over numpy state.
class PyConvLSTMCell {
 public:
  PyConvLSTMCell(const std::vector<int>& kernels,
                 const std::vector<int>& channels, int in_channels,
                 const std::string& fusion, int out_channels, bool fusion_tanh,
                 const std::vector<int>& attended, bool peephole,
                 std::uint64_t seed)
      : cell_(make_cell<double>(
            spec_from_args(kernels, channels, fusion, out_channels, fusion_tanh,
                           attended),
            in_channels,
            peephole ? Peephole::per_channel : Peephole::none, seed)) {}

  int hidden_channels() const { return cell_.spec.hidden_channels(); }

  py::tuple step(const Array& x, const Array& c, const Array& h,
                 std::optional<std::vector<Array>> masks) {
    Tape<double> tape;
    CellVars<double> vars = bind_cell(tape, cell_, false, "cell");
    StateVars<double> prev{tape.leaf(to_tensor(c, "c")),
                           tape.leaf(to_tensor(h, "h"))};
    std::vector<Var<double>> mask_vars;
    if (masks.has_value())
      for (const Array& m : *masks)
        mask_vars.push_back(tape.leaf(to_tensor(m, "mask")));
    StateVars<double> next = multikernel_step(
        tape, vars, tape.leaf(to_tensor(x, "x")), prev,
        masks.has_value() ? &mask_vars : nullptr);
    return py::make_tuple(from_tensor(next.c.value()),
                          from_tensor(next.h.value()));
  }

 private:
  CellParams<double> cell_;
};

double py_gradcheck_tiny(std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> x(1, 4, 4, 2), k(3, 3, 2, 3), b(1, 1, 1, 3);
  fill_uniform(x, rng, -1, 1);
  fill_uniform(k, rng, -1, 1);
  fill_uniform(b, rng, -1, 1);
  GradCheckReport report = gradient_check(
      {{"x", x}, {"k", k}, {"b", b}},
      [](Tape<double>& t, const std::vector<Var<double>>& p) {
        return sum_all(sigmoid(conv2d(p[0], p[1], p[2])));
      });
  return report.max_rel_err;
}

py::tuple py_velocity_histogram(const Array& flow, int bins, double clip) {
  std::vector<Tensor<float>> flows = {to_tensor(flow, "flow").cast<float>()};
  VelocityHistogram hist = velocity_histogram(flows, bins, clip);
  py::array_t<double> edges(py::ssize_t(hist.edges.size()));
  std::memcpy(edges.mutable_data(), hist.edges.data(),
              sizeof(double) * hist.edges.size());
  py::array_t<double> counts(py::ssize_t(hist.mean.size()));
  std::memcpy(counts.mutable_data(), hist.mean.data(),
              sizeof(double) * hist.mean.size());
  return py::make_tuple(edges, counts);
}

}  // namespace

PYBIND11_MODULE(mklstm, m) {
  m.doc() = "multi-kernel convolutional LSTM toolkit";

  m.def("conv2d", &py_conv2d, py::arg("x"), py::arg("kernel"),
        py::arg("bias") = std::nullopt,
        "Same-padding stride-1 convolution; kernel is (kh, kw, c_in, c_out)");
  m.def("patchify", &py_patchify, py::arg("x"), py::arg("p"));
  m.def("unpatchify", &py_unpatchify, py::arg("x"), py::arg("p"));
  m.def("count_parameters", &py_count_parameters, py::arg("kernels"),
        py::arg("channels"), py::arg("c_in"),
        py::arg("fusion") = "interleave", py::arg("out_channels") = 0,
        "(weights, biases) for a cell configuration, table convention");
  m.def("sce_loss", &py_sce_loss, py::arg("predictions"), py::arg("targets"),
        "Summed sigmoid cross entropy divided by the batch size");
  m.def("generate_sequence", &py_generate_sequence, py::arg("frames") = 20,
        py::arg("num_digits") = 1,
        py::arg("speeds") = std::vector<double>{8.0}, py::arg("seed") = 0,
        py::arg("jitter") = 1.0, py::arg("patch") = 4,
        "Bouncing-digit sequence with ground-truth flow and region labels");
  m.def("gradcheck_tiny", &py_gradcheck_tiny, py::arg("seed") = 7,
        "Max relative error of a conv+sigmoid gradient check (64-bit)");
  m.def("velocity_histogram", &py_velocity_histogram, py::arg("flow"),
        py::arg("bins") = 40, py::arg("clip") = 20.0,
        "(edges, mean normalized counts) over squared clipped velocities");

  py::class_<PyConvLSTMCell>(m, "ConvLSTMCell")
      .def(py::init<const std::vector<int>&, const std::vector<int>&, int,
                    const std::string&, int, bool, const std::vector<int>&,
                    bool, std::uint64_t>(),
           py::arg("kernels"), py::arg("channels"), py::arg("in_channels"),
           py::arg("fusion") = "interleave", py::arg("out_channels") = 0,
           py::arg("fusion_tanh") = false,
           py::arg("attended") = std::vector<int>{},
           py::arg("peephole") = true, py::arg("seed") = 0)
      .def_property_readonly("hidden_channels",
                             &PyConvLSTMCell::hidden_channels)
      .def("step", &PyConvLSTMCell::step, py::arg("x"), py::arg("c"),
           py::arg("h"), py::arg("masks") = std::nullopt,
           "One cell step; returns (c_next, h_next)");
}
