#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stsm/autodiff.hpp"
#include "stsm/experiment.hpp"
#include "stsm/network.hpp"
#include "stsm/shift.hpp"
#include "stsm/synth.hpp"
#include "stsm/tensor_io.hpp"

namespace py = pybind11;
using namespace stsm;

namespace {

using Array5 = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor5 to_tensor(const Array5& arr) {
    if (arr.ndim() != 5) {
        throw ShapeError("expected a 5-d array (n, c, t, h, w), got ndim=" +
                         std::to_string(arr.ndim()));
    }
    Dims5 d{arr.shape(0), arr.shape(1), arr.shape(2), arr.shape(3), arr.shape(4)};
    Tensor5 t(d, 0.0);
    std::memcpy(t.data(), arr.data(), static_cast<std::size_t>(t.size()) * sizeof(double));
    return t;
}

py::array_t<double> to_array(const Tensor5& t) {
    const Dims5& d = t.dims();
    py::array_t<double> arr({d.n, d.c, d.t, d.h, d.w});
    std::memcpy(arr.mutable_data(), t.data(), static_cast<std::size_t>(t.size()) * sizeof(double));
    return arr;
}

ShiftSpec spec_for(index_t channels, const std::string& spec_text) {
    return build_shift_spec(channels, parse_shift_pattern(spec_text));
}

// Thin eval-only wrapper pairing a layer graph with its parameters.
class Network {
public:
    Network(const std::string& preset, int in_channels, int num_classes,
            const std::string& spec_text, std::uint64_t seed) {
        NetworkConfig cfg = preset_config(preset);
        cfg.in_channels = in_channels;
        cfg.num_classes = num_classes;
        cfg.shift = parse_shift_pattern(spec_text);
        graph_ = build_network(cfg);
        params_ = init_params(graph_, seed);
    }

    py::array_t<double> forward(const Array5& x) {
        Tensor5 logits = forward_network(graph_, params_, to_tensor(x));
        const Dims5& d = logits.dims();
        py::array_t<double> out({d.n, d.c});
        std::memcpy(out.mutable_data(), logits.data(),
                    static_cast<std::size_t>(logits.size()) * sizeof(double));
        return out;
    }

    std::vector<int> predict(const Array5& x) {
        Tensor5 t = to_tensor(x);
        return stsm::predict(graph_, params_, t);
    }

    std::string cost_text(std::array<index_t, 5> dims) {
        return cost_report(graph_, Dims5{dims[0], dims[1], dims[2], dims[3], dims[4]}).to_text();
    }

    std::pair<long long, long long> cost_totals(std::array<index_t, 5> dims) {
        const CostReport r = cost_report(graph_, Dims5{dims[0], dims[1], dims[2], dims[3], dims[4]});
        return {r.total_mults_adds, r.total_parameters};
    }

    long long parameter_count() const { return params_.total_parameters(); }

    void save(const std::string& dir) { save_checkpoint(graph_, params_, dir); }
    void load(const std::string& dir) { load_checkpoint(graph_, params_, dir); }

private:
    LayerGraph graph_;
    ParamStore params_;
};

}  // namespace

PYBIND11_MODULE(_stsm, m) {
    m.doc() = "Zero-cost spatio-temporal channel shifts with exact cost accounting";

    py::register_exception<ShapeError>(m, "ShapeError");
    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<FormatError>(m, "FormatError");
    py::register_exception<ContractError>(m, "ContractError");

    m.def(
        "apply_shift",
        [](const Array5& x, const std::string& spec_text) {
            Tensor5 t = to_tensor(x);
            return to_array(apply_stsm(t, spec_for(t.dims().c, spec_text)));
        },
        py::arg("x"), py::arg("spec") = "pattern=T+H+W f=3/8",
        "Channel-partitioned unit shift with zero fill, e.g. spec='pattern=T+H+W f=3/8'.");

    m.def(
        "sparse_conv_reference",
        [](const Array5& x, const std::string& spec_text) {
            Tensor5 t = to_tensor(x);
            const ShiftSpec spec = spec_for(t.dims().c, spec_text);
            return to_array(oracle_sparse_conv(t, build_sparse_kernel(spec)));
        },
        py::arg("x"), py::arg("spec") = "pattern=T+H+W f=3/8",
        "Reference route: depthwise convolution with the matching one-hot kernels.");

    m.def(
        "shift_layout",
        [](index_t channels, const std::string& spec_text) {
            const ShiftSpec spec = spec_for(channels, spec_text);
            py::list rows;
            for (const auto& entry : spec.layout) {
                py::dict row;
                row["start"] = entry.range.start;
                row["end"] = entry.range.end;
                row["axes"] = entry.group.axes.str();
                row["direction"] = entry.group.direction;
                rows.append(row);
            }
            py::dict identity;
            identity["start"] = spec.identity.start;
            identity["end"] = spec.identity.end;
            py::dict out;
            out["shifted"] = rows;
            out["identity"] = identity;
            return out;
        },
        py::arg("channels"), py::arg("spec"),
        "Channel partition a spec induces for the given channel count.");

    m.def(
        "generate_clips",
        [](int n, std::uint64_t seed, index_t frames, index_t height, index_t width, index_t square,
           double noise, index_t channels) {
            MotionTask task;
            task.frames = frames;
            task.height = height;
            task.width = width;
            task.square = square;
            task.noise = noise;
            task.channels = channels;
            const std::vector<ClipSample> samples = generate_batch(task, n, seed);
            py::array_t<double> clips = to_array(stack_clips(samples));
            std::vector<int> labels = labels_of(samples);
            return py::make_tuple(clips, labels);
        },
        py::arg("n"), py::arg("seed"), py::arg("frames") = 8, py::arg("height") = 32,
        py::arg("width") = 32, py::arg("square") = 5, py::arg("noise") = 0.05,
        py::arg("channels") = 1,
        "Balanced four-class moving-square clips; reversal partners are adjacent.");

    m.def(
        "softmax_cross_entropy",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> logits,
           const std::vector<int>& labels) {
            if (logits.ndim() != 2) throw ContractError("expected (n, classes) logits");
            Tensor5 t(Dims5{logits.shape(0), logits.shape(1), 1, 1, 1}, 0.0);
            std::memcpy(t.data(), logits.data(),
                        static_cast<std::size_t>(t.size()) * sizeof(double));
            return softmax_cross_entropy(t, labels);
        },
        py::arg("logits"), py::arg("labels"));

    m.def(
        "save_tensor",
        [](const Array5& x, const std::string& path) { save_tensor(to_tensor(x), path); },
        py::arg("x"), py::arg("path"));
    m.def(
        "load_tensor", [](const std::string& path) { return to_array(load_tensor(path)); },
        py::arg("path"));

    m.def("presets", [] { return preset_names(); });

    py::class_<Network>(m, "Network")
        .def(py::init<const std::string&, int, int, const std::string&, std::uint64_t>(),
             py::arg("preset") = "tiny", py::arg("in_channels") = 1, py::arg("num_classes") = 4,
             py::arg("spec") = "pattern=T+H+W f=3/8", py::arg("seed") = 1)
        .def("forward", &Network::forward, py::arg("x"))
        .def("predict", &Network::predict, py::arg("x"))
        .def("cost_text", &Network::cost_text, py::arg("input_dims"))
        .def("cost_totals", &Network::cost_totals, py::arg("input_dims"))
        .def("parameter_count", &Network::parameter_count)
        .def("save", &Network::save, py::arg("directory"))
        .def("load", &Network::load, py::arg("directory"));
}
