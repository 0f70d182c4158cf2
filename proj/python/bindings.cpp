#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <string>
#include <vector>

#include "admitlab/classifiers.hpp"
#include "admitlab/dataset.hpp"
#include "admitlab/error.hpp"
#include "admitlab/evaluation.hpp"
#include "admitlab/io.hpp"
#include "admitlab/measurement.hpp"
#include "admitlab/smallsignal.hpp"

namespace py = pybind11;
using namespace admitlab;

namespace {

py::dict spectrum_dict(const AdmittanceSpectrum& s) {
    const std::size_t n = s.frequencies.size();
    py::array_t<std::complex<double>> dd(n), dq(n), qd(n), qq(n);
    auto a = dd.mutable_unchecked<1>(), b = dq.mutable_unchecked<1>(), c = qd.mutable_unchecked<1>(),
         d = qq.mutable_unchecked<1>();
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<py::ssize_t>(k);
        a(i) = s.entries[k].dd;
        b(i) = s.entries[k].dq;
        c(i) = s.entries[k].qd;
        d(i) = s.entries[k].qq;
    }
    py::dict out;
    out["freq_hz"] = py::array_t<double>(static_cast<py::ssize_t>(n), s.frequencies.data());
    out["dd"] = dd;
    out["dq"] = dq;
    out["qd"] = qd;
    out["qq"] = qq;
    return out;
}

StateSpaceModel model_from_json(const std::string& descriptor_json) {
    const ModelDescriptor d = parse_descriptor(descriptor_json);
    return build_model(d.structure, d.params, d.circuit, d.op);
}

std::vector<StructureId> structure_list(const std::vector<std::string>& names) {
    std::vector<StructureId> out;
    for (const std::string& n : names) out.push_back(parse_structure(n));
    return out;
}

LabeledData labeled(const RowMatrix& x, const std::vector<std::string>& structures,
                    std::vector<std::uint64_t> ids, std::vector<std::string> feature_names) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (structures.size() != n) {
        throw Error(ErrorCode::LengthMismatch, "one structure name per row is required");
    }
    LabeledData d;
    d.x = x;
    for (std::size_t i = 0; i < n; ++i) {
        const StructureId s = parse_structure(structures[i]);
        d.structures.push_back(s);
        d.y.push_back(label_of(mode_of(s)));
    }
    if (ids.empty()) {
        for (std::size_t i = 0; i < n; ++i) ids.push_back(i);
    }
    if (ids.size() != n) throw Error(ErrorCode::LengthMismatch, "one id per row is required");
    d.ids = std::move(ids);
    if (feature_names.empty()) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) feature_names.push_back("f" + std::to_string(j));
    }
    d.feature_names = std::move(feature_names);
    return d;
}

py::dict dataset_dict(const Dataset& ds) {
    RowMatrix x(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(ds.width()));
    std::vector<std::string> structures, modes;
    std::vector<std::uint64_t> ids;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Sample& s = ds.samples[i];
        for (std::size_t j = 0; j < s.features.size(); ++j) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.features[j];
        }
        structures.emplace_back(to_string(s.structure));
        modes.emplace_back(to_string(s.mode));
        ids.push_back(s.id);
    }
    py::dict out;
    out["x"] = x;
    out["structure"] = structures;
    out["mode"] = modes;
    out["id"] = ids;
    out["feature_names"] = ds.feature_names;
    out["grid_hz"] = ds.grid;
    return out;
}

}  // namespace

PYBIND11_MODULE(_admitlab, m) {
    m.doc() = "Small-signal admittance models, PRBS measurement and control-mode classifiers";

    static py::exception<Error> error_type(m, "AdmitlabError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const py::object cls = error_type;
            py::object exc = cls(e.what());
            exc.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    m.def("structures", [] {
        std::vector<std::string> out;
        for (StructureId s : kAllStructures) out.emplace_back(to_string(s));
        return out;
    });
    m.def("learners", [] {
        std::vector<std::string> out;
        for (LearnerId l : kAllLearners) out.emplace_back(to_string(l));
        return out;
    });
    m.def("log_grid", &log_grid, py::arg("f_lo"), py::arg("f_hi"), py::arg("points"));

    m.def(
        "sweep",
        [](const std::string& descriptor_json, const std::vector<double>& freq_hz) {
            return spectrum_dict(sweep_admittance(model_from_json(descriptor_json), freq_hz));
        },
        py::arg("descriptor_json"), py::arg("freq_hz"),
        "Analytical admittance of a converter descriptor at the given frequencies");

    m.def(
        "filter_admittance",
        [](const std::string& circuit_descriptor_json, const std::vector<double>& freq_hz) {
            const ModelDescriptor d = parse_descriptor(circuit_descriptor_json);
            AdmittanceSpectrum s;
            for (double f : freq_hz) {
                s.frequencies.push_back(f);
                s.entries.push_back(filter_admittance(d.circuit, 2.0 * 3.141592653589793 * f));
            }
            return spectrum_dict(s);
        },
        py::arg("descriptor_json"), py::arg("freq_hz"));

    m.def(
        "measure",
        [](const std::string& descriptor_json, const std::string& measurement_json,
           const std::vector<double>& grid_hz, int threads) {
            const StateSpaceModel model = model_from_json(descriptor_json);
            MeasurementResult r;
            {
                py::gil_scoped_release release;
                r = measure_admittance(model, parse_measurement_config(measurement_json), grid_hz, threads);
            }
            py::dict out = spectrum_dict(r.measured);
            out["dropped_hz"] = r.dropped;
            return out;
        },
        py::arg("descriptor_json"), py::arg("measurement_json") = "{}",
        py::arg("grid_hz") = std::vector<double>{}, py::arg("threads") = 1,
        "PRBS measurement of the converter admittance");

    m.def(
        "generate",
        [](const std::string& sampling_json, std::uint64_t seed, const std::vector<std::string>& structures,
           int threads) {
            const SamplingSpec spec = parse_sampling_spec(sampling_json, seed);
            Dataset ds;
            {
                py::gil_scoped_release release;
                ds = generate_dataset(spec, structure_list(structures), threads);
            }
            return dataset_dict(ds);
        },
        py::arg("sampling_json"), py::arg("seed"), py::arg("structures"), py::arg("threads") = 1);

    m.def(
        "read_dataset", [](const std::filesystem::path& p) { return dataset_dict(read_dataset(p)); },
        py::arg("path"));

    py::class_<TrainedModel>(m, "Model")
        .def_property_readonly("learner", [](const TrainedModel& t) { return std::string(to_string(t.learner)); })
        .def_property_readonly("width", [](const TrainedModel& t) { return t.width; })
        .def_readonly("feature_names", &TrainedModel::feature_names)
        .def("predict", &predict_batch, py::arg("x"), "Labels per row: 1 = GFM, 0 = GFL")
        .def(
            "importances",
            [](const TrainedModel& t, std::size_t k) {
                const FeatureImportance fi = feature_importances(t, k);
                return py::make_tuple(fi.weights, fi.ranked);
            },
            py::arg("k") = 5)
        .def("save", &save_model, py::arg("path"))
        .def_static("load", &load_model, py::arg("path"));

    m.def(
        "train",
        [](const std::string& learner, const RowMatrix& x, const std::vector<std::string>& structures,
           const std::vector<std::uint64_t>& ids, const std::vector<std::string>& feature_names,
           const std::string& hyperparams_json, std::uint64_t seed, int threads) {
            Hyperparams hp = parse_hyperparams(hyperparams_json);
            hp.seed = seed;
            const LabeledData d = labeled(x, structures, ids, feature_names);
            py::gil_scoped_release release;
            return train(parse_learner(learner), hp, d, threads);
        },
        py::arg("learner"), py::arg("x"), py::arg("structures"), py::arg("ids") = std::vector<std::uint64_t>{},
        py::arg("feature_names") = std::vector<std::string>{}, py::arg("hyperparams_json") = "{}",
        py::arg("seed") = 1, py::arg("threads") = 1);

    m.def(
        "cross_validate",
        [](const std::string& learner, const RowMatrix& x, const std::vector<std::string>& structures,
           int runs, std::uint64_t seed, const std::vector<std::uint64_t>& ids,
           const std::string& hyperparams_json, int threads) {
            Hyperparams hp = parse_hyperparams(hyperparams_json);
            hp.seed = seed;
            const LabeledData d = labeled(x, structures, ids, {});
            CrossValidation cv;
            {
                py::gil_scoped_release release;
                cv = cross_validate(d, parse_learner(learner), hp, runs, seed, 0.8, threads);
            }
            py::dict out;
            out["mean"] = cv.mean;
            out["std"] = cv.std;
            out["accuracies"] = cv.accuracies;
            return out;
        },
        py::arg("learner"), py::arg("x"), py::arg("structures"), py::arg("runs"), py::arg("seed"),
        py::arg("ids") = std::vector<std::uint64_t>{}, py::arg("hyperparams_json") = "{}", py::arg("threads") = 1);
}
