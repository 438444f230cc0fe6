#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "unrollsync/harness.hpp"
#include "unrollsync/metrics.hpp"
#include "unrollsync/mra.hpp"

namespace py = pybind11;
using namespace unrollsync;

namespace {

using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const RealArray& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
    const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
    return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

py::array_t<double> from_matrix(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

std::vector<double> to_vector(const RealArray& a) {
    if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
    return {a.data(), a.data() + a.shape(0)};
}

py::array_t<double> from_vector(const std::vector<double>& v) {
    py::array_t<double> out(v.size());
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

ComplexVector to_cvector(const ComplexArray& a) {
    if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
    ComplexVector v(static_cast<std::size_t>(a.shape(0)));
    for (std::size_t i = 0; i < v.size(); ++i) v.set(i, a.data()[i]);
    return v;
}

py::array_t<std::complex<double>> from_cvector(const ComplexVector& v) {
    py::array_t<std::complex<double>> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.mutable_data()[i] = v[i];
    return out;
}

ComplexMatrix to_cmatrix(const ComplexArray& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
    ComplexMatrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) m.set(i, j, a.data()[i * m.cols() + j]);
    return m;
}

py::array_t<std::complex<double>> from_cmatrix(const ComplexMatrix& m) {
    py::array_t<std::complex<double>> out({m.rows(), m.cols()});
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out.mutable_data()[i * m.cols() + j] = m(i, j);
    return out;
}

py::object h_to_py(const MeasurementMatrix& h) {
    if (h.is_complex()) return from_cmatrix(h.as_complex());
    return from_matrix(h.re);
}

py::dict instance_to_dict(const SyncInstance& s) {
    py::dict d;
    d["group"] = std::string(to_string(s.group));
    d["n"] = s.n;
    d["lambda"] = s.lambda;
    d["h"] = h_to_py(s.h);
    switch (s.group) {
        case Group::Z2: d["truth"] = from_vector(s.signs); break;
        case Group::U1: d["truth"] = from_cvector(s.phases); break;
        case Group::SO3: d["truth"] = from_matrix(s.rotations); break;
    }
    return d;
}

py::dict row_to_dict(const ResultRow& r) {
    py::dict d;
    d["experiment"] = r.experiment;
    d["group"] = r.group;
    d["algorithm"] = r.algorithm;
    d["metric"] = r.metric;
    d["lambda"] = r.lambda;
    d["depth_or_iters"] = r.depth_or_iters;
    d["seed"] = r.seed;
    d["error_mean"] = r.error_mean;
    d["error_std"] = r.error_std;
    d["n_test"] = r.n_test;
    d["wall_ms"] = r.wall_ms ? py::cast(*r.wall_ms) : py::none();
    d["iter_ms"] = r.iter_ms ? py::cast(*r.iter_ms) : py::none();
    d["status"] = r.failed ? "failed" : "ok";
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Unrolled group synchronization";
    m.attr("__version__") = std::string(kToolkitVersion);

    py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

    py::class_<InitState>(m, "InitState").def_property_readonly("group", [](const InitState& s) {
        return std::string(to_string(s.group));
    });

    m.def(
        "generate",
        [](const std::string& group, std::size_t n, double lambda, std::uint64_t seed, std::uint64_t index,
           double noise_scale) {
            Rng rng = Rng::stream(seed, index);
            return instance_to_dict(generate(parse_group(group), n, lambda, rng, noise_scale));
        },
        py::arg("group"), py::arg("n"), py::arg("lam"), py::arg("seed") = 0, py::arg("index") = 0,
        py::arg("noise_scale") = 1.0, "One synchronization instance: dict with group, n, lambda, h and truth.");

    m.def(
        "generate_mra",
        [](const std::string& group, std::size_t length, std::size_t n, double lambda, std::uint64_t seed,
           double noise_scale) {
            Rng rng(splitmix64_mix(seed));
            const MraBatch b = group == "z2" ? gen_mra_z2(length, n, lambda, rng, noise_scale)
                                             : group == "shift" ? gen_mra_shift(length, n, lambda, rng, noise_scale)
                                                                : throw std::invalid_argument("group must be z2 or shift");
            py::dict d;
            d["signal"] = from_vector(b.signal);
            d["elements"] = b.elements;
            d["observations"] = from_matrix(b.observations);
            d["h"] = h_to_py(ratios_from_mra(b, lambda));
            return d;
        },
        py::arg("group"), py::arg("length"), py::arg("n"), py::arg("lam"), py::arg("seed") = 0,
        py::arg("noise_scale") = 1.0);

    m.def(
        "make_init",
        [](const std::string& group, std::size_t n, std::uint64_t seed) {
            Rng rng(splitmix64_mix(seed));
            return make_init(parse_group(group), n, rng);
        },
        py::arg("group"), py::arg("n"), py::arg("seed") = 0);

    m.def("pm_z2", [](const RealArray& h, std::size_t t, const InitState& s) {
        return from_vector(pm_z2(to_matrix(h), t, s).estimate);
    });
    m.def("ppm_z2", [](const RealArray& h, std::size_t t, const InitState& s) {
        return from_vector(ppm_z2(to_matrix(h), t, s).estimate);
    });
    m.def("amp_z2", [](const RealArray& h, double lambda, std::size_t t, const InitState& s) {
        return from_vector(amp_z2(to_matrix(h), lambda, t, s).estimate);
    });
    m.def("pm_u1", [](const ComplexArray& h, std::size_t t, const InitState& s) {
        return from_cvector(pm_u1(to_cmatrix(h), t, s).estimate);
    });
    m.def("ppm_u1", [](const ComplexArray& h, std::size_t t, const InitState& s) {
        return from_cvector(ppm_u1(to_cmatrix(h), t, s).estimate);
    });
    m.def("amp_u1", [](const ComplexArray& h, double lambda, std::size_t t, const InitState& s) {
        return from_cvector(amp_u1(to_cmatrix(h), lambda, t, s).estimate);
    });
    m.def("ppm_so3", [](const RealArray& h, std::size_t t, const InitState& s) {
        return from_matrix(ppm_so3(to_matrix(h), t, s).estimate);
    });
    m.def("spectral_so3", [](const RealArray& h) { return from_matrix(spectral_so3(to_matrix(h))); });
    m.def("bessel_ratio", &bessel_ratio);

    m.def("err_z2", [](const RealArray& z, const RealArray& zhat) { return err_z2(to_vector(z), to_vector(zhat)); });
    m.def("err_u1", [](const ComplexArray& z, const ComplexArray& zhat) {
        return err_u1(to_cvector(z), to_cvector(zhat));
    });
    m.def("err_so3", [](const RealArray& r, const RealArray& rhat) { return err_so3(to_matrix(r), to_matrix(rhat)); });
    m.def("rec_err_z2", [](const RealArray& x, const RealArray& xhat) {
        return rec_err_z2(to_vector(x), to_vector(xhat));
    });
    m.def(
        "rec_err_zl",
        [](const RealArray& x, const RealArray& xhat, std::size_t grid_factor) {
            return rec_err_zl(dft(to_vector(x)), dft(to_vector(xhat)), grid_factor);
        },
        py::arg("x"), py::arg("xhat"), py::arg("grid_factor") = 10);

    py::class_<UnrolledModel>(m, "UnrolledModel")
        .def_property_readonly("group", [](const UnrolledModel& u) { return std::string(to_string(u.group)); })
        .def_readonly("depth", &UnrolledModel::depth)
        .def_readonly("lam", &UnrolledModel::lambda)
        .def_property_readonly("parameter_count", [](const UnrolledModel& u) { return u.params.parameter_count(); })
        .def("save", [](const UnrolledModel& u, const std::string& path) { save_model(u, path); });

    m.def(
        "build_model",
        [](const std::string& task, std::size_t depth, double lambda, bool sharing, std::uint64_t seed) {
            return build_model(task_group(parse_task(task)), depth, lambda, sharing, seed);
        },
        py::arg("task"), py::arg("depth"), py::arg("lam"), py::arg("weight_sharing") = false, py::arg("seed") = 0);
    m.def("load_model", [](const std::string& path) { return load_model(path); });

    m.def(
        "train",
        [](UnrolledModel& model, const std::string& task, double lambda, std::size_t samples, std::size_t epochs,
           double lr, std::size_t batch_size, std::uint64_t seed, const std::string& loss) {
            TrainConfig cfg;
            cfg.task = parse_task(task);
            cfg.loss = parse_loss(loss);
            cfg.lambda = lambda;
            cfg.samples = samples;
            cfg.epochs = epochs;
            cfg.learning_rate = lr;
            cfg.batch_size = batch_size;
            cfg.seed = seed;
            cfg.n = 20;
            TrainHistory h;
            {
                py::gil_scoped_release release;
                h = train(model, cfg);
            }
            py::list history;
            for (const auto& e : h.epochs) history.append(py::make_tuple(e.epoch, e.train_loss, e.validation_error));
            return history;
        },
        py::arg("model"), py::arg("task"), py::arg("lam"), py::arg("samples") = 2000, py::arg("epochs") = 60,
        py::arg("lr") = 1e-3, py::arg("batch_size") = 128, py::arg("seed") = 0, py::arg("loss") = "alignment",
        "Trains in place on N = 20 instances; returns [(epoch, train_loss, validation_error)].");

    m.def(
        "evaluate",
        [](UnrolledModel& model, const std::string& task, double lambda, std::size_t count, std::uint64_t seed) {
            const Dataset test = make_dataset(parse_task(task), 20, lambda, count, seed);
            return from_vector(evaluate_unrolled(model, test));
        },
        py::arg("model"), py::arg("task"), py::arg("lam"), py::arg("count") = 100, py::arg("seed") = 0,
        "Per-instance alignment errors on a fresh test set.");

    m.def(
        "run_experiment",
        [](const std::string& config_json, std::size_t threads) {
            const ExperimentConfig cfg = config_from_json(config_json);
            RunOptions opts;
            opts.threads = threads;
            std::vector<ResultRow> rows;
            {
                py::gil_scoped_release release;
                rows = run_experiment(cfg, opts);
            }
            py::list out;
            for (const auto& r : rows) out.append(row_to_dict(r));
            return out;
        },
        py::arg("config_json"), py::arg("threads") = 1, "Rows of the experiment as dicts.");

    m.def(
        "figure_config",
        [](const std::string& id, const std::string& scale, std::uint64_t seed) {
            py::list out;
            for (const auto& c : figure_configs(id, parse_scale(scale), seed)) out.append(to_json(c));
            return out;
        },
        py::arg("id"), py::arg("scale") = "desk", py::arg("seed") = 0, "JSON configs behind a figure.");

    m.def("config_hash", [](const std::string& config_json) { return config_hash(config_from_json(config_json)); });
}
