#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sspo/alignment.hpp"
#include "sspo/checks.hpp"
#include "sspo/config.hpp"
#include "sspo/error.hpp"
#include "sspo/study.hpp"
#include "sspo/theorem2.hpp"

namespace py = pybind11;
using namespace sspo;

namespace {

std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

std::vector<Tensor> to_points(const std::vector<std::vector<double>>& rows) {
  std::vector<Tensor> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(Tensor::vector(r));
  return out;
}

py::dict summary_dict(const RunSummary& s) {
  py::dict d;
  d["variant"] = s.variant;
  d["seed"] = s.seed;
  d["failed"] = s.failed;
  d["error"] = s.error;
  d["initial_score"] = s.initial_score;
  d["peak_score"] = s.peak_score;
  d["final_score"] = s.final_score;
  d["drop"] = s.drop;
  d["ssr_rate_first10"] = s.ssr_rate_first10;
  d["ssr_rate_last10"] = s.ssr_rate_last10;
  d["curve"] = s.curve;
  return d;
}

}  // namespace

PYBIND11_MODULE(_sspo, m) {
  m.doc() = "Bindings for the sspo C++ core";

  // SspoError carries the library error code as a string attribute `code`.
  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result([&]() -> py::object {
    return py::exception<Error>(m, "SspoError", PyExc_RuntimeError);
  });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object& type = error_type.get_stored();
      py::object err = type(py::str(e.what()));
      err.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(type.ptr(), err.ptr());
    }
  });

  py::enum_<SsrMode>(m, "SsrMode")
      .value("OFF", SsrMode::kOff)
      .value("SIGN", SsrMode::kSign)
      .value("INDICATOR", SsrMode::kIndicator);
  py::enum_<ErdStrategy>(m, "ErdStrategy")
      .value("INITIAL", ErdStrategy::kInitial)
      .value("LAST", ErdStrategy::kLast)
      .value("UNIFORM", ErdStrategy::kUniform);
  py::enum_<WeightingMode>(m, "WeightingMode")
      .value("CONSTANT", WeightingMode::kConstant)
      .value("EXACT", WeightingMode::kExact);

  py::class_<ErrorQuad>(m, "ErrorQuad")
      .def(py::init([](double mw, double rw, double mr, double rr) {
             return ErrorQuad{mw, rw, mr, rr};
           }),
           py::arg("model_w"), py::arg("ref_w"), py::arg("model_r"), py::arg("ref_r"))
      .def_readwrite("model_w", &ErrorQuad::model_w)
      .def_readwrite("ref_w", &ErrorQuad::ref_w)
      .def_readwrite("model_r", &ErrorQuad::model_r)
      .def_readwrite("ref_r", &ErrorQuad::ref_r);

  py::class_<LossBreakdown>(m, "LossBreakdown")
      .def_readonly("sign", &LossBreakdown::sign)
      .def_readonly("inside_term", &LossBreakdown::inside_term)
      .def_readonly("loss", &LossBreakdown::loss)
      .def_readonly("scale", &LossBreakdown::scale);

  m.def("compute_sign", &compute_sign, py::arg("quad"), py::arg("mode") = SsrMode::kSign);
  m.def("ssr_loss", &ssr_loss, py::arg("quad"), py::arg("scale"), py::arg("mode") = SsrMode::kSign);
  m.def("pseudocode_inside_term", &pseudocode_inside_term, py::arg("quad"), py::arg("scale"));
  m.def("analytic_gradient_weight", &analytic_gradient_weight, py::arg("quad"), py::arg("scale"));

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def(py::init<double, int, WeightingMode>(), py::arg("alpha"), py::arg("steps"),
           py::arg("mode") = WeightingMode::kConstant)
      .def_property_readonly("alpha", &NoiseSchedule::alpha)
      .def_property_readonly("steps", &NoiseSchedule::steps)
      .def("alpha_bar", &NoiseSchedule::alpha_bar)
      .def("sigma_t_sq", &NoiseSchedule::sigma_t_sq)
      .def("weight_w_t", &NoiseSchedule::weight_w_t);

  py::class_<PolicySpec>(m, "PolicySpec")
      .def(py::init([](std::uint32_t input_dim, std::uint32_t cond_cardinality,
                       std::vector<std::uint32_t> hidden_dims, std::uint32_t time_embed_dim) {
             return PolicySpec{input_dim, cond_cardinality, std::move(hidden_dims), time_embed_dim};
           }),
           py::arg("input_dim") = 2, py::arg("cond_cardinality") = 3,
           py::arg("hidden_dims") = std::vector<std::uint32_t>{64, 64},
           py::arg("time_embed_dim") = 16)
      .def_readwrite("input_dim", &PolicySpec::input_dim)
      .def_readwrite("cond_cardinality", &PolicySpec::cond_cardinality)
      .def_readwrite("hidden_dims", &PolicySpec::hidden_dims)
      .def_readwrite("time_embed_dim", &PolicySpec::time_embed_dim)
      .def("param_count", &PolicySpec::param_count)
      .def("__repr__", &PolicySpec::describe)
      .def(py::self == py::self);

  py::class_<Policy>(m, "Policy")
      .def_static("initialize",
                  [](const PolicySpec& spec, std::uint64_t seed) {
                    SeededRng rng(seed);
                    return Policy::initialize(spec, rng);
                  },
                  py::arg("spec"), py::arg("seed"))
      .def_static("zeros", &Policy::zeros)
      .def_property_readonly("spec", &Policy::spec)
      .def_property_readonly("params", [](const Policy& p) { return to_vector(p.params().values()); })
      .def("predict_eps",
           [](const Policy& p, std::vector<double> x_t, int t, std::uint32_t c) {
             return to_vector(p.predict_eps(Tensor::vector(std::move(x_t)), t, c).data());
           },
           py::arg("x_t"), py::arg("t"), py::arg("c"))
      .def("sample",
           [](const Policy& p, std::uint32_t c, const NoiseSchedule& schedule, std::uint64_t seed,
              std::size_t n) {
             SeededRng rng(seed);
             std::vector<std::vector<double>> out;
             for (std::size_t i = 0; i < n; ++i) {
               out.push_back(to_vector(p.ancestral_sample(c, rng, schedule).data()));
             }
             return out;
           },
           py::arg("c"), py::arg("schedule"), py::arg("seed"), py::arg("n") = 1)
      .def("save",
           [](const Policy& p, const std::filesystem::path& path, std::uint32_t iteration,
              std::uint64_t seed) { return save_params(path, p, {iteration, seed}); },
           py::arg("path"), py::arg("iteration") = 0, py::arg("seed") = 0)
      .def_static("load",
                  [](const std::filesystem::path& path, std::optional<PolicySpec> expected) {
                    return load_params(path, expected).policy;
                  },
                  py::arg("path"), py::arg("expected") = std::nullopt);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("parse", [](const std::string& text) { return parse_config(text, "<python>"); })
      .def_static("load", &load_config)
      .def("set", [](RunConfig& c, const std::string& key, const std::string& value) {
        apply_override(c, key, value);
      })
      .def("serialize", [](const RunConfig& c) { return serialize_config(c); })
      .def_property_readonly("policy", [](const RunConfig& c) { return c.train.policy; })
      .def_property_readonly("seeds", [](const RunConfig& c) { return c.study_seeds; })
      .def(py::self == py::self);

  m.def("pretrain",
        [](const RunConfig& cfg) {
          PretrainResult r = [&] {
            py::gil_scoped_release release;
            return pretrain(cfg.train);
          }();
          return py::make_tuple(r.policy, r.initial_heldout_loss, r.final_heldout_loss);
        },
        py::arg("config"));
  m.def("train",
        [](const RunConfig& cfg, const Policy& theta0, const std::filesystem::path& run_dir,
           const std::string& method) {
          if (method != "sft" && method != "sspo") {
            throw Error(ErrorCode::kInvalidArgument, "method must be sspo or sft");
          }
          const Method mth = method == "sft" ? Method::kSft : Method::kSspo;
          RunResult run = [&] {
            py::gil_scoped_release release;
            return train_alignment(cfg.train, theta0, run_dir, mth);
          }();
          return py::make_tuple(run.final_policy, summary_dict(summarize(method, cfg.train.seed, run)));
        },
        py::arg("config"), py::arg("theta0"), py::arg("run_dir"), py::arg("method") = "sspo");

  m.def("energy_distance",
        [](const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
          return energy_distance(to_points(a), to_points(b));
        });
  m.def("evaluate",
        [](const Policy& policy, const RunConfig& cfg, std::size_t n) {
          const EvalReport r = evaluate(policy, cfg.train.mixture_task(), cfg.train.schedule(),
                                        cfg.train.eval_seed(), n);
          py::dict d;
          d["energy_distance"] = r.energy_distance;
          d["pooled"] = r.pooled;
          d["eps_mse"] = r.eps_mse;
          return d;
        },
        py::arg("policy"), py::arg("config"), py::arg("n") = 512);

  m.def("theorem2_bias_check",
        [](const NoiseSchedule& s, int t, double sigma0_sq, const std::vector<double>& b1,
           const std::vector<double>& b2) {
          const Theorem2Report r = theorem2_bias_check(s, t, sigma0_sq, b1, b2);
          py::dict d;
          d["kl1"] = r.kl1;
          d["kl2"] = r.kl2;
          d["identity_residual"] = r.identity_residual;
          d["ordering_agrees"] = r.ordering_agrees;
          return d;
        },
        py::arg("schedule"), py::arg("t"), py::arg("sigma0_sq"), py::arg("b1"), py::arg("b2"));

  m.def("gradcheck",
        [](int cases, std::uint64_t seed, std::optional<PolicySpec> spec) {
          GradcheckOptions opt;
          opt.cases = cases;
          opt.seed = seed;
          if (spec) opt.spec = *spec;
          py::gil_scoped_release release;
          const GradcheckReport r = run_gradcheck(opt);
          return std::make_pair(r.max_rel_error, r.max_weight_error);
        },
        py::arg("cases") = 20, py::arg("seed") = 0, py::arg("spec") = std::nullopt);
}
