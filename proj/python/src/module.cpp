#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "delayctl/cli.hpp"
#include "delayctl/demos.hpp"
#include "delayctl/errors.hpp"
#include "delayctl/field_io.hpp"
#include "delayctl/hjb.hpp"
#include "delayctl/hypotheses.hpp"
#include "delayctl/operators.hpp"
#include "delayctl/simulate.hpp"
#include "delayctl/spec_io.hpp"

namespace py = pybind11;
using namespace delayctl;

namespace {

// State at which v is evaluated: spec's initial data unless overridden.
// The history comes in as JSON text, same grammar as the spec files.
AbstractState state_for(const ProblemSpec& spec, const std::optional<VectorXd>& y,
                        const std::string& history) {
  ProblemSpec s = spec;
  if (y) s.initial.y0 = *y;
  if (!history.empty()) s.initial.u0 = history_from_json(Json::parse(history), s.m, s.d);
  return lift_initial(s);
}

// "feedback", "random" or a constant control vector.
Policy make_policy(const ProblemSpec& spec, const ReducedValueField* field, const py::object& policy,
                   std::uint64_t seed) {
  if (py::isinstance<py::str>(policy)) {
    const std::string name = policy.cast<std::string>();
    if (name == "feedback") {
      if (!field) throw ValidationError("simulate", "feedback policy needs a solved field");
      return Policy::feedback(*field);
    }
    if (name == "random") return random_open_loop(spec.U, spec.T, seed);
    throw ConfigError("unknown policy '" + name + "'");
  }
  return Policy::constant(policy.cast<VectorXd>());
}

SimOptions sim_options(double dt, int paths, std::uint64_t seed) {
  SimOptions o;
  o.dt = dt;
  o.n_paths = paths;
  o.seed = seed;
  return o;
}

py::dict estimate(const Estimate& e) {
  py::dict d;
  d["mean"] = e.mean;
  d["se"] = e.se;
  return d;
}

py::dict report_dict(const SolveReport& r) {
  py::dict d;
  d["iterations"] = r.iterations;
  d["converged"] = r.converged;
  d["eta"] = r.eta;
  d["ratios"] = r.ratios;
  d["distances"] = r.distances_unweighted;
  d["mild_residual"] = r.mild_residual;
  d["probe_residual"] = r.probe_residual;
  d["apriori_bound"] = r.apriori_bound;
  d["C_T"] = r.C_T;
  d["seconds"] = r.seconds;
  d["notes"] = r.notes;
  return d;
}

}  // namespace

PYBIND11_MODULE(_delayctl, m) {
  m.doc() = "Partial-smoothing HJB solver for control problems with delay in the control";

  static py::exception<Error> base(m, "DelayctlError");
  static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
  static py::exception<ValidationError> validation(m, "ValidationError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config, e.what());
    } catch (const ValidationError& e) {
      py::set_error(validation, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  py::class_<ProblemSpec>(m, "Spec")
      .def_readonly("name", &ProblemSpec::name)
      .def_readonly("n", &ProblemSpec::n)
      .def_readonly("m", &ProblemSpec::m)
      .def_readonly("k", &ProblemSpec::k)
      .def_readonly("d", &ProblemSpec::d)
      .def_readonly("T", &ProblemSpec::T)
      .def_readonly("a0", &ProblemSpec::a0)
      .def_readonly("b0", &ProblemSpec::b0)
      .def_readonly("sigma", &ProblemSpec::sigma)
      .def("__repr__", [](const ProblemSpec& s) {
        std::ostringstream o;
        o << "<Spec " << s.name << " n=" << s.n << " m=" << s.m << " d=" << s.d << " T=" << s.T << ">";
        return o.str();
      });

  m.def("load_spec", &load_spec, py::arg("path"));
  m.def(
      "spec_from_json", [](const std::string& text) { return spec_from_json(Json::parse(text)); },
      py::arg("text"));
  m.def("demo", &demos::by_name, py::arg("name"));
  m.def("demo_names", &demos::names);

  m.def(
      "check",
      [](const ProblemSpec& spec, std::uint64_t seed) {
        HypothesisOptions o;
        o.seed = seed;
        const HypothesisReport r = check_hypotheses(spec, o);
        py::dict d;
        d["all_hold"] = r.all_hold();
        d["hamiltonian"] = r.hamiltonian_method;
        d["lipschitz_selection"] = r.lipschitz_selection;
        d["warnings"] = r.warnings;
        return d;
      },
      py::arg("spec"), py::arg("seed") = 0);

  py::class_<ReducedValueField, std::shared_ptr<ReducedValueField>>(m, "Field")
      .def_readonly("n", &ReducedValueField::n)
      .def_readonly("m", &ReducedValueField::m)
      .def_readonly("T", &ReducedValueField::T)
      .def_readonly("lo", &ReducedValueField::lo)
      .def_readonly("hi", &ReducedValueField::hi)
      .def_readonly("nodes_per_axis", &ReducedValueField::nodes_per_axis)
      .def_readonly("times", &ReducedValueField::times)
      .def("f", &ReducedValueField::value, py::arg("t"), py::arg("y"), "forward-time value f(t, y)")
      .def("fbar", &ReducedValueField::bgrad, py::arg("t"), py::arg("y"), "sqrt(t) grad^B w at reduced y")
      .def("save", [](const ReducedValueField& f, const std::string& stem) { write_field(f, stem); },
           py::arg("stem"));
  m.def(
      "load_field", [](const std::string& stem) { return std::make_shared<ReducedValueField>(read_field(stem)); },
      py::arg("stem"));

  m.def(
      "solve",
      [](const ProblemSpec& spec, int nodes, int steps, int quad_order, int theta_order) {
        GridConfig g;
        g.nodes = nodes;
        g.time_steps = steps;
        g.quad_order = quad_order;
        g.theta_order = theta_order;
        SolveResult r;
        {
          py::gil_scoped_release nogil;
          r = picard_solve(spec, g);
        }
        return py::make_tuple(std::make_shared<ReducedValueField>(std::move(r.field)), report_dict(r.report));
      },
      py::arg("spec"), py::arg("nodes") = 0, py::arg("steps") = 40, py::arg("quad_order") = 0,
      py::arg("theta_order") = 0,
      "Picard iteration for the reduced HJB equation; returns (field, report). 0 picks the default.");

  m.def(
      "value",
      [](const ProblemSpec& spec, const ReducedValueField& field, double t, std::optional<VectorXd> y,
         const std::string& history) { return evaluate_v(spec, field, t, state_for(spec, y, history)); },
      py::arg("spec"), py::arg("field"), py::arg("t"), py::arg("y") = py::none(), py::arg("history") = "");
  m.def(
      "grad_B",
      [](const ProblemSpec& spec, const ReducedValueField& field, double t, std::optional<VectorXd> y,
         const std::string& history) { return grad_B_v(spec, field, t, state_for(spec, y, history)); },
      py::arg("spec"), py::arg("field"), py::arg("t"), py::arg("y") = py::none(), py::arg("history") = "");

  m.def(
      "simulate",
      [](const ProblemSpec& spec, const py::object& policy, std::shared_ptr<ReducedValueField> field, double dt,
         int paths, std::uint64_t seed) {
        const Policy p = make_policy(spec, field.get(), policy, seed);
        const SimOptions o = sim_options(dt, paths, seed);
        TrajectoryBatch b;
        {
          py::gil_scoped_release nogil;
          b = integrate(spec, p, o);
        }
        py::dict d;
        d["policy"] = b.policy;
        d["dt"] = b.dt;
        d["cost"] = estimate(estimate_cost(b));
        d["costs"] = VectorXd(b.cost());
        d["projections"] = b.projections;
        d["notes"] = b.notes;
        return d;
      },
      py::arg("spec"), py::arg("policy") = "feedback", py::arg("field") = nullptr, py::arg("dt") = 1e-3,
      py::arg("paths") = 1000, py::arg("seed") = 0);

  m.def(
      "identity",
      [](const ProblemSpec& spec, const ReducedValueField& field, const py::object& policy, double dt, int paths,
         std::uint64_t seed) {
        const Policy p = make_policy(spec, &field, policy, seed);
        IdentityResult r;
        {
          py::gil_scoped_release nogil;
          r = fundamental_identity_residual(spec, field, p, sim_options(dt, paths, seed));
        }
        py::dict d;
        d["v"] = r.v;
        d["J"] = estimate(r.J);
        d["integral"] = estimate(r.integral);
        d["residual"] = estimate(r.residual);
        d["gap"] = estimate(r.gap);
        return d;
      },
      py::arg("spec"), py::arg("field"), py::arg("policy") = "feedback", py::arg("dt") = 1e-3,
      py::arg("paths") = 1000, py::arg("seed") = 0,
      "J - v against the integral of H_min - H_CV along the paths.");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "delayctl");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
        py::print(out.str(), py::arg("end") = "");
        if (!err.str().empty()) {
          py::print(err.str(), py::arg("end") = "", py::arg("file") = py::module_::import("sys").attr("stderr"));
        }
        return code;
      },
      py::arg("args"), "Same subcommands as the delayctl executable; returns the exit code.");
}
