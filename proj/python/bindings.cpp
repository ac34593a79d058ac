#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "commands.hpp"
#include "pickorder/errors.hpp"
#include "pickorder/labels.hpp"
#include "pickorder/metrics.hpp"
#include "pickorder/sim.hpp"
#include "pickorder/training.hpp"

namespace py = pybind11;
using namespace pickorder;

namespace {

py::dict flags_dict(const PriorFlags& f) {
  py::dict d;
  d["independent"] = f.independent;
  d["topmost"] = f.topmost;
  d["min_neighbor_distance"] = f.min_neighbor_distance;
  d["footprint_area"] = f.footprint_area;
  d["neighbors_within_tau"] = f.neighbors_within_tau;
  return d;
}

py::dict report_dict(const EpisodeReport& r) {
  py::dict d;
  d["initial_count"] = r.initial_count;
  d["successes"] = r.successes;
  d["attempts"] = r.attempts;
  d["skipped"] = r.skipped;
  d["residual_count"] = r.residual_count;
  d["total_disturbance"] = r.total_disturbance;
  d["sr"] = r.sr();
  d["mean_plan_distance"] = r.mean_plan_distance();
  d["log"] = episode_log_text(r);
  return d;
}

PolicyConfig policy(const std::string& kind, int replan_interval, double sigma) {
  PolicyConfig p{policy_kind_from_string(kind), replan_interval, sigma, 3};
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Manipulation-ordering engine: spatial priors, learned scoring and a pick simulator.";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def(
      "generate_scene",
      [](std::uint64_t seed, const std::string& difficulty) {
        return scene_to_json(generate_scene(seed, difficulty_from_string(difficulty)));
      },
      py::arg("seed"), py::arg("difficulty") = "moderate", "Generated, settled scene as JSON text.");

  m.def(
      "compute_flags",
      [](const std::string& scene, double tau) {
        py::dict out;
        for (const auto& [id, f] : compute_flags(scene_from_json(scene), tau)) out[py::int_(id)] = flags_dict(f);
        return out;
      },
      py::arg("scene"), py::arg("tau") = kDefaultTau, "Independence and topmost flags keyed by object id.");

  m.def(
      "sph_order",
      [](const std::string& scene, double tau) {
        SphConfig cfg;
        cfg.tau = tau;
        return sph_order(scene_from_json(scene), cfg);
      },
      py::arg("scene"), py::arg("tau") = kDefaultTau, "Rule-based pick order (object ids, first = picked first).");

  m.def(
      "label_scene",
      [](const std::string& scene, int k, double jitter, double noise_ratio, std::uint64_t seed) {
        return label_scene(scene_from_json(scene), k, jitter, noise_ratio, seed);
      },
      py::arg("scene"), py::arg("k") = 5, py::arg("jitter") = 0.0, py::arg("noise_ratio") = 0.0,
      py::arg("seed") = 0, "Aggregated oracle ranking, optionally perturbed.");

  m.def("perturb_pairs", &perturb_pairs, py::arg("ranking"), py::arg("ratio"), py::arg("seed"));
  m.def(
      "plackett_luce_aggregate", [](const std::vector<Ranking>& r) { return plackett_luce_aggregate(r); },
      py::arg("rankings"));
  m.def("kendall_tau", &kendall_tau, py::arg("a"), py::arg("b"));
  m.def("levenshtein", &levenshtein, py::arg("a"), py::arg("b"));

  m.def(
      "solve_assignment",
      [](const MatrixXd& cost) {
        const Assignment a = solve_assignment(cost);
        return py::make_tuple(a.pred_to_gt, a.total_cost);
      },
      py::arg("cost"), "Minimum-cost assignment: (row -> column or -1, total cost).");

  m.def("grad_check", &grad_check, py::arg("seed"), py::arg("n"), py::arg("d"),
        "Max relative error between analytic and finite-difference scorer gradients.");

  m.def(
      "run_episode",
      [](const std::string& scene, const std::string& kind, int replan_interval, double sigma,
         std::uint64_t seed, const std::string& checkpoint) {
        const PolicyConfig p = policy(kind, replan_interval, sigma);
        std::optional<Checkpoint> ckpt;
        if (!checkpoint.empty()) ckpt = load_checkpoint(checkpoint);
        return report_dict(
            run_episode(scene_from_json(scene), p, make_planner(p.kind, ckpt ? &*ckpt : nullptr, seed), seed));
      },
      py::arg("scene"), py::arg("policy") = "sph", py::arg("replan_interval") = 1, py::arg("sigma") = 0.0,
      py::arg("seed") = 0, py::arg("checkpoint") = "", "Closed-loop pick episode summary.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in process: (exit code, stdout, stderr).");

  m.attr("DEFAULT_TAU") = kDefaultTau;
}
