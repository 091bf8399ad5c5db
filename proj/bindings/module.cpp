#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "reptransfer/harness.hpp"

namespace py = pybind11;
using namespace reptransfer;

namespace {

// JSON-string bridge: structured results cross as canonical JSON, parsed to
// dicts on the python side by the package wrapper.
std::string env_to_json(const BlockMdp& env) { return env.to_json().dump(); }

BlockMdp env_from_json(const std::string& text) {
    return BlockMdp::from_json(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Representation transfer across rich-observation MDPs";

    py::register_exception<UnknownObservation>(m, "UnknownObservation");
    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<AccessRevoked>(m, "AccessRevoked");

    py::class_<Rng>(m, "Rng")
        .def(py::init<std::uint64_t>())
        .def_static("stream", [](std::uint64_t master, const std::string& name) {
            return Rng::stream(master, name);
        })
        .def("uniform", &Rng::uniform)
        .def("uniform_int", &Rng::uniform_int);

    py::class_<Observation>(m, "Observation")
        .def(py::init<>())
        .def_readwrite("code", &Observation::code);

    py::class_<BlockMdp>(m, "BlockMdp")
        .def_property_readonly("horizon", [](const BlockMdp& e) { return e.horizon; })
        .def_property_readonly("num_actions", [](const BlockMdp& e) { return e.num_actions; })
        .def("codes_at", &BlockMdp::codes_at)
        .def("latents_at", &BlockMdp::latents_at)
        .def("episodes", &BlockMdp::episodes)
        .def("generative_queries", &BlockMdp::generative_queries)
        .def("revoke_access", &BlockMdp::revoke_access)
        .def("restore_access", &BlockMdp::restore_access)
        .def("known_reward", &BlockMdp::known_reward)
        .def("to_json", &env_to_json)
        .def_static("from_json", &env_from_json);

    py::class_<Policy>(m, "Policy").def_static("uniform", &Policy::uniform);

    py::class_<Trajectory>(m, "Trajectory")
        .def("returns",
             [](const Trajectory& t) {
                 double r = t.final_reward;
                 for (const auto& s : t.steps) r += s.reward;
                 return r;
             })
        .def("actions",
             [](const Trajectory& t) {
                 std::vector<int> a;
                 for (const auto& s : t.steps) a.push_back(s.action);
                 return a;
             })
        .def("observation_codes", [](const Trajectory& t) {
            std::vector<int> codes;
            for (const auto& s : t.steps) codes.push_back(s.obs.code);
            codes.push_back(t.final_obs.code);
            return codes;
        });

    m.def("build_comblock",
          [](int horizon, int num_actions, const std::string& mode, std::uint64_t seed) {
              Rng rng = Rng::stream(seed, "env-stream");
              return build_comblock(horizon, num_actions,
                                    mode == "noisy" ? EmissionMode::Noisy
                                                    : EmissionMode::Decodable,
                                    rng);
          },
          py::arg("horizon"), py::arg("num_actions"), py::arg("mode") = "decodable",
          py::arg("seed") = 0);

    m.def("sample_episode",
          [](const BlockMdp& env, std::uint64_t seed) {
              Rng rng = Rng::stream(seed, "policy-stream");
              return sample_episode(env, Policy::uniform(), rng);
          },
          py::arg("env"), py::arg("seed") = 0);

    m.def("dp_optimal_value",
          [](const BlockMdp& env) { return dp_optimal_value(env).first; });

    m.def("dp_uniform_policy_value",
          [](const BlockMdp& env) { return dp_policy_value(env, Policy::uniform()); });

    m.def("coverage_lambda_min_uniform", [](const BlockMdp& env, int h) {
        return coverage_lambda_min(env, Policy::uniform(), h);
    });

    m.def("mle_bound_zeta", &mle_bound_zeta, py::arg("n"), py::arg("size_phi"),
          py::arg("size_upsilon"), py::arg("num_tasks"), py::arg("delta"));
    m.def("beta_deployment", &beta_deployment, py::arg("d"), py::arg("horizon"),
          py::arg("deploy_episodes"), py::arg("delta"), py::arg("alpha_bar"));
    m.def("beta_eps", &beta_eps, py::arg("d"), py::arg("horizon"), py::arg("episodes"),
          py::arg("delta"));

    m.def("verify_lower_bound_gaps", []() {
        LowerBoundFamily family = build_lower_bound_family();
        double correct = verify_lower_bound(family, FeatureMap::from_decoder(family.psi1, 2));
        double permuted = verify_lower_bound(family, FeatureMap::from_decoder(family.psi2, 2));
        return std::make_pair(correct, permuted);
    });

    m.def("span_identity_error_shared_suite",
          [](int num_sources, int horizon, int num_actions, std::uint64_t seed) {
              Rng rng = Rng::stream(seed, "env-stream");
              TransferSuite suite =
                  build_shared_emission_suite(num_sources, horizon, rng, num_actions);
              return span_identity_error(suite);
          },
          py::arg("num_sources"), py::arg("horizon"), py::arg("num_actions"),
          py::arg("seed") = 0);

    // Full experiment drive through the same config schema as the CLI.
    m.def("run_experiment_json", [](const std::string& config_json) {
        ExperimentConfig config = ExperimentConfig::from_json(nlohmann::json::parse(config_json));
        RunManifest manifest = run_experiment(config);
        return manifest.to_json().dump();
    });

    m.def("validate_config_json", [](const std::string& config_json) {
        ExperimentConfig config = ExperimentConfig::from_json(nlohmann::json::parse(config_json));
        return config.to_json().dump();
    });

    m.def("transfer_demo",
          [](const std::string& family, int num_sources, int horizon, std::uint64_t seed,
             bool generative, int n_rf, int n_lsvi, int n, long t_deploy) {
              Rng env_rng = Rng::stream(seed, "env-stream");
              SuiteSpec spec;
              spec.family = family;
              spec.num_sources = num_sources;
              spec.horizon = horizon;
              spec.num_actions = family == "partitioned" ? 10 : 4;
              TransferSuite suite = build_suite(spec, env_rng);
              HypothesisClass cls = default_class_for(spec, suite);
              DeployOptions deploy;
              deploy.t_deploy = t_deploy;
              deploy.beta_override = 1.0;
              Rng rng = Rng::stream(seed, "learner-stream");
              EpsOptions eps;
              eps.beta_mult = 0.02;
              TransferReport report;
              if (generative) {
                  std::vector<ExploratoryPolicy> policies;
                  for (const auto& source : suite.sources)
                      policies.push_back(
                          exploratory_policy_search(source, cls, n_lsvi, n_rf, 0.05, rng, eps));
                  report = rep_transfer_generative(suite, policies, cls, n, 0.05, deploy, rng);
              } else {
                  OnlineBudgets budgets;
                  budgets.n_rf = n_rf;
                  budgets.n_lsvi = n_lsvi;
                  budgets.n_per_pair = n;
                  report = rep_transfer_online(suite, cls, budgets, 0.05, deploy, rng, eps);
              }
              return report.to_json().dump();
          },
          py::arg("family"), py::arg("num_sources"), py::arg("horizon"), py::arg("seed"),
          py::arg("generative") = true, py::arg("n_rf") = 1500, py::arg("n_lsvi") = 1000,
          py::arg("n") = 500, py::arg("t_deploy") = 4000);

    m.attr("__version__") = kCodeVersion;
}
