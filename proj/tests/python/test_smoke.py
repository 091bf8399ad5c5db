import json
import math

import pytest

import reptransfer as rt


def test_comblock_oracles():
    env = rt.build_comblock(4, 10, "decodable", seed=3)
    assert env.horizon == 4
    assert env.num_actions == 10
    assert rt.dp_optimal_value(env) == pytest.approx(1.0)
    uniform = rt.dp_uniform_policy_value(env)
    assert 0.0 < uniform < 1.0
    # Serialization round-trips.
    again = rt.BlockMdp.from_json(env.to_json())
    assert again.to_json() == env.to_json()


def test_episode_and_counters():
    env = rt.build_comblock(3, 4, "decodable", seed=5)
    before = env.episodes()
    traj = rt.sample_episode(env, seed=1)
    assert env.episodes() == before + 1
    assert len(traj.actions()) == 3
    assert len(traj.observation_codes()) == 4
    assert traj.returns() >= 0.0
    env.revoke_access()
    with pytest.raises(rt._core.AccessRevoked):
        rt.sample_episode(env, seed=2)
    env.restore_access()


def test_formulas():
    assert rt.mle_bound_zeta(3, math.e, math.e, 1, 1.0 / math.e) == pytest.approx(1.0)
    assert rt.beta_deployment(9, 4, 1000, 0.05, 0.0) == pytest.approx(12.0)
    assert rt.beta_eps(4, 3, 500, 0.05) > 0


def test_lower_bound_gaps():
    correct, permuted = rt.verify_lower_bound_gaps()
    assert correct == pytest.approx(0.0, abs=1e-9)
    assert permuted == pytest.approx(0.5, abs=1e-9)


def test_span_identity():
    err = rt.span_identity_error_shared_suite(3, 4, 4, seed=11)
    assert err < 1e-9


def test_transfer_demo_solves():
    report = rt.transfer_demo("shared_emission", 2, 3, seed=7, generative=True,
                              n_rf=800, n_lsvi=600, n=300, t_deploy=3000)
    assert report["solved"]
    assert report["episodes_to_solve"] >= 0
    assert report["accounting"]["source_generative"][0] == (2 * 2 - 1) * 3 * 300


def test_run_experiment_via_config(tmp_path):
    config = {
        "name": "pysmoke",
        "suite": {"family": "shared_emission", "num_sources": 2, "horizon": 3,
                  "num_actions": 4},
        "algorithm": "oracle",
        "budgets": {"n_rf": 300, "n_lsvi": 200, "n": 100, "t_deploy": 1200},
        "beta_override": 1.0,
        "seeds": [1],
        "out_dir": str(tmp_path),
        "jobs": 1,
    }
    canonical = rt.validate_config(config)
    assert canonical["algorithm"] == "oracle"
    manifest = rt.run_experiment(config)
    assert manifest["outcomes"][0]["ok"]
    assert manifest["outcomes"][0]["episodes_to_solve"] >= 0
    report_path = tmp_path / "pysmoke" / "1" / "report.json"
    report = json.loads(report_path.read_text())
    assert report["solved"]

    with pytest.raises(rt._core.ConfigError):
        rt.validate_config({"name": "bad", "bogus_key": 1})
