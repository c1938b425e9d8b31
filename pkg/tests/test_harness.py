import json
import math

import numpy as np
import pytest

from sucag import cli
from sucag.harness import (ConfigError, ExperimentConfig, MethodTrace, NumericalError, aggregate_trials,
                           build_problem, fit_linear_rate, first_hit, read_trace_csv, reference_solution,
                           resolve_gamma, run_experiment, run_trial, summary_csv, trace_csv, write_outputs)
from sucag.objectives import Dataset, LogisticSuite, generate_synthetic, random_quadratic


def small_config(**over):
    data = {
        "objective": {"kind": "logistic", "d": 4, "N": 8, "B": 2, "seed": 1},
        "topology": {"kind": "erdos_renyi", "n": 8, "p": 0.5, "seed": 2},
        "methods": [
            {"method": "SUCAG", "gamma": "0.5/L"},
            {"method": "SAGA", "gamma": "0.1/L"},
            {"method": "SG", "gamma": "0.1/L"},
            {"method": "CIAG", "gamma": "0.5/L", "schedule": "cyclic", "label": "CIAG-cyclic"},
        ],
        "iterations": 60,
        "trials": 2,
        "base_seed": 5,
    }
    data.update(over)
    return data


# --- reference solution ----------------------------------------------------

def test_reference_quadratic_closed_form():
    s = random_quadratic(8, 6, 50.0, seed=2)
    theta, F = reference_solution(s)
    np.testing.assert_allclose(theta, np.linalg.solve(s.A_bar, s.c_bar), atol=1e-10)
    assert F == pytest.approx(s.full_eval(theta)[0])


@pytest.mark.parametrize("x,y", [(1.7, 1.0), (-0.4, 1.0), (3.0, -1.0)])
def test_reference_scalar_bisection(x, y):
    suite = LogisticSuite(Dataset(np.array([[[x]]]), np.array([[y]])))
    theta, _ = reference_solution(suite)

    def stationarity(t):
        return -y * x / (1.0 + math.exp(y * x * t)) + t

    lo, hi = -10.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if stationarity(mid) > 0:
            hi = mid
        else:
            lo = mid
    assert theta[0] == pytest.approx(0.5 * (lo + hi), abs=1e-10)


def test_reference_certificate_strong_regulariser():
    ds, _ = generate_synthetic(5, 4, 40, seed=3)
    suite = LogisticSuite(ds)
    theta, _ = reference_solution(suite, tol=1e-12)
    assert np.linalg.norm(suite.full_eval(theta)[1]) <= 1e-12


def test_reference_iteration_cap():
    ds, _ = generate_synthetic(5, 10, 2, seed=3)
    with pytest.raises(NumericalError):
        reference_solution(LogisticSuite(ds), tol=1e-12, max_iter=1)


# --- configuration ---------------------------------------------------------

def test_config_roundtrip_and_defaults():
    cfg = ExperimentConfig.from_dict(small_config())
    assert cfg.reference_tol == 1e-12 and cfg.drift_interval is None and cfg.estimator_error_every == 0
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(colour="red"),
    lambda d: d["objective"].update(lr=0.1),
    lambda d: d["methods"][0].update(momentum=0.9),
    lambda d: d["topology"].update(n=9),
    lambda d: d.update(trials=0),
    lambda d: d.update(iterations=-1),
    lambda d: d.update(methods=[]),
    lambda d: d["methods"][0].update(gamma="fast"),
    lambda d: d["methods"][0].update(gamma=-1.0),
    lambda d: d["methods"][0].update(method="ADAM"),
    lambda d: d["methods"][1].update(method="SUCAG", gamma="0.5/L"),
    lambda d: d.update(methods="SUCAG"),
    lambda d: d["objective"].update(kind="quadratic"),
])
def test_config_rejects(mutate):
    data = small_config()
    mutate(data)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_config_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(bad)
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")


def test_resolve_gamma_forms():
    cfg = ExperimentConfig.from_dict(small_config())
    problem = build_problem(cfg)
    L = problem.constants.L
    from sucag.harness import MethodSpec, stepsize_inputs
    from sucag.theory import theorem1_stepsize
    assert resolve_gamma(MethodSpec("SG", 0.3), cfg, problem) == 0.3
    assert resolve_gamma(MethodSpec("SG", "0.2/L", scale=10.0), cfg, problem) == pytest.approx(2.0 / L)
    auto = theorem1_stepsize(stepsize_inputs(cfg, problem))
    assert resolve_gamma(MethodSpec("SUCAG", "auto", scale=100.0), cfg, problem) == pytest.approx(100 * auto)
    assert stepsize_inputs(cfg, problem).m0 == 16.0


# --- trials ----------------------------------------------------------------

def test_zero_iterations():
    cfg = ExperimentConfig.from_dict(small_config(iterations=0, trials=1))
    problem = build_problem(cfg)
    traces = run_trial(cfg, 0, problem)
    R0 = float(problem.theta_star @ problem.theta_star)
    for tr in traces:
        recs = list(tr.records())
        assert len(recs) == 1 and recs[0].k == 0
        assert recs[0].gap == pytest.approx(R0)


def test_run_trial_deterministic():
    cfg = ExperimentConfig.from_dict(small_config())
    a = run_trial(cfg, 1)
    b = run_trial(cfg, 1)
    for x, y in zip(a, b):
        assert x.method == y.method
        np.testing.assert_array_equal(x.gap, y.gap)
        np.testing.assert_array_equal(x.agent, y.agent)


def test_paired_activation():
    cfg = ExperimentConfig.from_dict(small_config())
    traces = run_trial(cfg, 0)
    walk = [t for t in traces if t.method != "CIAG-cyclic"]
    for t in walk[1:]:
        np.testing.assert_array_equal(t.agent, walk[0].agent)
        np.testing.assert_array_equal(t.delay, walk[0].delay)
    cyclic = next(t for t in traces if t.method == "CIAG-cyclic")
    np.testing.assert_array_equal(cyclic.agent[:-1], np.arange(60) % 8)
    other = run_trial(cfg, 1)
    assert not np.array_equal(other[0].agent, walk[0].agent)
    # consecutive walk agents are neighbours
    problem = build_problem(cfg)
    for u, v in zip(walk[0].agent[:-2], walk[0].agent[1:-1]):
        assert v in problem.graph.adjacency[u]


def test_estimator_error_sampling():
    cfg = ExperimentConfig.from_dict(small_config(estimator_error_every=10, trials=1))
    traces = run_trial(cfg, 0)
    for tr in traces:
        sampled = np.flatnonzero(~np.isnan(tr.est_err))
        np.testing.assert_array_equal(sampled, np.arange(0, 60, 10))
    sucag = traces[0]
    # the SUCAG estimator is exact at k=0 only by accident, but errors are finite and non-negative
    assert np.all(sucag.est_err[~np.isnan(sucag.est_err)] >= 0)


def test_divergence_filled_with_inf():
    data = small_config(trials=1, iterations=3000)
    data["methods"] = [{"method": "SG", "gamma": 1e6}]
    cfg = ExperimentConfig.from_dict(data)
    tr = run_trial(cfg, 0)[0]
    assert np.isinf(tr.gap[-1])
    assert tr.gap.size == 3001


def test_star_schedule_in_range():
    data = small_config(trials=1)
    data["methods"] = [{"method": "SAGA", "gamma": "0.1/L", "schedule": "star_coordinator"}]
    tr = run_trial(ExperimentConfig.from_dict(data), 0)[0]
    assert tr.agent[:-1].min() >= 0 and tr.agent[:-1].max() <= 7


def test_workers_match_serial():
    cfg = ExperimentConfig.from_dict(small_config(trials=3))
    par = ExperimentConfig.from_dict(small_config(trials=3, workers=2))
    assert trace_csv(run_experiment(cfg)) == trace_csv(run_experiment(par))


# --- summaries -------------------------------------------------------------

def _trace(trial, method, gaps):
    gaps = np.asarray(gaps, dtype=float)
    n = gaps.size
    return MethodTrace(trial, method, gaps, np.full(n, -1), np.full(n, -1), np.full(n, np.nan))


def test_aggregate_examples():
    one = aggregate_trials([_trace(0, "A", [3.0, 2.0])])["A"]
    np.testing.assert_array_equal(one.gap_mean, [3.0, 2.0])
    np.testing.assert_array_equal(one.gap_std, [0.0, 0.0])
    two = aggregate_trials([_trace(0, "A", [1.0, 0.1]), _trace(1, "A", [2.0, 0.7])])["A"]
    np.testing.assert_array_equal(two.gap_mean, [(1.0 + 2.0) / 2, (0.1 + 0.7) / 2])
    np.testing.assert_array_equal(two.gap_min, [1.0, 0.1])
    np.testing.assert_array_equal(two.gap_max, [2.0, 0.7])
    np.testing.assert_allclose(two.gap_std, [0.5, 0.3])
    with pytest.raises(ValueError):
        aggregate_trials([_trace(0, "A", [1.0]), _trace(1, "A", [1.0, 2.0])])
    with pytest.raises(ValueError):
        aggregate_trials([])


def test_fit_linear_rate_examples():
    k = np.arange(200)
    assert fit_linear_rate(0.9 ** k) == pytest.approx(0.9, abs=1e-10)
    assert fit_linear_rate(np.full(50, 3.0)) == pytest.approx(1.0, abs=1e-12)
    # the floor and the burn-in are excluded
    g = np.r_[np.full(10, 100.0), 0.5 ** np.arange(200)]
    assert fit_linear_rate(g, burn_in=10) == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(ValueError):
        fit_linear_rate(np.full(5, 1e-30))
    with pytest.raises(ValueError):
        fit_linear_rate([1.0, 0.5], burn_in=5)


def test_fit_rate_quadratic_sucag():
    data = {
        "objective": {"kind": "quadratic", "d": 5, "N": 4, "B": 1, "seed": 0, "kappa": 5.0},
        "topology": {"kind": "complete", "n": 4, "seed": 0},
        "methods": [{"method": "SUCAG", "gamma": "auto"}],
        "iterations": 200,
    }
    cfg = ExperimentConfig.from_dict(data)
    problem = build_problem(cfg)
    c = problem.constants
    tr = run_trial(cfg, 0, problem)[0]
    theory = 1 - 4 * c.mu * c.L / (c.mu + c.L) ** 2
    rate = fit_linear_rate(tr.gap, burn_in=2 * 4)
    assert theory - 0.05 <= rate < 1


def test_first_hit():
    assert first_hit([5.0, 1.0, 1e-7, 1e-8], 1e-6) == 2
    assert first_hit([5.0, 1.0], 1e-6) is None


# --- output ----------------------------------------------------------------

def test_csv_outputs(tmp_path):
    cfg = ExperimentConfig.from_dict(small_config(iterations=5, trials=2))
    problem = build_problem(cfg)
    traces = run_experiment(cfg, problem)
    tpath, spath = write_outputs(traces, problem, cfg, tmp_path / "out")
    tlines = tpath.read_text().splitlines()
    assert tlines[0].startswith("# reference_grad_norm=")
    data = [ln for ln in tlines if not ln.startswith("#")]
    assert data[0] == "trial,k,method,gap,agent,delay,est_err"
    assert len(data) == 1 + 2 * 4 * 6
    first = data[1].split(",")
    assert first[:3] == ["0", "0", "SUCAG"] and float(first[3]) == pytest.approx(problem.R0, rel=1e-15)
    last_sucag = data[6].split(",")
    assert last_sucag[1] == "5" and last_sucag[4] == "" and last_sucag[5] == ""
    slines = [ln for ln in spath.read_text().splitlines() if not ln.startswith("#")]
    assert slines[0] == "method,k,gap_mean,gap_std,gap_min,gap_max"
    assert len(slines) == 1 + 4 * 6
    back = read_trace_csv(tpath)
    for tr in traces:
        np.testing.assert_array_equal(back[(tr.method, tr.trial)], tr.gap)


def test_trace_csv_precision():
    text = trace_csv([_trace(0, "A", [1 / 3])])
    assert "0.33333333333333331" in text
    assert summary_csv(aggregate_trials([_trace(0, "A", [1 / 3])])).endswith("A,0,0.33333333333333331,0,"
                                                                           "0.33333333333333331,"
                                                                           "0.33333333333333331\n")


# --- command line ----------------------------------------------------------

@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(small_config(iterations=20, trials=1)))
    return path


def test_cli_run_and_rate(config_file, tmp_path, capsys):
    out = tmp_path / "res"
    assert cli.main(["run", str(config_file), "--output", str(out)]) == 0
    assert (out / "trace.csv").exists() and (out / "summary.csv").exists()
    capsys.readouterr()
    assert cli.main(["rate", str(out / "trace.csv"), "--burn-in", "2"]) == 0
    text = capsys.readouterr().out
    assert "SUCAG: contraction factor" in text


def test_cli_run_needs_output(config_file):
    assert cli.main(["run", str(config_file)]) == 1


def test_cli_reference_and_stepsize(config_file, capsys):
    assert cli.main(["reference", str(config_file)]) == 0
    ref = json.loads(capsys.readouterr().out)
    assert ref["grad_norm"] <= 1e-12 and len(ref["theta_star"]) == 4
    assert cli.main(["stepsize", str(config_file)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert 0 < rep["gamma_theorem"] <= rep["gamma_max"]
    assert set(rep["methods"]) == {"SUCAG", "SAGA", "SG", "CIAG-cyclic"}


def test_cli_graph_gen(capsys):
    assert cli.main(["graph-gen", "ring", "4", "0"]) == 0
    assert capsys.readouterr().out.split() == ["0", "1", "0", "3", "1", "2", "2", "3"]
    assert cli.main(["graph-gen", "erdos_renyi", "6", "0.5", "3"]) == 0
    assert cli.main(["graph-gen", "erdos_renyi", "6", "3"]) == 1
    assert cli.main(["graph-gen", "ring", "4", "1", "2", "3"]) == 1


def test_cli_config_error_exit(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(small_config(extra=1)))
    assert cli.main(["run", str(path), "--output", str(tmp_path)]) == 1


def test_cli_numerical_exit(tmp_path):
    data = small_config(reference_tol=0.0)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    assert cli.main(["reference", str(path)]) == 2
