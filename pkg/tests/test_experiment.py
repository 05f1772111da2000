import json
import math
from xml.etree import ElementTree as ET

import numpy as np
import pytest

from bipmatch.errors import ConfigError
from bipmatch.experiment import (CSV_FIELDS, ExperimentConfig, ResultRow, emit_outputs, make_instance,
                                 read_results_csv, run_experiment, run_replicate, sample_data, seed_set, summarize)
from bipmatch.graphs import permute_adjacency


def small_cfg(**kw):
    base = dict(scenario="chain", n=6, m_grid=[300], family="gaussian", replicates=2,
                methods=["b-invcov", "c-omp"], lambda_grid=[0.05, 0.2], max_outer=5, master_seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def synthetic_rows(values, method="b-invcov", m=100):
    return [ResultRow("chain", method, 5, m, k, 0.0, vertex_error=v, edge_error=v / 2, fpr=0.0, fnr=v)
            for k, v in enumerate(values)]


# --- configuration -------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    {"scenario": "grid"},
    {"replicates": 0},
    {"m_grid": [100, 100]},
    {"m_grid": [500, 100]},
    {"m_grid": [1]},
    {"seed_fractions": [1.5]},
    {"methods": ["nope"]},
    {"methods": []},
    {"family": "poisson"},
    {"beta_rule": "odd"},
    {"n": 1},
])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        small_cfg(**kw)


def test_config_scenario_defaults():
    cfg = ExperimentConfig(scenario="thm2-check")
    assert (cfg.n, cfg.theta, cfg.family) == (5, 0.6, "ising")
    with pytest.raises(ConfigError):
        ExperimentConfig(scenario="fig2-beta", family="gaussian")
    assert ExperimentConfig(scenario="fig2-theta", n=50).n == 6
    assert ExperimentConfig().theta == 0.4


def test_config_from_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"scenario": "er", "n": 7, "p": 0.3}))
    cfg = ExperimentConfig.from_json(path)
    assert (cfg.scenario, cfg.n, cfg.p) == ("er", 7, 0.3)
    path.write_text(json.dumps({"scenario": "er", "colour": "blue"}))
    with pytest.raises(ConfigError, match="colour"):
        ExperimentConfig.from_json(path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(path)
    path.write_text("{")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(path)


# --- instances -----------------------------------------------------------------

def test_ising_instance_centering():
    cfg = ExperimentConfig(scenario="er", n=10, p=0.3, family="ising", master_seed=4)
    inst = make_instance(cfg, 0)
    w = permute_adjacency(inst.graph.adj, inst.p_star.map)
    np.testing.assert_allclose(inst.theta, 0.4 * w)
    np.testing.assert_allclose(inst.beta, -0.5 * inst.theta.sum(axis=1))


def test_gaussian_instance_min_eigenvalue():
    inst = make_instance(small_cfg(), 1)
    assert np.linalg.eigvalsh(inst.theta)[0] == pytest.approx(0.5)


def test_asymmetric_er_graph():
    from bipmatch.experiment import has_trivial_automorphism_group
    cfg = ExperimentConfig(scenario="er", n=8, p=0.3, asymmetric=True, master_seed=5)
    for r in range(5):
        assert has_trivial_automorphism_group(make_instance(cfg, r).graph)


def test_replicates_reproducible_in_isolation():
    cfg = small_cfg(replicates=3)
    rows = run_experiment(cfg)
    assert run_replicate(cfg, 2) == [r for r in rows if r.replicate == 2]


def test_seed_sets_nested():
    cfg = small_cfg(n=12)
    inst = make_instance(cfg, 0)
    small, large = seed_set(cfg, inst, 0, 0.25), seed_set(cfg, inst, 0, 0.5)
    assert set(small.pairs) <= set(large.pairs)
    assert len(seed_set(cfg, inst, 0, 1.0)) == 12


# --- runs ----------------------------------------------------------------------

def test_single_row_shape_contract():
    cfg = ExperimentConfig(scenario="chain", n=6, family="gaussian", m_grid=[2000], replicates=1,
                           methods=["b-invcov"])
    rows = run_experiment(cfg)
    assert len(rows) == 1
    assert rows[0].status == "ok" and 0 <= rows[0].vertex_error <= 1


def test_one_row_per_method_replicate_and_grid_point():
    cfg = small_cfg(m_grid=[100, 300], seed_fractions=[0.0, 0.5])
    rows = run_experiment(cfg)
    assert len(rows) == 2 * 2 * 2 * 2
    keys = {(r.method, r.replicate, r.m, r.seed_fraction) for r in rows}
    assert len(keys) == len(rows)


def test_full_seeds_give_zero_error():
    cfg = small_cfg(seed_fractions=[1.0], methods=["b-invcov", "c-omp", "c-cov", "c-corr", "c-glasso", "c-mb"])
    for row in run_experiment(cfg):
        assert row.status == "ok" and row.vertex_error == 0 and row.edge_error == 0


def test_pseudo_method_runs_on_ising():
    cfg = small_cfg(family="ising", methods=["b-pseudo", "b-invcov"], replicates=1, m_grid=[200])
    rows = run_experiment(cfg)
    assert [r.status for r in rows] == ["ok", "ok"]


def test_method_failure_is_tagged():
    # brute force does not accept seeds; the row is kept with an error tag
    cfg = ExperimentConfig(scenario="thm2-check", m_grid=[200], seed_fractions=[0.4],
                           methods=["brute-mle", "c-omp"])
    rows = run_experiment(cfg)
    assert rows[0].status.startswith("error:") and rows[0].vertex_error is None
    assert rows[1].status == "ok"


def test_thm2_rows_carry_agreement():
    cfg = ExperimentConfig(scenario="thm2-check", m_grid=[500], replicates=2, methods=["brute-mle", "brute-omp"])
    rows = run_experiment(cfg)
    assert all(r.agreement is not None for r in rows)
    assert all(r.theta_mle is not None for r in rows if r.method == "brute-mle")


def test_parallel_workers_same_rows():
    cfg = small_cfg(replicates=2)
    assert run_experiment(cfg) == run_experiment(small_cfg(replicates=2, workers=2))


# --- summaries -----------------------------------------------------------------

def test_summarize_single_row():
    rec = summarize(synthetic_rows([0.3]))[0]
    assert rec["mean"] == 0.3 and rec["se"] is None and rec["count"] == 1


def test_summarize_identical_rows():
    rec = summarize(synthetic_rows([0.4, 0.4]))[0]
    assert rec["se"] == 0.0


def test_summarize_matches_direct_formula():
    values = list(np.random.default_rng(6).random(30))
    rec = [r for r in summarize(synthetic_rows(values)) if r["metric"] == "vertex_error"][0]
    mean = sum(values) / 30
    se = math.sqrt(sum((v - mean) ** 2 for v in values) / 29) / math.sqrt(30)
    assert abs(rec["mean"] - mean) <= 1e-12
    assert abs(rec["se"] - se) <= 1e-12


def test_summarize_skips_failures_and_missing():
    rows = synthetic_rows([0.2, 0.6])
    rows[1].status = "error:MatchError"
    rows[0].fpr = None
    metrics = {r["metric"]: r for r in summarize(rows)}
    assert "fpr" not in metrics
    assert metrics["vertex_error"]["count"] == 1


# --- outputs -------------------------------------------------------------------

def test_emit_empty_rows(tmp_path):
    emit_outputs([], [], tmp_path)
    assert (tmp_path / "results.csv").read_text().strip().split(",") == CSV_FIELDS
    assert not list(tmp_path.glob("*.svg"))


def test_csv_round_trip(tmp_path):
    rows = run_experiment(small_cfg(m_grid=[100, 300]))
    rows[0].fpr = None
    rows[1].agreement = True
    emit_outputs(rows, summarize(rows), tmp_path)
    assert read_results_csv(tmp_path / "results.csv") == rows


def test_svg_has_one_polyline_per_method(tmp_path):
    rows = synthetic_rows([0.1, 0.2], m=100) + synthetic_rows([0.05, 0.1], m=500)
    rows += synthetic_rows([0.5, 0.6], method="c-omp", m=100) + synthetic_rows([0.4, 0.4], method="c-omp", m=500)
    written = emit_outputs(rows, summarize(rows), tmp_path, small_cfg())
    assert {p.name for p in written} >= {"results.csv", "summary.csv", "config.json", "vertex_error.svg"}
    for metric in ("vertex_error", "edge_error", "fpr", "fnr"):
        root = ET.parse(tmp_path / f"{metric}.svg").getroot()
        lines = root.findall("{http://www.w3.org/2000/svg}polyline")
        assert sorted(p.get("data-method") for p in lines) == ["b-invcov", "c-omp"]
    assert json.loads((tmp_path / "config.json").read_text())["n"] == 6


def test_results_csv_byte_identical(tmp_path):
    cfg = small_cfg(family="ising", methods=["b-pseudo", "c-omp"], m_grid=[150, 300])
    for name in ("a", "b"):
        rows = run_experiment(cfg)
        emit_outputs(rows, summarize(rows), tmp_path / name, cfg)
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_emit_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        emit_outputs([], [], blocker / "sub")
