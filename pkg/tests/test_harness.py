"""Experiment runner tests: config parsing, dispatch, verdicts, emitters."""

import json

import numpy as np
import pytest

from frachardy import harness, potential as pot, specfun

P1 = specfun.params(1, 0.25)

BASE = {"params": {"N": 1, "s": 0.25}, "grid": {"n": 256, "L": 16.0}}


def write_toml(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_minimal_config(tmp_path):
    path = write_toml(tmp_path, """
experiment = "mu"
seed = 3

[params]
N = 1
s = 0.25

[grid]
n = 64
L = 8.0

[potential]
lambda_inf = 0.0
""")
    cfg = harness.load_config(path)
    assert cfg.experiment == "mu"
    assert cfg.seed == 3
    assert cfg.grid.n == 64
    assert cfg.potential.lambda_inf == 0.0
    assert harness.load_config(path, seed_override=9).seed == 9


def test_parse_rejects_unknown_keys():
    with pytest.raises(harness.ConfigError, match="wobble"):
        harness.parse_config({"experiment": "mu", "wobble": 1, **BASE,
                              "potential": {}})
    with pytest.raises(harness.ConfigError, match="extra"):
        harness.parse_config({"experiment": "lambda_curve",
                              "params": {"N": 1, "s": 0.25, "extra": 2}})
    with pytest.raises(harness.ConfigError, match="spin"):
        harness.parse_config({
            "experiment": "mu", **BASE,
            "potential": {"poles": [{"a": [0.0], "lambda": 0.1, "r": 1.0,
                                     "spin": 2}]}})


def test_parse_rejects_missing_pieces():
    with pytest.raises(harness.ConfigError, match="experiment"):
        harness.parse_config({})
    with pytest.raises(harness.ConfigError, match="unknown experiment"):
        harness.parse_config({"experiment": "warp"})
    with pytest.raises(harness.ConfigError, match="potential"):
        harness.parse_config({"experiment": "mu", **BASE})
    with pytest.raises(harness.ConfigError, match="tgrid"):
        harness.parse_config({"experiment": "kappa_identity", **BASE})
    with pytest.raises(harness.ConfigError, match="masses_frac"):
        harness.parse_config({"experiment": "theorem14", **BASE})


def test_parse_bad_toml_reports_path(tmp_path):
    path = write_toml(tmp_path, "experiment = [unclosed\n")
    with pytest.raises(harness.ConfigError, match="exp.toml"):
        harness.load_config(path)


def test_parse_potential_block():
    tree = {
        "experiment": "mu", **BASE,
        "potential": {
            "poles": [{"a": [2.0], "lambda": 0.05, "r": 1.0}],
            "lambda_inf": 0.01, "r_inf": 8.0,
            "remainder": {"kind": "gaussian-bumps",
                          "bumps": [{"amp": 0.5, "center": [0.0], "width": 1.0}]},
        },
    }
    cfg = harness.parse_config(tree)
    V = cfg.potential
    assert len(V.poles) == 1 and V.poles[0].lam == 0.05
    assert V.lambda_inf == 0.01 and V.r_inf == 8.0
    assert V.remainder.kind == "gaussian-bumps"
    # the configured bump must actually evaluate: amp * exp(-|x-c|^2/w^2)
    got = pot.evaluate(V, (0.0,)) - pot.evaluate(
        pot.ThetaPotential(params=V.params, poles=V.poles,
                           lambda_inf=V.lambda_inf, r_inf=V.r_inf), (0.0,))
    assert got == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(harness.ConfigError, match="missing key"):
        harness.parse_config({
            "experiment": "mu", **BASE,
            "potential": {"remainder": {
                "kind": "gaussian-bumps",
                "bumps": [{"amp": 0.5, "width": 1.0}]}}})
    with pytest.raises(harness.ConfigError, match="width"):
        harness.parse_config({
            "experiment": "mu", **BASE,
            "potential": {"remainder": {
                "kind": "gaussian-bumps",
                "bumps": [{"amp": 0.5, "center": [0.0], "width": -1.0}]}}})
    with pytest.raises(harness.ConfigError, match="user-grid"):
        harness.parse_config({
            "experiment": "mu", **BASE,
            "potential": {"remainder": {"kind": "user-grid"}}})


def test_mu_zero_potential_is_one():
    cfg = harness.parse_config({"experiment": "mu", **BASE, "target": 1.0,
                                "potential": {}})
    rec = harness.run(cfg)
    assert rec.verdict
    assert rec.results[-1]["mu"] == 1.0
    assert len(rec.results) == 3  # refinement ladder
    assert "aitken_extrapolation" in rec.diagnostics


def test_mu_failing_target():
    cfg = harness.parse_config({"experiment": "mu", **BASE, "target": 0.5,
                                "target_tol": 0.01, "potential": {}})
    rec = harness.run(cfg)
    assert not rec.verdict


def test_lemma51_upper_bounds():
    cfg = harness.parse_config({
        "experiment": "lemma51", **BASE,
        "potential": {"poles": [{"a": [0.0], "lambda": 0.07, "r": 1.0}]}})
    rec = harness.run(cfg)
    assert rec.verdict
    assert rec.results[0]["mu"] <= 1.0
    assert rec.results[0]["upper_bound_sharp"] == pytest.approx(
        1.0 - 0.07 / P1.gamma_hardy)


def test_theorem15_rows_and_floor():
    cfg = harness.parse_config({"experiment": "theorem15", **BASE,
                                "count": 2, "radius": 0.5, "seed": 1})
    rec = harness.run(cfg)
    assert len(rec.results) == 2
    for row in rec.results:
        assert np.isclose(sum(row["masses"]), 0.8 * P1.gamma_hardy)
        assert row["mu"] >= harness.THRESHOLDS["sufficiency_floor"]
    assert rec.verdict


def test_theorem14_both_directions():
    found = harness.run(harness.parse_config({
        "experiment": "theorem14", **BASE,
        "masses_frac": [0.4, 0.5], "radius": 0.5}))
    assert found.verdict and found.results[0]["found"]

    imp = harness.run(harness.parse_config({
        "experiment": "theorem14", **BASE,
        "masses_frac": [1.2], "expect": "impossible"}))
    assert imp.verdict and not imp.results[0]["found"]
    assert any("exceeds the Hardy constant" in line
               for line in imp.diagnostics["report"])
    assert any("witness_rho" in row for row in imp.results[1:])


def test_binding_final_row_positive():
    cfg = harness.parse_config({
        "experiment": "binding", "params": {"N": 1, "s": 0.25},
        "grid": {"n": 1024, "L": 48.0},
        "mass_frac": 0.8, "r": 1.0, "rhos": [2, 4, 8]})
    rec = harness.run(cfg, workers=2)
    assert [row["rho"] for row in rec.results] == [2.0, 4.0, 8.0]
    assert rec.results[-1]["mu"] > 0
    assert rec.verdict


def test_prop16_localization():
    rec = harness.run(harness.parse_config({
        "experiment": "prop16", **BASE, "mass_frac": 0.3, "r": 2.0}))
    assert rec.verdict
    row = rec.results[0]
    assert row["mu"] < 1.0 and row["mass_fraction"] >= 0.5


def test_lambda_curve_endpoints_and_shape():
    rec = harness.run(harness.parse_config({
        "experiment": "lambda_curve", "params": {"N": 2, "s": 0.5},
        "count": 11}))
    assert rec.verdict
    lams = [row["lambda"] for row in rec.results]
    p2 = specfun.params(2, 0.5)
    assert lams[0] == pytest.approx(p2.gamma_hardy, rel=1e-2)
    assert lams[-1] < 1e-2 * p2.gamma_hardy
    assert all(b < a for a, b in zip(lams, lams[1:]))


def test_angular_identity_cases():
    rec = harness.run(harness.parse_config(
        {"experiment": "angular_identity", "m": 512}))
    assert rec.verdict
    assert {(row["N"], row["s"]) for row in rec.results} == {(2, 0.5), (1, 0.25)}
    assert len(rec.results) == 6


def test_kappa_identity_experiment():
    rec = harness.run(harness.parse_config({
        "experiment": "kappa_identity", "params": {"N": 1, "s": 0.25},
        "grid": {"n": 512, "L": 16.0}, "tgrid": {"m_t": 512},
        "trials": 3, "kmax": 32}))
    assert rec.verdict
    assert all(row["rel_err"] <= harness.THRESHOLDS["kappa_rel"]
               for row in rec.results)


def test_certificate_experiment():
    rec = harness.run(harness.parse_config({
        "experiment": "certificate", "params": {"N": 1, "s": 0.25},
        "grid": {"n": 512, "L": 64.0}, "tgrid": {"m_t": 512},
        "eps_grid": [0.1, 0.45, 0.8]}))
    assert rec.verdict
    assert rec.diagnostics["largest_passing_eps"] == 0.45
    assert rec.diagnostics["bound"] <= rec.diagnostics["mu_hat"] + \
        harness.THRESHOLDS["certificate_pad"]


def test_determinism_and_round_trip(tmp_path):
    tree = {"experiment": "lambda_curve", "params": {"N": 1, "s": 0.25},
            "count": 9}
    cfg = harness.parse_config(tree)
    r1, r2 = harness.run(cfg), harness.run(cfg)
    assert r1.same_results(r2)

    pj = harness.emit(r1, "json", tmp_path)
    back = harness.RunRecord.from_dict(json.loads(pj.read_text()))
    assert back == r1


def test_emit_csv_and_svg(tmp_path):
    cfg = harness.parse_config({"experiment": "lambda_curve",
                                "params": {"N": 1, "s": 0.25}, "count": 9})
    rec = harness.run(cfg)
    pc = harness.emit(rec, "csv", tmp_path)
    lines = pc.read_text().splitlines()
    assert lines[0] == "alpha,lambda"
    assert len(lines) == len(rec.results) + 1
    ps = harness.emit(rec, "svg", tmp_path)
    assert ps.read_text().startswith("<?xml")
    with pytest.raises(ValueError, match="format"):
        harness.emit(rec, "pdf", tmp_path)
