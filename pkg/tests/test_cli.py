import csv
import json
import math

import pytest
from click.testing import CliRunner

from fisher_shadow.cli import main

PAULI1 = {"kind": "pauli_complete", "n_qubits": 1}
STATE = {"kind": "pauli_coefficients", "coefficients": {"X": 0.2, "Y": -0.1, "Z": 0.4}}


def _run(tmp_path, command, config, *extra):
    path = tmp_path / f"{command}.cfg.json"
    path.write_text(json.dumps(config))
    out = tmp_path / "out"
    res = CliRunner().invoke(main, [command, "--config", str(path), "--out", str(out), *extra])
    return res, out


def _rows(out, command):
    with open(out / f"{command}.csv") as fh:
        return list(csv.DictReader(fh))


def _gamma_value(tmp_path, **cfg):
    budget = {"max_evals": 200, "restarts": 2}
    res, out = _run(tmp_path, "gamma", {"observables": PAULI1, "budget": budget, **cfg})
    assert res.exit_code == 0, res.output
    report = json.loads((out / "gamma.json").read_text())
    assert report["config_hash"] == _rows(out, "gamma")[0]["config_hash"]
    return report["report"]["value"]


def test_gamma_pauli_single_qubit(tmp_path):
    assert 2 / 3 <= _gamma_value(tmp_path, p="inf", variant="ob") <= 6
    ob2 = _gamma_value(tmp_path, p=2, variant="ob")
    full2 = _gamma_value(tmp_path, p=2, variant="full")
    assert full2 <= 3 * ob2 * (1 + 1e-6)


@pytest.mark.parametrize(
    "config",
    [
        {"observables": PAULI1, "bogus": 1},
        {"observables": {"kind": "pauli_complete"}},
        {"p": 0.5},
    ],
)
def test_malformed_config_exits_2(tmp_path, config):
    res, _ = _run(tmp_path, "gamma", config)
    assert res.exit_code == 2
    assert "config error" in res.output


def test_unparseable_and_missing_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    runner = CliRunner()
    assert runner.invoke(main, ["gamma", "--config", str(bad)]).exit_code == 2
    assert runner.invoke(main, ["gamma", "--config", str(tmp_path / "missing.json")]).exit_code == 2


def test_identities_pass_and_negative_control(tmp_path):
    res, out = _run(tmp_path, "identities", {"dims": [2, 3], "instances": 4})
    assert res.exit_code == 0
    rows = _rows(out, "identities")
    assert all(r["passed"] == "True" and r["anchor"] for r in rows)
    res, out = _run(
        tmp_path, "identities", {"dims": [2], "instances": 4, "convention": "d2_scaled", "suites": ["chi2_exactness"]}
    )
    assert res.exit_code == 3


def test_budget_exhausted_exit_code(tmp_path):
    cfg = {"observables": PAULI1, "family": "fixed", "povm": {"kind": "sic_d2"}, "p": 2,
           "budget": {"max_evals": 4, "restarts": 2, "strict": True}}
    res, out = _run(tmp_path, "gamma", cfg)
    assert res.exit_code == 4
    assert math.isfinite(json.loads((out / "gamma.json").read_text())["report"]["value"])


def test_sweep_is_reproducible_and_marks_regime(tmp_path):
    cfg = {"observables": PAULI1, "state": STATE, "p": "inf", "epsilons": [0.8, 0.1], "trials": 10, "n0": 500}
    res, out = _run(tmp_path, "sweep", cfg)
    assert res.exit_code == 0, res.output
    first = (out / "sweep.csv").read_bytes()
    rows = _rows(out, "sweep")
    assert rows[0]["regime"] == "outside regime" and rows[1]["regime"] == "inside"
    res, out = _run(tmp_path, "sweep", cfg)
    assert (out / "sweep.csv").read_bytes() == first


def test_seed_override_changes_hash(tmp_path):
    cfg = {"observables": PAULI1, "state": STATE, "n0": 200, "b": 20}
    _, out = _run(tmp_path, "estimate", cfg, "--seed", "1")
    h1 = json.loads((out / "estimate.json").read_text())["config_hash"]
    _, out = _run(tmp_path, "estimate", cfg, "--seed", "2")
    h2 = json.loads((out / "estimate.json").read_text())["config_hash"]
    assert h1 != h2


def test_pauli_table_single_qubit(tmp_path):
    cfg = {"n_values": [1], "p": "inf", "budget": {"max_evals": 60, "restarts": 2}}
    res, out = _run(tmp_path, "pauli", cfg)
    assert res.exit_code == 0
    (row,) = _rows(out, "pauli")
    assert float(row["eta_ob"]) == pytest.approx(1 / 18, abs=1e-12)
    assert float(row["eta_ob_formula"]) == pytest.approx(1 / 18, abs=1e-15)


def test_pauli_a_max_at_p1(tmp_path):
    res, out = _run(tmp_path, "pauli", {"n_values": [1], "p": 1, "budget": {"max_evals": 60, "restarts": 2}})
    assert res.exit_code == 0
    assert float(_rows(out, "pauli")[0]["a_max"]) <= 2 + 1e-9


def test_ccopy_oblivious_thresholds(tmp_path):
    res, out = _run(tmp_path, "ccopy", {"instances": 6, "adaptive_depth": 2})
    assert res.exit_code == 0 and all(r["passed"] == "True" for r in _rows(out, "ccopy"))
    res, out = _run(tmp_path, "oblivious", {"observables": PAULI1, "state": STATE, "alpha": [0.5, 0.5, 0.0],
                                            "n0": 500, "b": 50})
    assert res.exit_code == 0
    res, out = _run(tmp_path, "thresholds", {"observables": PAULI1, "p": "inf", "m_star": {"kind": "sic_d2"},
                                             "gamma_ob": 3.0, "gamma_full": 3.0, "n_pure": 4, "n_mixed": 4})
    assert res.exit_code == 0
    row = _rows(out, "thresholds")[0]
    assert float(row["eta_bar_ob"]) == pytest.approx(math.sqrt(3 / 8))


def test_sweep_slope_is_quadratic(tmp_path):
    cfg = {"observables": PAULI1, "state": STATE, "p": "inf", "epsilons": [0.1, 0.05, 0.025], "trials": 100}
    res, out = _run(tmp_path, "sweep", cfg)
    assert res.exit_code == 0
    slope = json.loads((out / "sweep.json").read_text())["slope"]
    assert 1.7 <= slope <= 2.3
