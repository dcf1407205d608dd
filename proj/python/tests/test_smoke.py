import json
import math
import pathlib

import numpy as np
import pytest

import delayctl

SPECS = pathlib.Path(__file__).resolve().parents[2] / "data" / "specs"


@pytest.fixture(scope="module")
def closed_form():
    spec = delayctl.demo("closed_form")
    field, report = delayctl.solve(spec, nodes=81, steps=16)
    return spec, field, report


def test_demos_load():
    names = delayctl.demo_names()
    assert "scalar" in names
    for name in names:
        assert delayctl.demo(name).name == name


def test_spec_files_match_dimensions():
    spec = delayctl.load_spec(str(SPECS / "scalar.json"))
    assert (spec.n, spec.m) == (1, 1)
    assert spec.a0.shape == (1, 1)


def test_bad_spec_raises_config_error():
    with pytest.raises(delayctl.DelayctlError):
        delayctl.spec_from_json({"name": "broken"})


def test_closed_form_value(closed_form):
    # U = {0}, phi = y^2, a0 = 0, sigma = 1 and no history: v(t, x) = y^2 + (T - t).
    spec, field, report = closed_form
    assert report["converged"]
    for t, y in [(0.0, 0.3), (0.5, -0.7)]:
        v = delayctl.value(spec, field, t, y=np.array([y]), history={"constant": [0.0]})
        assert math.isclose(v, y * y + spec.T - t, abs_tol=1e-4)


def test_history_argument(closed_form):
    spec, field, _ = closed_form
    hist = {"expression": "sin(3 * s)"}
    a = delayctl.value(spec, field, 0.2, history=hist)
    b = delayctl.value(spec, field, 0.2, history=json.dumps(hist))
    assert a == b


def test_simulate_is_reproducible():
    spec = delayctl.demo("scalar")
    a = delayctl.simulate(spec, policy=np.array([0.0]), dt=0.01, paths=50, seed=3)
    b = delayctl.simulate(spec, policy=np.array([0.0]), dt=0.01, paths=50, seed=3)
    assert np.array_equal(a["costs"], b["costs"])
    assert a["cost"]["se"] > 0


def test_feedback_needs_field():
    with pytest.raises(delayctl.ValidationError):
        delayctl.simulate(delayctl.demo("scalar"), policy="feedback", paths=2)


def test_cli_exit_codes(tmp_path):
    assert delayctl.run_cli(["check", "--spec", str(SPECS / "scalar.json"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "check.json").exists()
    assert delayctl.run_cli(["check", "--spec", str(tmp_path / "nope.json")]) == 2
