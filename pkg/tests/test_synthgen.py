import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from pricebounds.adjuster import MN_CC, adjust, constraint_residuals
from pricebounds.domain import MarginGrid
from pricebounds.exceptions import InvalidInputError
from pricebounds.synthgen import (SCENARIOS, Envelope, ScenarioSpec, generate, load_scenarios,
                                  scenario_from_dict, scenario_to_dict, true_profile)


def inside(spec, recs):
    cur = np.array([r.current_margin for r in recs])
    nxt = np.array([r.next_margin for r in recs])
    return (spec.lower(cur, spec.r_min) <= nxt) & (nxt <= spec.upper(cur, spec.r_min))


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_no_outliers_all_inside(name):
    spec = ScenarioSpec(**{**scenario_to_dict(SCENARIOS[name]),
                           "lower": SCENARIOS[name].lower, "upper": SCENARIOS[name].upper,
                           "current_beta": (2.0, 2.0), "next_beta": (1.0, 1.0),
                           "outlier_rate": 0.0})
    recs, _, mask = generate(spec, 1000)
    assert inside(spec, recs).all()
    assert not mask.any()


def test_deterministic():
    a, _, _ = generate(SCENARIOS["B"].with_seed(3), 200)
    b, _, _ = generate(SCENARIOS["B"].with_seed(3), 200)
    c, _, _ = generate(SCENARIOS["B"].with_seed(4), 200)
    assert a == b
    assert a != c


def test_outlier_fraction():
    spec = SCENARIOS["A"].with_seed(11)
    recs, _, mask = generate(spec, 10000)
    frac = 1 - inside(spec, recs).mean()
    assert 0.03 <= frac <= 0.07
    assert_array_equal(~inside(spec, recs), mask)


def test_chronological_and_in_domain():
    recs, _, _ = generate(SCENARIOS["C"], 500)
    ts = [r.timestamp for r in recs]
    assert ts == sorted(ts)
    cur = np.array([r.current_margin for r in recs])
    assert cur.min() >= 0.003 and cur.max() <= 0.011


@pytest.mark.parametrize("delta", [0.001, 0.0001])
@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_truth_is_mn_cc_feasible(name, delta):
    truth = true_profile(SCENARIOS[name], MarginGrid(0.003, 0.011, delta))
    assert max(constraint_residuals(truth, MN_CC).values()) <= 1e-12
    out = adjust(truth, MN_CC)
    np.testing.assert_allclose(out.lower, truth.lower, atol=1e-8)
    np.testing.assert_allclose(out.upper, truth.upper, atol=1e-8)


@pytest.mark.parametrize("kw", [
    dict(lower=Envelope(0.006), upper=Envelope(0.005)),            # crossing
    dict(lower=Envelope(0.003, 0.5, -20.0), upper=Envelope(0.02)),  # concave lower
    dict(lower=Envelope(0.003), upper=Envelope(0.005, 0.1, 50.0)),  # convex upper
    dict(lower=Envelope(0.003, -0.1), upper=Envelope(0.02)),        # decreasing
    dict(lower=Envelope(0.003), upper=Envelope(0.02), outlier_rate=1.5),
    dict(lower=Envelope(0.003), upper=Envelope(0.02), r_min=0.02),
])
def test_invalid_spec(kw):
    with pytest.raises(InvalidInputError):
        ScenarioSpec("bad", **kw)


def test_n_must_be_positive():
    with pytest.raises(InvalidInputError):
        generate(SCENARIOS["A"], 0)


def test_json_round_trip(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps([scenario_to_dict(SCENARIOS["A"].with_seed(9)), "B"]))
    specs = load_scenarios(path)
    assert specs[0] == SCENARIOS["A"].with_seed(9)
    assert specs[1] is SCENARIOS["B"]
    with pytest.raises(InvalidInputError):
        scenario_from_dict({"name": "x"})
    path.write_text('["Z"]')
    with pytest.raises(InvalidInputError):
        load_scenarios(path)
