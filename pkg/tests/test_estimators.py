"""Estimator unit tests on hand-built sample sets with known answers."""

import csv
import math

import numpy as np
import pytest

from cascademc import (
    Estimate,
    EstimatorMisuseError,
    SampleSet,
    export_csv,
    prob_is,
    prob_mcs,
    replicate_variance,
    risk,
    var_cvar,
    w0_diagnostic,
)


def make_set(shed, weight=None, eta=1.0, truncated=None, seed=7):
    n = len(shed)
    w = np.ones(n) if weight is None else np.asarray(weight, dtype=float)
    tr = (
        np.zeros(n, dtype=bool)
        if truncated is None
        else np.asarray(truncated, dtype=bool)
    )
    return SampleSet(
        meta={"eta": eta, "seed": seed, "n_samples": n, "n_components": 3},
        n=np.ones(n, dtype=np.int32),
        shed_mw=np.asarray(shed, dtype=float),
        log_p_c=np.zeros(n),
        log_q_c=np.zeros(n),
        weight=w,
        truncated=tr,
        final_masks=[0] * n,
    )


def test_prob_mcs_hand_example():
    est = prob_mcs(make_set([0.0, 10.0, 50.0, 100.0]), y0=50.0)
    assert est.value == 0.5
    assert est.variance == 0.0625
    assert est.std_error == 0.25
    assert est.kind == "mcs_prob"
    assert est.n_samples == 4
    assert est.flag is None


def test_prob_mcs_indicator_is_inclusive_at_threshold():
    est = prob_mcs(make_set([50.0, 49.999]), y0=50.0)
    assert est.value == 0.5


def test_prob_mcs_rejects_weighted_sets():
    with pytest.raises(EstimatorMisuseError, match="eta = 1"):
        prob_mcs(make_set([0.0], eta=2.0), y0=0.0)


def test_prob_mcs_zero_tail_flag():
    est = prob_mcs(make_set([1.0, 2.0]), y0=10.0)
    assert est.value == 0.0
    assert est.flag == "no tail mass observed"


def test_prob_is_hand_example():
    est = prob_is(make_set([0.0, 100.0], weight=[1.0, 0.5], eta=2.0), y0=50.0)
    assert est.value == 0.25
    assert est.variance == pytest.approx((0.125 - 0.0625) / 2, rel=1e-15)
    assert est.kind == "is_prob"


def test_prob_is_matches_mcs_bitwise_at_eta_one():
    s = make_set([0.0, 10.0, 50.0, 100.0])
    assert prob_is(s, 50.0).value == prob_mcs(s, 50.0).value


def test_risk_unweighted():
    est = risk(make_set([0.0, 10.0, 50.0, 100.0]), y0=50.0)
    assert est.value == 37.5
    assert est.kind == "mcs_risk"


def test_risk_weighted():
    est = risk(
        make_set([0.0, 10.0, 50.0, 100.0], weight=[1.0, 1.0, 2.0, 0.5], eta=2.0),
        y0=50.0,
    )
    assert est.value == 37.5
    assert est.kind == "is_risk"


def test_risk_zero_tail_flag():
    est = risk(make_set([0.0, 0.0]), y0=5.0)
    assert est.value == 0.0
    assert est.flag == "no tail mass observed"


def test_estimators_exclude_truncated_paths():
    s = make_set([0.0, 100.0, 100.0], truncated=[False, False, True])
    est = prob_mcs(s, y0=50.0)
    assert est.n_samples == 2
    assert est.n_truncated == 1
    assert est.value == 0.5


def test_estimators_reject_empty_sets():
    s = make_set([1.0], truncated=[True])
    for fn in (lambda: prob_mcs(s, 0.0), lambda: prob_is(s, 0.0),
               lambda: risk(s, 0.0), lambda: var_cvar(s, 0.5)):
        with pytest.raises(EstimatorMisuseError, match="no usable paths"):
            fn()


def test_var_cvar_hand_example_interior_alpha():
    # alpha strictly inside the 150-atom's mass range
    tm = var_cvar(make_set([0.0, 50.0, 150.0, 200.0]), alpha=0.7)
    assert tm.var == 150.0
    assert tm.cvar == 175.0
    assert tm.tail_mass == 0.5
    assert tm.total_mass == 1.0
    assert tm.flag is None


def test_var_cvar_boundary_alpha_steps_to_next_atom():
    # cumulative mass hits 0.75 exactly at the 150 atom; the strict
    # convention places VaR at the next atom, where tail_mass = 1 - alpha
    tm = var_cvar(make_set([0.0, 50.0, 150.0, 200.0]), alpha=0.75)
    assert tm.var == 200.0
    assert tm.cvar == 200.0
    assert tm.tail_mass == 0.25


def test_var_cvar_atomic_tail_is_exact():
    tm = var_cvar(make_set([0.0, 50.0, 150.0, 200.0]), alpha=0.9)
    assert tm.var == 200.0
    assert tm.cvar == 200.0
    assert tm.tail_mass == 0.25


def test_var_cvar_weighted():
    tm = var_cvar(make_set([0.0, 100.0], weight=[1.5, 0.5], eta=2.0), alpha=0.8)
    assert tm.var == 100.0
    assert tm.cvar == 100.0
    assert tm.tail_mass == 0.25


def test_var_cvar_alpha_beyond_observed_mass():
    tm = var_cvar(make_set([0.0, 100.0], weight=[0.5, 0.5], eta=2.0), alpha=0.9)
    assert tm.flag == "alpha exceeds observed mass"
    assert tm.var == 100.0
    assert tm.tail_mass == 0.25


def test_var_cvar_alpha_validation():
    s = make_set([1.0])
    for alpha in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(ValueError, match="alpha"):
            var_cvar(s, alpha)


def test_risk_decomposes_as_tail_mass_times_cvar_exactly():
    # alpha = 0.5 falls exactly on the atom boundary, so tail_mass equals
    # 1 - alpha; dyadic sheds and unit weights make every product exact and
    # the decomposition risk(VaR) = (1 - alpha) * CVaR holds bit for bit
    s = make_set([0.0, 0.0, 128.0, 128.0])
    alpha = 0.5
    tm = var_cvar(s, alpha=alpha)
    assert tm.var == 128.0 and tm.cvar == 128.0 and tm.tail_mass == 0.5
    assert tm.tail_mass == 1.0 - alpha
    assert risk(s, y0=tm.var).value == (1.0 - alpha) * tm.cvar
    assert risk(s, y0=tm.var).value == tm.tail_mass * tm.cvar


def test_replicate_variance():
    assert replicate_variance([1.0, 2.0, 3.0]) == 1.0
    ests = [
        Estimate(
            kind="mcs_prob", value=v, variance=0.0, std_error=0.0,
            n_samples=1, eta=1.0, seed=0,
        )
        for v in (1.0, 2.0, 3.0)
    ]
    assert replicate_variance(ests) == 1.0
    with pytest.raises(ValueError, match="at least 2"):
        replicate_variance([1.0])


def test_w0_diagnostic_rejects_eta_mismatch():
    class Enum:
        eta = 2.0

    with pytest.raises(ValueError, match="eta"):
        w0_diagnostic(Enum(), eta=1.5, y0=0.0)


def test_export_csv_round_trips(tmp_path):
    ests = [
        prob_mcs(make_set([0.0, 10.0, 50.0, 100.0]), y0=50.0),
        risk(make_set([0.0, 10.0, 50.0, 100.0]), y0=50.0),
    ]
    out = tmp_path / "estimates.csv"
    export_csv(ests, out)
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "estimator_kind", "Y0", "value", "variance", "std_error", "N", "eta",
        "seed",
    ]
    assert len(rows) == 3
    for row, est in zip(rows[1:], ests):
        assert row[0] == est.kind
        assert float(row[1]) == est.y0
        assert float(row[2]) == est.value
        assert float(row[3]) == est.variance
        assert int(row[5]) == est.n_samples
    # byte-identical on rewrite
    first = out.read_bytes()
    export_csv(ests, out)
    assert out.read_bytes() == first


def test_plugin_variance_formulas():
    s = make_set([0.0, 100.0], weight=[1.0, 2.0], eta=2.0)
    est = prob_is(s, y0=50.0)
    # contributions (0, 2): mean 1, second moment 2, var (2 - 1) / 2
    assert est.value == 1.0
    assert est.variance == 0.5
    assert est.std_error == math.sqrt(0.5)
