"""Estimators over sample sets: exceedance probability, blackout risk,
VaR/CVaR, replicate variance, and the weight-concentration diagnostic.

All reductions run over paths in index-ascending order with error-free
compensated summation (math.fsum), so identical inputs give bit-identical
estimates.  Truncated paths are excluded from every estimator and reported
in the estimate's diagnostics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .sampling import SampleSet


class EstimatorMisuseError(ValueError):
    """Estimator applied to a sample set it is not valid for."""


@dataclass(frozen=True)
class Estimate:
    kind: str                 # mcs_prob | is_prob | mcs_risk | is_risk
    value: float
    variance: float
    std_error: float
    n_samples: int            # paths used (truncated excluded)
    eta: float
    seed: int
    y0: float | None = None
    flag: str | None = None
    n_truncated: int = 0


def _valid_columns(samples: SampleSet):
    keep = ~samples.truncated
    return (
        samples.shed_mw[keep],
        samples.weight[keep],
        int(keep.sum()),
        int(samples.truncated.sum()),
    )


def _fsum(values: np.ndarray) -> float:
    return math.fsum(values.tolist())


def prob_mcs(samples: SampleSet, y0: float) -> Estimate:
    """Plain Monte Carlo exceedance probability P(shed >= y0).

    Only valid on eta = 1 campaigns; weighted sets must use prob_is.
    Variance is the binomial plug-in value * (1 - value) / N.
    """
    if samples.eta != 1.0:
        raise EstimatorMisuseError(
            f"prob_mcs requires an eta = 1 sample set (got eta = {samples.eta}); "
            "use prob_is for weighted samples"
        )
    shed, _, n_valid, n_trunc = _valid_columns(samples)
    if n_valid == 0:
        raise EstimatorMisuseError("sample set has no usable paths")
    delta = (shed >= y0).astype(float)
    value = _fsum(delta) / n_valid
    variance = value * (1.0 - value) / n_valid
    flag = "no tail mass observed" if value == 0.0 else None
    return Estimate(
        kind="mcs_prob", value=value, variance=variance,
        std_error=math.sqrt(variance), n_samples=n_valid,
        eta=samples.eta, seed=int(samples.meta.get("seed", -1)),
        y0=y0, flag=flag, n_truncated=n_trunc,
    )


def prob_is(samples: SampleSet, y0: float) -> Estimate:
    """Importance-sampling exceedance probability: mean of weight * indicator.

    Valid for any eta (with eta = 1 all weights are exactly 1 and the value
    matches prob_mcs bit for bit).  Variance is the empirical second-moment
    plug-in ((1/N) sum((w * delta)^2) - value^2) / N.
    """
    shed, weight, n_valid, n_trunc = _valid_columns(samples)
    if n_valid == 0:
        raise EstimatorMisuseError("sample set has no usable paths")
    contrib = weight * (shed >= y0).astype(float)
    value = _fsum(contrib) / n_valid
    second = _fsum(contrib * contrib) / n_valid
    variance = max(0.0, (second - value * value) / n_valid)
    flag = "no tail mass observed" if value == 0.0 else None
    return Estimate(
        kind="is_prob", value=value, variance=variance,
        std_error=math.sqrt(variance), n_samples=n_valid,
        eta=samples.eta, seed=int(samples.meta.get("seed", -1)),
        y0=y0, flag=flag, n_truncated=n_trunc,
    )


def risk(samples: SampleSet, y0: float) -> Estimate:
    """Blackout risk: mean of shed * indicator(shed >= y0), weighted when
    the set was sampled under an amplified proposal."""
    shed, weight, n_valid, n_trunc = _valid_columns(samples)
    if n_valid == 0:
        raise EstimatorMisuseError("sample set has no usable paths")
    delta = (shed >= y0).astype(float)
    if samples.eta == 1.0:
        contrib = shed * delta
        kind = "mcs_risk"
    else:
        contrib = weight * shed * delta
        kind = "is_risk"
    value = _fsum(contrib) / n_valid
    second = _fsum(contrib * contrib) / n_valid
    variance = max(0.0, (second - value * value) / n_valid)
    flag = "no tail mass observed" if not np.any(delta) else None
    return Estimate(
        kind=kind, value=value, variance=variance,
        std_error=math.sqrt(variance), n_samples=n_valid,
        eta=samples.eta, seed=int(samples.meta.get("seed", -1)),
        y0=y0, flag=flag, n_truncated=n_trunc,
    )


@dataclass(frozen=True)
class TailMeasures:
    """VaR/CVaR of the weighted empirical shed distribution.

    Masses are w_i / N.  VaR is the upper empirical quantile: the smallest
    shed value whose cumulative mass strictly exceeds alpha.  CVaR is the
    weighted mean of sheds >= VaR.  tail_mass is the mass at or above VaR.
    The textbook identity risk(VaR) = (1 - alpha) * CVaR holds exactly iff
    tail_mass equals 1 - alpha, which under this convention happens
    whenever alpha falls exactly on an atom boundary of the cumulative
    distribution (no atom straddles the quantile); for alpha strictly
    inside an atom the identity is approximate and tail_mass > 1 - alpha.
    """

    alpha: float
    var: float
    cvar: float
    tail_mass: float
    total_mass: float
    flag: str | None = None


def var_cvar(samples: SampleSet, alpha: float) -> TailMeasures:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    shed, weight, n_valid, _ = _valid_columns(samples)
    if n_valid == 0:
        raise EstimatorMisuseError("sample set has no usable paths")
    order = np.argsort(shed, kind="stable")
    y = shed[order]
    w = weight[order]
    total = _fsum(w) / n_valid
    cum = np.cumsum(w / n_valid)
    hit = np.flatnonzero(cum > alpha)
    if hit.size == 0:
        # alpha beyond the observed mass: report the largest atom, flagged
        v = float(y[-1])
        tail_mass, cvar = _tail_stats(y, w, n_valid, v)
        return TailMeasures(
            alpha=alpha, var=v, cvar=cvar, tail_mass=tail_mass,
            total_mass=total, flag="alpha exceeds observed mass",
        )
    v = float(y[hit[0]])
    tail_mass, cvar = _tail_stats(y, w, n_valid, v)
    return TailMeasures(
        alpha=alpha, var=v, cvar=cvar, tail_mass=tail_mass,
        total_mass=total, flag=None,
    )


def _tail_stats(
    y: np.ndarray, w: np.ndarray, n_valid: int, v: float
) -> tuple[float, float]:
    # divide raw weighted sums so an atomic tail averages exactly
    sel = y >= v
    tail_w = math.fsum(w[sel].tolist())
    if tail_w == 0.0:
        return 0.0, v
    cvar = math.fsum((y[sel] * w[sel]).tolist()) / tail_w
    return tail_w / n_valid, cvar


def replicate_variance(estimates) -> float:
    """Sample variance of replicate estimates, 1/(m-1) normalization.

    Accepts plain numbers or Estimate objects.
    """
    values = [
        float(v.value) if isinstance(v, Estimate) else float(v) for v in estimates
    ]
    m = len(values)
    if m < 2:
        raise ValueError(f"need at least 2 replicate estimates, got {m}")
    mean = math.fsum(values) / m
    return math.fsum((v - mean) ** 2 for v in values) / (m - 1)


@dataclass(frozen=True)
class W0Report:
    """Weight-concentration diagnostic from an exact enumeration.

    condition_met is the variance-reduction criterion w0 < 1.  w0_mu pairs
    with mu for the log-log diagnostic plot of w0 * mu against mu.  min_w
    and max_w bound w0 over qualifying paths (tight form of the bracketing
    property); the exact rational is kept alongside the float.
    """

    w0: float
    condition_met: bool
    w0_exact: Fraction
    mu: float
    w0_mu: float
    min_w: float
    max_w: float
    flag: str | None = None


def w0_diagnostic(enumeration, eta: float, y0: float) -> W0Report:
    """Exact w0 = E[w^2 delta] / E[w delta] under the proposal law.

    Requires the enumeration to have been built with the same eta.  Raises
    if the bracketing property (min w <= w0 <= max w over qualifying paths)
    fails, which would indicate a defect in the enumeration itself.
    """
    if float(enumeration.eta) != float(eta):
        raise ValueError(
            f"enumeration was built with eta = {enumeration.eta}, asked for {eta}"
        )
    summary = enumeration.summary(y0)
    if summary.mu == 0:
        return W0Report(
            w0=float("nan"), condition_met=False, w0_exact=Fraction(0),
            mu=0.0, w0_mu=float("nan"), min_w=float("nan"),
            max_w=float("nan"), flag="no qualifying paths (mu = 0)",
        )
    w0 = summary.w0
    if not (summary.min_weight <= w0 <= summary.max_weight):
        raise AssertionError(
            "w0 escaped the qualifying-weight bracket: "
            f"{summary.min_weight} <= {w0} <= {summary.max_weight} is false"
        )
    return W0Report(
        w0=float(w0), condition_met=bool(w0 < 1),
        w0_exact=w0, mu=float(summary.mu),
        w0_mu=float(w0 * summary.mu),
        min_w=float(summary.min_weight), max_w=float(summary.max_weight),
    )


_CSV_COLUMNS = (
    "estimator_kind", "Y0", "value", "variance", "std_error", "N", "eta", "seed"
)


def export_csv(estimates, path: str | Path) -> None:
    """Write estimates to CSV with one row per estimate.

    Floats are rendered with repr so files are bit-identical across reruns
    and round-trip exactly.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for e in estimates:
            writer.writerow(
                [
                    e.kind,
                    repr(float(e.y0)) if e.y0 is not None else "",
                    repr(float(e.value)),
                    repr(float(e.variance)),
                    repr(float(e.std_error)),
                    e.n_samples,
                    repr(float(e.eta)),
                    e.seed,
                ]
            )
