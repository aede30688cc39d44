"""Exact reference answers by exhaustive path enumeration.

For fixture-scale networks the cascade's path tree is finite and small, so
the full distribution can be enumerated.  All probabilities are exact
rationals: the configured probability values are lifted from their binary64
representation with Fraction(float), and every product or sum stays in
Fraction arithmetic.  Consequently the true and proposal path laws each sum
to exactly 1, and identities between variance formulas can be checked with
equality rather than tolerance.

Severity values come from the same dispatch used by the sampler, so path
classification (shed >= y0) agrees between oracle and samples by
construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .cascade import OutageModel
from .dc_power import DispatchCache
from .grid_model import Network
from .masks import in_service_bool, ordinals_from_mask
from .sampling import SisConfig


class EnumerationBudgetError(RuntimeError):
    """Path tree exceeds the configured enumeration budget."""


class EnumerationError(RuntimeError):
    """Enumeration cannot represent the full path law (stage bound hit)."""


@dataclass(frozen=True)
class PathRecord:
    """One terminating path with exact likelihoods."""

    states: tuple[int, ...]   # post-step status bitmasks; last repeats unless n == 1
    n: int
    p_c: Fraction             # true path probability
    q_c: Fraction             # proposal path probability (> 0)
    weight: Fraction          # p_c / q_c
    shed_mw: float


@dataclass(frozen=True)
class EnumSummary:
    """Exact tail quantities at one shed threshold."""

    y0: float
    mu: Fraction                  # P(shed >= y0)
    risk: Fraction                # E[shed * indicator]
    w0: Fraction | None           # weight concentration over qualifying paths
    min_weight: Fraction | None
    max_weight: Fraction | None
    n_qualifying: int
    sum_w2_q: Fraction            # E_g[w^2 delta]
    sum_w_q: Fraction             # E_g[w delta]  (= mu identically)
    sum_h2_p: Fraction            # E_f[h^2 delta]
    sum_w_h2_p: Fraction          # E_f[w h^2 delta]
    eq20_all_greater: bool        # proposal beats true law on every qualifying path
    n_eq20_greater: int

    def var_mcs(self, n: int) -> Fraction:
        """Plain Monte Carlo estimator variance at sample size n."""
        return (self.mu - self.mu * self.mu) / n

    def var_is_second_moment(self, n: int) -> Fraction:
        """IS variance from the second moment under the proposal."""
        return (self.sum_w2_q - self.mu * self.mu) / n

    def var_is_w0(self, n: int) -> Fraction:
        """IS variance in weight-concentration form (w0 * mu - mu^2) / n."""
        if self.w0 is None:
            return Fraction(0)
        return (self.w0 * self.mu - self.mu * self.mu) / n

    def risk_var_mcs(self, n: int) -> Fraction:
        return (self.sum_h2_p - self.risk * self.risk) / n

    def risk_var_is(self, n: int) -> Fraction:
        return (self.sum_w_h2_p - self.risk * self.risk) / n


class PathEnumeration:
    """Full exact path law of a (network, model, proposal) triple."""

    def __init__(self, net: Network, model: OutageModel, cfg: SisConfig,
                 paths: tuple[PathRecord, ...], dispatch_cache: DispatchCache):
        self.net = net
        self.model = model
        self.cfg = cfg
        self.paths = paths
        self.dispatch_cache = dispatch_cache
        self._summaries: dict[float, EnumSummary] = {}
        self.path_index = {p.states: i for i, p in enumerate(paths)}

    @property
    def eta(self) -> float:
        return self.cfg.eta

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    @property
    def total_p(self) -> Fraction:
        return sum((p.p_c for p in self.paths), Fraction(0))

    @property
    def total_q(self) -> Fraction:
        return sum((p.q_c for p in self.paths), Fraction(0))

    def shed_atoms(self) -> list[tuple[float, Fraction]]:
        """Distinct shed values with exact true-law masses, ascending."""
        masses: dict[float, Fraction] = {}
        for p in self.paths:
            masses[p.shed_mw] = masses.get(p.shed_mw, Fraction(0)) + p.p_c
        return sorted(masses.items())

    def summary(self, y0: float) -> EnumSummary:
        cached = self._summaries.get(y0)
        if cached is not None:
            return cached
        mu = Fraction(0)
        risk = Fraction(0)
        sum_w2_q = Fraction(0)
        sum_w_q = Fraction(0)
        sum_h2_p = Fraction(0)
        sum_w_h2_p = Fraction(0)
        min_w = max_w = None
        n_qual = 0
        n_greater = 0
        for rec in self.paths:
            if rec.shed_mw >= y0:
                n_qual += 1
                h = Fraction(rec.shed_mw)
                mu += rec.p_c
                risk += h * rec.p_c
                sum_w2_q += rec.weight * rec.weight * rec.q_c
                sum_w_q += rec.weight * rec.q_c
                sum_h2_p += h * h * rec.p_c
                sum_w_h2_p += rec.weight * h * h * rec.p_c
                if min_w is None or rec.weight < min_w:
                    min_w = rec.weight
                if max_w is None or rec.weight > max_w:
                    max_w = rec.weight
                if rec.q_c > rec.p_c:
                    n_greater += 1
        w0 = sum_w2_q / sum_w_q if n_qual and sum_w_q > 0 else None
        out = EnumSummary(
            y0=y0, mu=mu, risk=risk, w0=w0,
            min_weight=min_w, max_weight=max_w, n_qualifying=n_qual,
            sum_w2_q=sum_w2_q, sum_w_q=sum_w_q,
            sum_h2_p=sum_h2_p, sum_w_h2_p=sum_w_h2_p,
            eq20_all_greater=(n_qual > 0 and n_greater == n_qual),
            n_eq20_greater=n_greater,
        )
        self._summaries[y0] = out
        return out


def _exact_probs(value: float) -> Fraction:
    # exact lift of the binary64 value; no decimal guessing
    return Fraction(value)


def enumerate_paths(
    net: Network,
    model: OutageModel,
    cfg: SisConfig,
    max_stages: int | None = None,
    path_budget: int = 10_000_000,
    dispatch_cache: DispatchCache | None = None,
) -> PathEnumeration:
    """Enumerate every terminating path with exact probabilities.

    Refuses (EnumerationBudgetError) once the number of emitted paths
    exceeds path_budget; raises EnumerationError if any path would need
    more than max_stages steps (the law would then not be fully
    enumerable within the configured horizon).
    """
    limit_stages = max_stages if max_stages is not None else cfg.max_stages
    cache = dispatch_cache if dispatch_cache is not None else DispatchCache(net)
    n_c = net.n_branches
    p0 = _exact_probs(model.p0)
    p1 = _exact_probs(model.p1)
    p_e = _exact_probs(model.p_e)
    eta = _exact_probs(cfg.eta)
    cap = _exact_probs(cfg.p_max)
    one = Fraction(1)

    def lane_probs(mask: int, first_stage: bool):
        disp = cache.get(mask)
        live = in_service_bool(mask, n_c)
        base = p0 if first_stage else p_e
        lanes = []
        for k in np.flatnonzero(live):
            k = int(k)
            p = p1 if abs(disp.flows[k]) >= net.flow_limit[k] else base
            if p > 0:
                q = min(eta * p, cap)
                lanes.append((k, p, q))
        return lanes, disp.total_shed

    paths: list[PathRecord] = []
    # stack entries: (mask, stage, prefix_p, prefix_q, states)
    stack = [(0, 1, one, one, ())]
    while stack:
        mask, stage, pref_p, pref_q, states = stack.pop()
        if stage > limit_stages:
            raise EnumerationError(
                f"a path needs more than {limit_stages} stages; raise "
                "max_stages to enumerate this law fully"
            )
        lanes, shed = lane_probs(mask, first_stage=(stage == 1))
        k = len(lanes)
        for bits in range(1 << k):
            p_hat = one
            q_hat = one
            new_mask = mask
            for j, (ordinal, p, q) in enumerate(lanes):
                if bits >> j & 1:
                    p_hat *= p
                    q_hat *= q
                    new_mask |= 1 << ordinal
                else:
                    p_hat *= one - p
                    q_hat *= one - q
            if q_hat == 0:
                continue  # unreachable under the proposal (and the true law)
            if bits == 0:
                rec = PathRecord(
                    states=states + (mask,),
                    n=stage,
                    p_c=pref_p * p_hat,
                    q_c=pref_q * q_hat,
                    weight=(pref_p * p_hat) / (pref_q * q_hat),
                    shed_mw=shed,
                )
                paths.append(rec)
                if len(paths) > path_budget:
                    raise EnumerationBudgetError(
                        f"enumeration exceeded the budget of {path_budget} paths"
                    )
            else:
                stack.append(
                    (new_mask, stage + 1, pref_p * p_hat, pref_q * q_hat,
                     states + (new_mask,))
                )
    paths.reverse()  # depth-first emission order, first-tripped subsets first
    return PathEnumeration(net, model, cfg, tuple(paths), cache)


# ----------------------------------------------------------------------
# proposition checks


@dataclass(frozen=True)
class PropositionReport:
    """Exact checks of the variance-reduction propositions at one (eta, y0)."""

    eta: float
    y0: float
    mu: float
    w0: float | None
    prop1_bracket_ok: bool        # min w <= w0 <= max w over qualifying paths
    prop2_sign_ok: bool           # sign(D_IS - D) == sign(w0 - 1)
    prop3_ratio: float | None     # D_IS / D; < 1 exactly when w0 < 1
    eq15_eq17_equal: bool         # second-moment and w0 variance forms agree
    eq20_all_greater: bool        # sufficient condition of the proposal test
    eq20_fraction: float | None   # share of qualifying paths with q_c > p_c
    condition_met: bool           # w0 < 1


def verify_propositions(
    enum: PathEnumeration, y0: float, n_ref: int = 1000
) -> PropositionReport:
    s = enum.summary(y0)
    if s.n_qualifying == 0 or s.w0 is None:
        return PropositionReport(
            eta=enum.eta, y0=y0, mu=float(s.mu), w0=None,
            prop1_bracket_ok=True, prop2_sign_ok=True, prop3_ratio=None,
            eq15_eq17_equal=True, eq20_all_greater=False, eq20_fraction=None,
            condition_met=False,
        )
    d_mcs = s.var_mcs(n_ref)
    d_is_15 = s.var_is_second_moment(n_ref)
    d_is_17 = s.var_is_w0(n_ref)

    def sign(x: Fraction) -> int:
        return (x > 0) - (x < 0)

    return PropositionReport(
        eta=enum.eta, y0=y0, mu=float(s.mu), w0=float(s.w0),
        prop1_bracket_ok=bool(s.min_weight <= s.w0 <= s.max_weight),
        prop2_sign_ok=(sign(d_is_17 - d_mcs) == sign(s.w0 - 1)),
        prop3_ratio=float(d_is_17 / d_mcs) if d_mcs > 0 else None,
        eq15_eq17_equal=(d_is_15 == d_is_17),
        eq20_all_greater=s.eq20_all_greater,
        eq20_fraction=s.n_eq20_greater / s.n_qualifying,
        condition_met=bool(s.w0 < 1),
    )


# ----------------------------------------------------------------------
# golden files


def _frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _frac_parse(s: str) -> Fraction:
    num, den = s.split("/")
    return Fraction(int(num), int(den))


def _states_digest(states: tuple[int, ...]) -> str:
    blob = json.dumps(list(states)).encode()
    return hashlib.sha256(blob).hexdigest()


def write_golden(
    enum: PathEnumeration,
    path: str | Path,
    y0_list,
    n_ref: int = 1000,
) -> None:
    """Serialize the exact law: one record per path plus summary blocks."""
    doc = {
        "kind": "enumeration",
        "version": 1,
        "case": enum.net.name,
        "eta": enum.cfg.eta,
        "proposal_p_max": enum.cfg.p_max,
        "model": {
            "p0": enum.model.p0,
            "p1": enum.model.p1,
            "p_e": enum.model.p_e,
            "p_max": enum.model.p_max,
        },
        "n_paths": enum.n_paths,
        "sum_p": _frac_str(enum.total_p),
        "sum_q": _frac_str(enum.total_q),
        "paths": [
            {
                "states_sha256": _states_digest(rec.states),
                "n": rec.n,
                "p_c": _frac_str(rec.p_c),
                "q_c": _frac_str(rec.q_c),
                "weight": _frac_str(rec.weight),
                "shed_mw": rec.shed_mw,
                "final_tripped": list(ordinals_from_mask(rec.states[-1])),
            }
            for rec in enum.paths
        ],
        "summaries": [],
    }
    for y0 in y0_list:
        s = enum.summary(y0)
        doc["summaries"].append(
            {
                "y0": y0,
                "n_ref": n_ref,
                "mu": _frac_str(s.mu),
                "risk": _frac_str(s.risk),
                "w0": _frac_str(s.w0) if s.w0 is not None else None,
                "n_qualifying": s.n_qualifying,
                "var_mcs": _frac_str(s.var_mcs(n_ref)),
                "var_is": _frac_str(s.var_is_second_moment(n_ref)),
                "risk_var_mcs": _frac_str(s.risk_var_mcs(n_ref)),
                "risk_var_is": _frac_str(s.risk_var_is(n_ref)),
            }
        )
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_golden(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("kind") != "enumeration":
        raise ValueError(f"{path} is not an enumeration golden file")
    doc["sum_p"] = _frac_parse(doc["sum_p"])
    doc["sum_q"] = _frac_parse(doc["sum_q"])
    for rec in doc["paths"]:
        rec["p_c"] = _frac_parse(rec["p_c"])
        rec["q_c"] = _frac_parse(rec["q_c"])
        rec["weight"] = _frac_parse(rec["weight"])
    for s in doc["summaries"]:
        s["mu"] = _frac_parse(s["mu"])
        s["risk"] = _frac_parse(s["risk"])
        if s["w0"] is not None:
            s["w0"] = _frac_parse(s["w0"])
        s["var_mcs"] = _frac_parse(s["var_mcs"])
        s["var_is"] = _frac_parse(s["var_is"])
        s["risk_var_mcs"] = _frac_parse(s["risk_var_mcs"])
        s["risk_var_is"] = _frac_parse(s["risk_var_is"])
    return doc
