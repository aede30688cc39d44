"""Cascade state space and transition probabilities.

A cascade is a Markov chain over component-status vectors: at each stage
every in-service component trips independently with a status-dependent
probability, tripped components stay tripped, and the process ends the
first time a step trips nothing.  The chain is Markov because the trip
probabilities depend only on the current state (through its dispatch flows
and its stage index), never on how the state was reached.

Stage convention: the pre-disturbance grid is stage 1.  A step taken from a
stage-1 state applies the initial-disturbance probability p0; steps from
later stages apply the background probability p_e; the overload probability
p1 overrides either whenever |flow| >= limit (at-limit counts as
overloaded).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid_model import Network
from .masks import in_service_bool, mask_from_ordinals, ordinals_from_mask


class ContradictionError(ValueError):
    """A transition that cannot occur (e.g. sure-trip component survived)."""


class ComponentStatus:
    IN_SERVICE = "in_service"
    TRIPPED = "tripped"


@dataclass(frozen=True)
class OutageModel:
    """Two-level trip-probability model.

    p0 applies at the first step (initial disturbance), p_e at later steps,
    p1 whenever the component is overloaded; p_max bounds them all.
    """

    p0: float
    p1: float
    p_e: float = 0.0
    p_max: float = 0.999

    def __post_init__(self):
        if not 0.0 <= self.p_e <= self.p0 <= self.p1 <= self.p_max <= 1.0:
            raise ValueError(
                "outage model must satisfy 0 <= p_e <= p0 <= p1 <= p_max <= 1, got "
                f"p_e={self.p_e}, p0={self.p0}, p1={self.p1}, p_max={self.p_max}"
            )


@dataclass(frozen=True)
class SystemState:
    """Component-status vector plus stage index.

    mask bit k set means component k is tripped.  stage counts sampling
    steps and starts at 1 for the pre-disturbance grid.
    """

    mask: int
    stage: int
    n_components: int

    def __post_init__(self):
        if self.stage < 1:
            raise ValueError(f"stage must be >= 1, got {self.stage}")
        if self.mask < 0 or self.mask >> self.n_components:
            raise ValueError("mask has bits outside the component range")

    @classmethod
    def intact(cls, net: Network) -> "SystemState":
        return cls(mask=0, stage=1, n_components=net.n_branches)

    @property
    def status(self) -> tuple[str, ...]:
        return tuple(
            ComponentStatus.TRIPPED if (self.mask >> k) & 1
            else ComponentStatus.IN_SERVICE
            for k in range(self.n_components)
        )

    @property
    def tripped(self) -> tuple[int, ...]:
        return ordinals_from_mask(self.mask)

    def is_tripped(self, ordinal: int) -> bool:
        return bool((self.mask >> ordinal) & 1)

    def in_service(self) -> np.ndarray:
        return in_service_bool(self.mask, self.n_components)

    def trip(self, ordinals) -> "SystemState":
        add = mask_from_ordinals(ordinals)
        if add >> self.n_components:
            raise ValueError("ordinal outside the component range")
        if add & self.mask:
            raise ContradictionError("cannot trip an already-tripped component")
        return SystemState(
            mask=self.mask | add, stage=self.stage + 1,
            n_components=self.n_components,
        )

    def advance(self) -> "SystemState":
        """Same status vector, one stage later (a step that tripped nothing)."""
        return SystemState(
            mask=self.mask, stage=self.stage + 1, n_components=self.n_components
        )


@dataclass(frozen=True)
class TransitionRecord:
    """One sampled step: who tripped, with what true/proposal likelihoods."""

    stage: int
    tripped: tuple[int, ...]
    p_hat: float
    log_p_hat: float
    q_hat: float
    log_q_hat: float


def outage_probabilities(
    net: Network,
    state: SystemState,
    flows: np.ndarray,
    model: OutageModel,
) -> np.ndarray:
    """Per-component trip probabilities for the step taken from ``state``.

    Tripped components get exactly 0 (they are absorbing).  In-service
    components get p1 when |flow| >= limit, else p0 at stage 1 and p_e
    afterwards.
    """
    flows = np.asarray(flows, dtype=float)
    if flows.shape != (net.n_branches,):
        raise ValueError(
            f"flows must have shape ({net.n_branches},), got {flows.shape}"
        )
    if state.n_components != net.n_branches:
        raise ValueError("state and network disagree on component count")
    base = model.p0 if state.stage == 1 else model.p_e
    live = state.in_service()
    probs = np.where(np.abs(flows) >= net.flow_limit, model.p1, base)
    probs[~live] = 0.0
    return probs


def transition_probability(
    probs: np.ndarray,
    tripped: set[int] | frozenset[int],
    survived: set[int] | frozenset[int],
) -> tuple[float, float]:
    """Probability of one step outcome: the given components trip, the rest
    of the in-service set survives.

    Returns (log probability, probability).  The two index sets must
    partition the in-service components being decided; a survived component
    with probability exactly 1 is a contradiction.
    """
    probs = np.asarray(probs, dtype=float)
    tripped = frozenset(int(k) for k in tripped)
    survived = frozenset(int(k) for k in survived)
    if tripped & survived:
        raise ContradictionError(
            f"components {sorted(tripped & survived)} both tripped and survived"
        )
    for k in tripped | survived:
        if k < 0 or k >= probs.size:
            raise IndexError(f"component ordinal {k} out of range")
    t_idx = np.asarray(sorted(tripped), dtype=np.intp)
    s_idx = np.asarray(sorted(survived), dtype=np.intp)
    if np.any(probs[s_idx] >= 1.0):
        bad = [int(k) for k in s_idx[probs[s_idx] >= 1.0]]
        raise ContradictionError(
            f"components {bad} have trip probability 1 but are marked survived"
        )
    with np.errstate(divide="ignore"):
        log_p = float(np.log(probs[t_idx]).sum() + np.log1p(-probs[s_idx]).sum())
    p = float(np.prod(probs[t_idx]) * np.prod(1.0 - probs[s_idx]))
    return log_p, p


def path_probability(records) -> tuple[float, float]:
    """True path probability: product of per-step likelihoods, log space."""
    log_p = math.fsum(r.log_p_hat for r in records)
    return log_p, math.exp(log_p)


def path_proposal_probability(records) -> tuple[float, float]:
    """Proposal path probability: product of per-step proposal likelihoods."""
    log_q = math.fsum(r.log_q_hat for r in records)
    return log_q, math.exp(log_q)
