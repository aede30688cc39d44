"""Bundled study systems with reference outage models.

Each fixture pairs a small network with the outage model and proposal
configuration used throughout the test suite.  The systems are small
enough for exact path enumeration, which is what makes them useful:
every estimator in the package can be checked against closed-form
ground truth on these cases.

Values are chosen to be exactly representable in binary floating
point (dyadic rationals) so that hand calculations, the exact
enumerator, and the samplers agree to the last bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .cascade import OutageModel
from .grid_model import Network, load_case
from .sampling import SisConfig


@dataclass(frozen=True)
class Fixture:
    """A bundled case plus the reference model used in tests."""

    name: str
    network: Network
    model: OutageModel
    config: SisConfig
    # Load-shed thresholds (MW) that are interesting for this system,
    # i.e. thresholds that separate its distinct outage severities.
    y0_grid: tuple[float, ...]
    alpha_grid: tuple[float, ...]


def case_path(name: str) -> Path:
    """Filesystem path of a bundled case file."""
    ref = resources.files("cascademc").joinpath("cases", f"{name}.json")
    path = Path(str(ref))
    if not path.exists():
        raise FileNotFoundError(f"no bundled case named {name!r}")
    return path


def _fixture(
    name: str,
    model: OutageModel,
    config: SisConfig,
    y0_grid: tuple[float, ...],
    alpha_grid: tuple[float, ...] = (0.9, 0.95, 0.99),
) -> Fixture:
    network = load_case(case_path(name))
    return Fixture(
        name=name,
        network=network,
        model=model,
        config=config,
        y0_grid=y0_grid,
        alpha_grid=alpha_grid,
    )


_CFG = SisConfig(eta=1.0, p_max=0.75, max_stages=64)


def load_fixture(name: str) -> Fixture:
    """Build a fixture by name.  See ``fixture_names`` for the list."""
    try:
        maker = _MAKERS[name]
    except KeyError:
        raise KeyError(
            f"unknown fixture {name!r}; available: {', '.join(sorted(_MAKERS))}"
        ) from None
    return maker()


def fixture_names() -> tuple[str, ...]:
    return tuple(sorted(_MAKERS))


def _ring3() -> Fixture:
    # Triangle: one 90 MW load fed directly (60 MW) and around the
    # ring (30 MW per leg).  Losing any one branch forces shedding and
    # leaves survivors exactly at their limits, so escalation uses the
    # overload probability.
    model = OutageModel(p0=0.0625, p1=0.5, p_e=0.0, p_max=0.75)
    return _fixture("ring3", model, _CFG, y0_grid=(10.0, 30.0, 80.0))


def _par3() -> Fixture:
    # Three parallel ties, 90 MW across.  Flow splits 36/36/18 by
    # susceptance; each single-line loss overloads the survivors.
    model = OutageModel(p0=0.03125, p1=0.5, p_e=0.0, p_max=0.75)
    return _fixture("par3", model, _CFG, y0_grid=(10.0, 40.0, 80.0))


def _chain4() -> Fixture:
    # Radial feeder with three sections.  Limits sit above worst-case
    # flows, so there are no overload escalations; cascades here are
    # driven purely by the background outage rate at later stages.
    model = OutageModel(p0=0.125, p1=0.5, p_e=0.03125, p_max=0.75)
    return _fixture("chain4", model, _CFG, y0_grid=(20.0, 50.0, 90.0))


def _duo2() -> Fixture:
    # Two parallel ties serving 100 MW against a 2 x 40 MW limit: the
    # pre-disturbance dispatch already sheds 20 MW and runs both lines
    # at their limit, so stage 1 uses the overload probability.
    model = OutageModel(p0=0.0625, p1=0.25, p_e=0.0, p_max=0.75)
    return _fixture("duo2", model, _CFG, y0_grid=(10.0, 50.0, 90.0))


def _bridge6() -> Fixture:
    # Two feed corridors joined by weak bridge ties.  Losing a corridor
    # branch reroutes flow across a bridge, overloading it; a rich set
    # of partial-shed outcomes results.
    model = OutageModel(p0=0.015625, p1=0.375, p_e=0.0078125, p_max=0.75)
    return _fixture("bridge6", model, _CFG, y0_grid=(16.0, 48.0, 100.0))


_MAKERS = {
    "ring3": _ring3,
    "par3": _par3,
    "chain4": _chain4,
    "duo2": _duo2,
    "bridge6": _bridge6,
}
