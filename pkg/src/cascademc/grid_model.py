"""Network data model and case-file loading.

A Network is an immutable bus/branch/generator description.  Branches are
the outage-eligible components; their ordering (sorted by id) defines the
component ordinals used everywhere else in the package.

Two case formats are supported:

- native JSON with top-level keys ``base_mva``, ``buses``, ``branches``,
  ``generators``;
- a matrix-style ``.m`` subset (``mpc.bus`` / ``mpc.branch`` / ``mpc.gen``
  tables), from which only the columns needed for DC studies are read.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path


class CaseError(ValueError):
    """Base class for case-file problems."""


class CaseFormatError(CaseError):
    """File could not be parsed at all."""


class CaseIntegrityError(CaseError):
    """Parsed file violates a structural rule (dangling ref, bad value)."""


class CaseWarning(UserWarning):
    """Non-fatal oddity in a case file (ignored columns, zero ratings)."""


ComponentId = int | str


def _id_key(cid: ComponentId):
    # deterministic ordering across mixed int/str id spaces
    return (0, cid, "") if isinstance(cid, int) else (1, 0, str(cid))


@dataclass(frozen=True)
class Bus:
    id: ComponentId
    load_mw: float = 0.0


@dataclass(frozen=True)
class Branch:
    id: ComponentId
    from_bus: ComponentId
    to_bus: ComponentId
    reactance: float        # per-unit, > 0
    flow_limit_mw: float    # > 0; math.inf means unlimited


@dataclass(frozen=True)
class Generator:
    id: ComponentId
    bus: ComponentId
    capacity_mw: float      # >= 0


@dataclass(frozen=True)
class ComponentIndex:
    """Ordinal handle for an outage-eligible component."""

    ordinal: int
    kind: str               # always "branch" in this model
    ref: ComponentId        # the branch id


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    base_mva: float = 100.0
    name: str = ""

    # ------------------------------------------------------------------
    # derived index structures (cached; the dataclass itself stays frozen)

    @cached_property
    def bus_position(self) -> dict[ComponentId, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def components(self) -> tuple[ComponentIndex, ...]:
        return tuple(
            ComponentIndex(ordinal=i, kind="branch", ref=br.id)
            for i, br in enumerate(self.branches)
        )

    @cached_property
    def _arrays(self):
        import numpy as np

        from_pos = np.asarray(
            [self.bus_position[br.from_bus] for br in self.branches], dtype=np.intp
        )
        to_pos = np.asarray(
            [self.bus_position[br.to_bus] for br in self.branches], dtype=np.intp
        )
        reactance = np.asarray([br.reactance for br in self.branches], dtype=float)
        limit = np.asarray([br.flow_limit_mw for br in self.branches], dtype=float)
        load = np.asarray([b.load_mw for b in self.buses], dtype=float)
        gen_pos = np.asarray(
            [self.bus_position[g.bus] for g in self.generators], dtype=np.intp
        )
        gen_cap = np.asarray([g.capacity_mw for g in self.generators], dtype=float)
        return from_pos, to_pos, reactance, limit, load, gen_pos, gen_cap

    @property
    def from_pos(self):
        return self._arrays[0]

    @property
    def to_pos(self):
        return self._arrays[1]

    @property
    def reactance(self):
        return self._arrays[2]

    @property
    def flow_limit(self):
        return self._arrays[3]

    @property
    def load(self):
        return self._arrays[4]

    @property
    def gen_pos(self):
        return self._arrays[5]

    @property
    def gen_cap(self):
        return self._arrays[6]

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def total_load(self) -> float:
        return float(math.fsum(b.load_mw for b in self.buses))

    @property
    def total_capacity(self) -> float:
        return float(math.fsum(g.capacity_mw for g in self.generators))

    def validate(self) -> "Network":
        """Check structural rules; returns self so loaders can chain."""
        if not self.buses:
            raise CaseIntegrityError("case has no buses")
        for group, items in (
            ("buses", self.buses),
            ("branches", self.branches),
            ("generators", self.generators),
        ):
            seen: set = set()
            for i, item in enumerate(items):
                cid = item.id
                if isinstance(cid, bool) or not isinstance(cid, (int, str)):
                    raise CaseIntegrityError(
                        f"{group}[{i}].id must be an int or string, got {cid!r}"
                    )
                if cid in seen:
                    raise CaseIntegrityError(f"duplicate id {cid!r} in {group}")
                seen.add(cid)
        bus_ids = {b.id for b in self.buses}
        for i, b in enumerate(self.buses):
            if not (math.isfinite(b.load_mw) and b.load_mw >= 0):
                raise CaseIntegrityError(
                    f"buses[{i}] (id {b.id!r}): load_mw must be finite and >= 0"
                )
        for i, br in enumerate(self.branches):
            if br.from_bus not in bus_ids or br.to_bus not in bus_ids:
                raise CaseIntegrityError(
                    f"branches[{i}] (id {br.id!r}) references a missing bus "
                    f"({br.from_bus!r} -> {br.to_bus!r})"
                )
            if br.from_bus == br.to_bus:
                raise CaseIntegrityError(
                    f"branches[{i}] (id {br.id!r}) is a self-loop at {br.from_bus!r}"
                )
            if not (math.isfinite(br.reactance) and br.reactance > 0):
                raise CaseIntegrityError(
                    f"branches[{i}] (id {br.id!r}): reactance must be finite and > 0"
                )
            if not br.flow_limit_mw > 0:
                raise CaseIntegrityError(
                    f"branches[{i}] (id {br.id!r}): flow_limit_mw must be > 0"
                )
        for i, g in enumerate(self.generators):
            if g.bus not in bus_ids:
                raise CaseIntegrityError(
                    f"generators[{i}] (id {g.id!r}) references missing bus {g.bus!r}"
                )
            if not (math.isfinite(g.capacity_mw) and g.capacity_mw >= 0):
                raise CaseIntegrityError(
                    f"generators[{i}] (id {g.id!r}): capacity_mw must be finite, >= 0"
                )
        if not math.isfinite(self.base_mva) or self.base_mva <= 0:
            raise CaseIntegrityError("base_mva must be finite and > 0")
        return self


def component_count(net: Network) -> int:
    """Number of outage-eligible components N_c (branches).

    The cascade state space has size 2**N_c.
    """
    return net.n_branches


def _canonical(net: Network) -> Network:
    """Sort collections by id so component ordinals are deterministic."""
    return Network(
        buses=tuple(sorted(net.buses, key=lambda b: _id_key(b.id))),
        branches=tuple(sorted(net.branches, key=lambda b: _id_key(b.id))),
        generators=tuple(sorted(net.generators, key=lambda g: _id_key(g.id))),
        base_mva=net.base_mva,
        name=net.name,
    )


# ----------------------------------------------------------------------
# native JSON format

_BUS_KEYS = {"id", "load_mw"}
_BRANCH_KEYS = {"id", "from_bus", "to_bus", "reactance", "flow_limit_mw"}
_GEN_KEYS = {"id", "bus", "capacity_mw"}


def _num(obj, where: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise CaseIntegrityError(f"{where} must be a number, got {obj!r}")
    return float(obj)


def network_from_dict(doc: dict, name: str = "") -> Network:
    if not isinstance(doc, dict):
        raise CaseFormatError("top level of a case document must be an object")
    missing = {"buses", "branches", "generators"} - doc.keys()
    if missing:
        raise CaseFormatError(f"case document missing keys: {sorted(missing)}")
    extra = doc.keys() - {"buses", "branches", "generators", "base_mva", "name"}
    if extra:
        warnings.warn(f"ignoring unsupported case keys: {sorted(extra)}", CaseWarning)

    buses = []
    for i, row in enumerate(doc["buses"]):
        unknown = row.keys() - _BUS_KEYS
        if unknown:
            warnings.warn(
                f"buses[{i}]: ignoring fields {sorted(unknown)}", CaseWarning
            )
        buses.append(Bus(id=row["id"], load_mw=_num(row.get("load_mw", 0.0),
                                                    f"buses[{i}].load_mw")))
    branches = []
    for i, row in enumerate(doc["branches"]):
        unknown = row.keys() - _BRANCH_KEYS
        if unknown:
            warnings.warn(
                f"branches[{i}]: ignoring fields {sorted(unknown)}", CaseWarning
            )
        try:
            branches.append(
                Branch(
                    id=row["id"],
                    from_bus=row["from_bus"],
                    to_bus=row["to_bus"],
                    reactance=_num(row["reactance"], f"branches[{i}].reactance"),
                    flow_limit_mw=_num(
                        row["flow_limit_mw"], f"branches[{i}].flow_limit_mw"
                    ),
                )
            )
        except KeyError as exc:
            raise CaseFormatError(f"branches[{i}] missing field {exc}") from None
    generators = []
    for i, row in enumerate(doc["generators"]):
        unknown = row.keys() - _GEN_KEYS
        if unknown:
            warnings.warn(
                f"generators[{i}]: ignoring fields {sorted(unknown)}", CaseWarning
            )
        try:
            generators.append(
                Generator(
                    id=row["id"],
                    bus=row["bus"],
                    capacity_mw=_num(
                        row["capacity_mw"], f"generators[{i}].capacity_mw"
                    ),
                )
            )
        except KeyError as exc:
            raise CaseFormatError(f"generators[{i}] missing field {exc}") from None

    net = Network(
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(generators),
        base_mva=_num(doc.get("base_mva", 100.0), "base_mva"),
        name=doc.get("name", name),
    )
    return _canonical(net).validate()


def network_to_dict(net: Network) -> dict:
    net = _canonical(net)
    return {
        "name": net.name,
        "base_mva": net.base_mva,
        "buses": [{"id": b.id, "load_mw": b.load_mw} for b in net.buses],
        "branches": [
            {
                "id": br.id,
                "from_bus": br.from_bus,
                "to_bus": br.to_bus,
                "reactance": br.reactance,
                "flow_limit_mw": br.flow_limit_mw,
            }
            for br in net.branches
        ],
        "generators": [
            {"id": g.id, "bus": g.bus, "capacity_mw": g.capacity_mw}
            for g in net.generators
        ],
    }


def save_case(net: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1) + "\n")


# ----------------------------------------------------------------------
# matrix-style .m subset

_TABLE_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\];", re.DOTALL)
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([0-9.eE+-]+)\s*;")


def _parse_matrix(text: str) -> list[list[float]]:
    rows = []
    for raw in re.split(r"[;\n]", text):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.replace(",", " ").split()])
        except ValueError as exc:
            raise CaseFormatError(f"bad numeric row in table: {line!r}") from exc
    return rows


def _matrix_case(text: str, name: str) -> Network:
    tables = {m.group(1): _parse_matrix(m.group(2)) for m in _TABLE_RE.finditer(text)}
    scalars = {m.group(1): float(m.group(2)) for m in _SCALAR_RE.finditer(text)}
    for required in ("bus", "branch", "gen"):
        if required not in tables:
            raise CaseFormatError(f"matrix case is missing the mpc.{required} table")
    ignored = sorted(tables.keys() - {"bus", "branch", "gen"})
    if ignored:
        warnings.warn(f"ignoring unsupported tables: {ignored}", CaseWarning)

    buses = []
    for i, row in enumerate(tables["bus"]):
        if len(row) < 3:
            raise CaseFormatError(f"bus row {i} has {len(row)} columns, expected >= 3")
        buses.append(Bus(id=int(row[0]), load_mw=float(row[2])))

    branches = []
    n_zero_rating = 0
    for i, row in enumerate(tables["branch"]):
        if len(row) < 6:
            raise CaseFormatError(
                f"branch row {i} has {len(row)} columns, expected >= 6"
            )
        status = row[10] if len(row) > 10 else 1.0
        if status == 0:
            warnings.warn(f"branch row {i} is out of service; skipped", CaseWarning)
            continue
        rate_a = float(row[5])
        if rate_a <= 0:
            n_zero_rating += 1
            rate_a = math.inf
        branches.append(
            Branch(
                id=i,
                from_bus=int(row[0]),
                to_bus=int(row[1]),
                reactance=float(row[3]),
                flow_limit_mw=rate_a,
            )
        )
    if n_zero_rating:
        warnings.warn(
            f"{n_zero_rating} branch row(s) have no rating; treated as unlimited",
            CaseWarning,
        )

    generators = []
    for i, row in enumerate(tables["gen"]):
        if len(row) < 9:
            raise CaseFormatError(f"gen row {i} has {len(row)} columns, expected >= 9")
        status = row[7]
        if status <= 0:
            warnings.warn(f"gen row {i} is out of service; skipped", CaseWarning)
            continue
        generators.append(Generator(id=i, bus=int(row[0]), capacity_mw=float(row[8])))

    net = Network(
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(generators),
        base_mva=scalars.get("baseMVA", 100.0),
        name=name,
    )
    return _canonical(net).validate()


def load_case(path: str | Path) -> Network:
    """Load a case file (.json native schema, .m matrix subset)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"case file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".m":
        return _matrix_case(text, name=path.stem)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return network_from_dict(doc, name=path.stem)
