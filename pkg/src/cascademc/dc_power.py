"""DC power flow and minimum-load-shedding dispatch.

The grid splits into islands (connected components of the in-service branch
graph).  Within each island the DC approximation applies: branch flow equals
the angle difference across the branch divided by its reactance, and bus
injections must balance.

Dispatch solves, island by island, the linear program

    minimize   total unserved load
    subject to DC flow equations, |flow| <= limit,
               0 <= generation <= capacity, 0 <= served <= load.

A feasible point always exists (serve nothing), so the problem is never
infeasible.  Before building the LP, a proportional-capacity dispatch is
tried: every generator at capacity * target / island_capacity, every load at
load * target / island_load, with target = min(island_load, island_capacity).
If its flows respect all limits it is optimal (it attains the island's lower
bound on shed) and is accepted; otherwise the LP runs and returns a vertex
optimum.  Both routes are pure functions of the island topology, so repeated
calls agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.optimize import linprog

from .grid_model import Network
from .masks import in_service_bool


class StructuralError(ValueError):
    """Island system is structurally unsolvable (singular matrix)."""


class DispatchError(RuntimeError):
    """The LP solver failed to return an optimal vertex."""


@dataclass(frozen=True)
class DispatchResult:
    """Dispatch outcome for one system state.

    flows has one entry per branch ordinal (0.0 for tripped branches);
    served is per bus; generation per generator.  feas_residual is the
    largest violation of balance/limit/bound constraints in MW;
    cs_residual is the largest complementary-slackness product over LP
    islands (0.0 when every island took the proportional fast path, where
    optimality follows from shed reaching its lower bound rather than from
    a dual certificate).
    """

    flows: np.ndarray
    served: np.ndarray
    generation: np.ndarray
    total_shed: float
    islands: tuple[tuple[int, ...], ...]
    methods: tuple[str, ...]
    feas_residual: float
    cs_residual: float


def islands(net: Network, in_service: np.ndarray) -> list[np.ndarray]:
    """Connected components of the in-service branch graph.

    Returns bus-position arrays, each sorted ascending, ordered by their
    smallest member.  Isolated buses form singleton islands.
    """
    parent = list(range(net.n_buses))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    from_pos = net.from_pos
    to_pos = net.to_pos
    for k in np.flatnonzero(in_service):
        ra, rb = find(int(from_pos[k])), find(int(to_pos[k]))
        if ra != rb:
            # attach the larger root under the smaller: island label becomes
            # its lowest bus position, which keeps ordering deterministic
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb
    groups: dict[int, list[int]] = {}
    for b in range(net.n_buses):
        groups.setdefault(find(b), []).append(b)
    return [np.asarray(groups[r], dtype=np.intp) for r in sorted(groups)]


def _island_angles(
    net: Network,
    island: np.ndarray,
    branch_idx: np.ndarray,
    injection: np.ndarray,
) -> np.ndarray:
    """Solve B * theta = injection on one island, reference at the island's
    lowest-position bus (positions follow id order).  Returns theta for the
    island's buses, reference fixed at zero."""
    nb = island.size
    theta = np.zeros(nb)
    if nb == 1 or branch_idx.size == 0:
        return theta
    local = {int(b): i for i, b in enumerate(island)}
    B = np.zeros((nb, nb))
    for k in branch_idx:
        f = local[int(net.from_pos[k])]
        t = local[int(net.to_pos[k])]
        b = 1.0 / net.reactance[k]
        B[f, f] += b
        B[t, t] += b
        B[f, t] -= b
        B[t, f] -= b
    # ground the reference bus (local index 0 = lowest position in island)
    Bred = B[1:, 1:]
    pred = injection[island][1:]
    try:
        theta[1:] = scipy.linalg.solve(Bred, pred, assume_a="pos")
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise StructuralError(f"singular island system: {exc}") from None
    return theta


def _branches_by_island(
    net: Network, in_service: np.ndarray, isl: list[np.ndarray]
) -> list[np.ndarray]:
    root = np.empty(net.n_buses, dtype=np.intp)
    for gi, members in enumerate(isl):
        root[members] = gi
    out: list[list[int]] = [[] for _ in isl]
    for k in np.flatnonzero(in_service):
        out[root[net.from_pos[k]]].append(int(k))
    return [np.asarray(v, dtype=np.intp) for v in out]


def dc_flow(
    net: Network,
    in_service: np.ndarray,
    injection: np.ndarray,
    *,
    balance_tol: float = 1e-6,
) -> np.ndarray:
    """Branch flows (MW) for given bus injections, per island.

    injection must balance to zero within each island (the dispatch
    routines guarantee this); imbalance beyond balance_tol raises
    ValueError.  Tripped branches carry exactly 0.0.
    """
    in_service = np.asarray(in_service, dtype=bool)
    injection = np.asarray(injection, dtype=float)
    if injection.shape != (net.n_buses,):
        raise ValueError(
            f"injection must have shape ({net.n_buses},), got {injection.shape}"
        )
    isl = islands(net, in_service)
    by_island = _branches_by_island(net, in_service, isl)
    flows = np.zeros(net.n_branches)
    scale = max(1.0, float(np.abs(injection).max(initial=0.0)))
    for members, branch_idx in zip(isl, by_island):
        imbalance = abs(math.fsum(injection[members].tolist()))
        if imbalance > balance_tol * scale:
            raise ValueError(
                f"injections do not balance on island starting at bus position "
                f"{int(members[0])}: residual {imbalance:g} MW"
            )
        theta = _island_angles(net, members, branch_idx, injection)
        if branch_idx.size:
            local = {int(b): i for i, b in enumerate(members)}
            for k in branch_idx:
                f = local[int(net.from_pos[k])]
                t = local[int(net.to_pos[k])]
                flows[k] = (theta[f] - theta[t]) / net.reactance[k]
    return flows


def _island_lp(
    net: Network,
    island: np.ndarray,
    branch_idx: np.ndarray,
    gen_idx: np.ndarray,
    load_idx: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Vertex-optimal minimum-shed dispatch for one island.

    Returns (flows over branch_idx, generation over gen_idx, served over
    load_idx, cs_residual)."""
    nb = island.size
    ng = gen_idx.size
    nl = load_idx.size
    nbr = branch_idx.size
    local = {int(b): i for i, b in enumerate(island)}
    nvar = nb + ng + nl

    rows, cols, vals = [], [], []
    for j, k in enumerate(branch_idx):
        f = local[int(net.from_pos[k])]
        t = local[int(net.to_pos[k])]
        b = 1.0 / net.reactance[k]
        rows += [f, f, t, t]
        cols += [f, t, t, f]
        vals += [b, -b, b, -b]
    for j, g in enumerate(gen_idx):
        rows.append(local[int(net.gen_pos[g])])
        cols.append(nb + j)
        vals.append(-1.0)
    for j, b_pos in enumerate(load_idx):
        rows.append(local[int(b_pos)])
        cols.append(nb + ng + j)
        vals.append(1.0)
    A_eq = scipy.sparse.coo_matrix(
        (vals, (rows, cols)), shape=(nb, nvar)
    ).tocsr()
    b_eq = np.zeros(nb)

    rows_ub, cols_ub, vals_ub = [], [], []
    b_ub = np.empty(2 * nbr)
    r = 0
    for j, k in enumerate(branch_idx):
        f = local[int(net.from_pos[k])]
        t = local[int(net.to_pos[k])]
        b = 1.0 / net.reactance[k]
        lim = net.flow_limit[k]
        rows_ub += [r, r, r + 1, r + 1]
        cols_ub += [f, t, f, t]
        vals_ub += [b, -b, -b, b]
        b_ub[r] = lim
        b_ub[r + 1] = lim
        r += 2
    A_ub = scipy.sparse.coo_matrix(
        (vals_ub, (rows_ub, cols_ub)), shape=(2 * nbr, nvar)
    ).tocsr()

    c = np.zeros(nvar)
    c[nb + ng :] = -1.0

    bounds: list[tuple[float | None, float | None]] = [(None, None)] * nb
    bounds[0] = (0.0, 0.0)  # reference angle
    for g in gen_idx:
        bounds.append((0.0, float(net.gen_cap[g])))
    for b_pos in load_idx:
        bounds.append((0.0, float(net.load[b_pos])))

    # dual simplex gives vertex solutions (wanted: they expose at-limit
    # branches), but can stall with an "Unknown" model status on rare
    # near-degenerate islands; retrying without presolve resolves those
    # while staying on simplex.  The ladder is fixed, so a given island
    # always yields the same result regardless of worker or rerun.
    res = None
    for method, options in (
        ("highs-ds", None),
        ("highs-ds", {"presolve": False}),
        ("highs", None),
    ):
        res = linprog(
            c,
            A_ub=A_ub,
            b_ub=b_ub,
            A_eq=A_eq,
            b_eq=b_eq,
            bounds=bounds,
            method=method,
            options=options,
        )
        if res.success:
            break
    if not res.success:
        raise DispatchError(f"dispatch LP failed: status {res.status}: {res.message}")

    theta = res.x[:nb]
    gen = res.x[nb : nb + ng]
    served = res.x[nb + ng :]
    flows = np.empty(nbr)
    for j, k in enumerate(branch_idx):
        f = local[int(net.from_pos[k])]
        t = local[int(net.to_pos[k])]
        flows[j] = (theta[f] - theta[t]) / net.reactance[k]

    # complementary slackness certificate: marginal * slack for every
    # inequality row and active bound
    cs = 0.0
    if nbr:
        slack = res.ineqlin.residual
        cs = float(np.abs(res.ineqlin.marginals * slack).max(initial=0.0))
    lb = np.array([lo if lo is not None else -np.inf for lo, _ in bounds])
    ub = np.array([hi if hi is not None else np.inf for _, hi in bounds])
    with np.errstate(invalid="ignore"):
        lo_gap = np.where(np.isfinite(lb), res.x - lb, 0.0)
        hi_gap = np.where(np.isfinite(ub), ub - res.x, 0.0)
    cs = max(cs, float(np.abs(res.lower.marginals * lo_gap).max(initial=0.0)))
    cs = max(cs, float(np.abs(res.upper.marginals * hi_gap).max(initial=0.0)))
    return flows, gen, served, cs


def dispatch(net: Network, in_service: np.ndarray | None = None) -> DispatchResult:
    """Minimum-load-shedding dispatch of one system state.

    ``in_service=None`` means the intact grid.
    """
    if in_service is None:
        in_service = np.ones(net.n_branches, dtype=bool)
    in_service = np.asarray(in_service, dtype=bool)
    if in_service.shape != (net.n_branches,):
        raise ValueError(
            f"in_service must have shape ({net.n_branches},), got {in_service.shape}"
        )
    isl = islands(net, in_service)
    by_island = _branches_by_island(net, in_service, isl)
    gen_island = np.empty(len(net.generators), dtype=np.intp)
    root = np.empty(net.n_buses, dtype=np.intp)
    for gi, members in enumerate(isl):
        root[members] = gi
    if len(net.generators):
        gen_island = root[net.gen_pos]

    flows = np.zeros(net.n_branches)
    served = np.zeros(net.n_buses)
    generation = np.zeros(len(net.generators))
    methods: list[str] = []
    cs_residual = 0.0

    for gi, (members, branch_idx) in enumerate(zip(isl, by_island)):
        gen_idx = np.flatnonzero(gen_island == gi) if len(net.generators) else \
            np.empty(0, dtype=np.intp)
        loads = net.load[members]
        load_idx = members[loads > 0.0]
        L = math.fsum(net.load[load_idx].tolist())
        C = math.fsum(net.gen_cap[gen_idx].tolist())
        target = min(L, C)
        if target <= 0.0:
            methods.append("trivial")
            continue

        # proportional fast path: feasible zero-slack candidate at the
        # island's shed lower bound max(0, L - C)
        gen_prop = net.gen_cap[gen_idx] * (target / C)
        served_prop = net.load[load_idx] * (target / L)
        injection = np.zeros(net.n_buses)
        np.add.at(injection, net.gen_pos[gen_idx], gen_prop)
        injection[load_idx] -= served_prop
        theta = _island_angles(net, members, branch_idx, injection)
        ok = True
        if branch_idx.size:
            local = {int(b): i for i, b in enumerate(members)}
            fl = np.empty(branch_idx.size)
            for j, k in enumerate(branch_idx):
                f = local[int(net.from_pos[k])]
                t = local[int(net.to_pos[k])]
                fl[j] = (theta[f] - theta[t]) / net.reactance[k]
            ok = bool(np.all(np.abs(fl) <= net.flow_limit[branch_idx]))
        if ok:
            if branch_idx.size:
                flows[branch_idx] = fl
            generation[gen_idx] = gen_prop
            served[load_idx] = served_prop
            methods.append("proportional")
            continue

        fl, gen_lp, served_lp, cs = _island_lp(
            net, members, branch_idx, gen_idx, load_idx
        )
        flows[branch_idx] = fl
        generation[gen_idx] = gen_lp
        served[load_idx] = served_lp
        cs_residual = max(cs_residual, cs)
        methods.append("lp")

    total_shed = math.fsum(net.load.tolist()) - math.fsum(served.tolist())
    feas = _feasibility_residual(net, in_service, flows, served, generation, isl)
    return DispatchResult(
        flows=flows,
        served=served,
        generation=generation,
        total_shed=total_shed,
        islands=tuple(tuple(int(b) for b in members) for members in isl),
        methods=tuple(methods),
        feas_residual=feas,
        cs_residual=cs_residual,
    )


def _feasibility_residual(net, in_service, flows, served, generation, isl):
    """Largest constraint violation in MW (balance, limits, bounds)."""
    res = 0.0
    injection = np.zeros(net.n_buses)
    if len(net.generators):
        np.add.at(injection, net.gen_pos, generation)
    injection -= served
    # nodal balance: injection equals net branch outflow at every bus
    out = np.zeros(net.n_buses)
    live = np.flatnonzero(in_service)
    np.add.at(out, net.from_pos[live], flows[live])
    np.add.at(out, net.to_pos[live], -flows[live])
    res = max(res, float(np.abs(injection - out).max(initial=0.0)))
    if live.size:
        over = np.abs(flows[live]) - net.flow_limit[live]
        res = max(res, float(over.max(initial=0.0)))
    res = max(res, float((-generation).max(initial=0.0)))
    if len(net.generators):
        res = max(res, float((generation - net.gen_cap).max(initial=0.0)))
    res = max(res, float((-served).max(initial=0.0)))
    res = max(res, float((served - net.load).max(initial=0.0)))
    tripped = np.flatnonzero(~np.asarray(in_service, dtype=bool))
    if tripped.size:
        res = max(res, float(np.abs(flows[tripped]).max(initial=0.0)))
    return res


def severity(net: Network, in_service: np.ndarray | None = None) -> float:
    """Load shed (MW) of the dispatch at a terminal cascade state."""
    return dispatch(net, in_service).total_shed


class DispatchCache:
    """Memoizes dispatch results by tripped-component bitmask.

    Dispatch is a pure function of the state, so caching is transparent;
    it exists because campaigns revisit the same states constantly.
    """

    def __init__(self, net: Network):
        self.net = net
        self._store: dict[int, DispatchResult] = {}
        self.hits = 0
        self.misses = 0

    def get(self, mask: int) -> DispatchResult:
        result = self._store.get(mask)
        if result is None:
            self.misses += 1
            result = dispatch(self.net, in_service_bool(mask, self.net.n_branches))
            self._store[mask] = result
        else:
            self.hits += 1
        return result

    def __len__(self) -> int:
        return len(self._store)
