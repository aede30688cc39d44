#!/usr/bin/env python3
"""Generate the bundled 300-bus study case.

The system is synthetic but deterministic: ten 30-bus regions arranged in
a ring, each region a partial 5 x 6 grid mesh, joined by three tie lines
per adjacent pair plus two long chords across the ring.  Region 9 is
generation-poor and region 0 generation-rich, so the ring carries heavy
transfers at base case and tie losses reroute flow onto neighbours.

Branch limits are derived from the intact-system dispatch computed with
this package's own DC model: internal branches get 30 percent headroom,
tie lines 20 percent.  Total load is exactly 24000 MW against 30000 MW
of capacity spread over 69 units.

Run from the repository root:

    python3 scripts/build_case300.py

Rewrites src/cascademc/cases/case300.json in place.  The output is a
pure function of this script; rerunning it must not change the file.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from cascademc.dc_power import dispatch  # noqa: E402
from cascademc.grid_model import network_from_dict  # noqa: E402

N_REGIONS = 10
ROWS, COLS = 5, 6
PER_REGION = ROWS * COLS  # 30
TOTAL_LOAD = 24000
TOTAL_CAP = 30000


def bus_id(region: int, row: int, col: int) -> int:
    return region * PER_REGION + row * COLS + col + 1


def build() -> dict:
    buses = []
    branches = []
    generators = []

    # --- internal mesh: all west-east edges, north-south edges on even
    # columns only, one diagonal brace per region
    for r in range(N_REGIONS):
        for row in range(ROWS):
            for col in range(COLS - 1):
                branches.append((bus_id(r, row, col), bus_id(r, row, col + 1), 0.2))
        for row in range(ROWS - 1):
            for col in (0, 2, 4):
                branches.append((bus_id(r, row, col), bus_id(r, row + 1, col), 0.25))
        branches.append((bus_id(r, 0, 1), bus_id(r, 1, 2), 0.3))

    # --- ring ties: three per adjacent region pair
    tie_first = len(branches)
    for r in range(N_REGIONS):
        nxt = (r + 1) % N_REGIONS
        for row in (0, 2, 4):
            branches.append((bus_id(r, row, COLS - 1), bus_id(nxt, row, 0), 0.5))

    # --- two long chords across the ring
    branches.append((bus_id(0, 2, 3), bus_id(5, 2, 2), 0.8))
    branches.append((bus_id(2, 2, 3), bus_id(7, 2, 2), 0.8))
    n_ties = len(branches) - tie_first

    # --- generators: 69 units.  Regions 0-8 get seven units each at fixed
    # grid positions; region 9 gets six small peakers.  Region 0 is
    # oversized and region 9 undersized to force ring transfers.
    gen_spots = [(0, 0), (0, 3), (1, 1), (2, 4), (3, 0), (4, 2), (4, 5)]
    region_cap = {0: 5600, 1: 3600, 2: 3400, 3: 3200, 4: 3200,
                  5: 3200, 6: 3200, 7: 2600, 8: 1400, 9: 600}
    assert sum(region_cap.values()) == TOTAL_CAP
    unit_split = [0.25, 0.2, 0.15, 0.15, 0.1, 0.1, 0.05]
    gid = 0
    for r in range(N_REGIONS):
        spots = gen_spots if r < 9 else gen_spots[:6]
        split = unit_split if r < 9 else [s / 0.95 for s in unit_split[:6]]
        total = region_cap[r]
        caps = [round(total * s, 1) for s in split]
        caps[0] += round(total - sum(caps), 1)  # absorb rounding
        for (row, col), cap in zip(spots, caps):
            gid += 1
            generators.append(
                {"id": f"g{gid:02d}", "bus": bus_id(r, row, col), "capacity_mw": cap}
            )
    assert gid == 69

    # --- loads: deterministic pattern over non-generator buses, integers
    # scaled to sum exactly to TOTAL_LOAD.  Region 9 is load-heavy.
    gen_buses = {g["bus"] for g in generators}
    raw = {}
    for r in range(N_REGIONS):
        heaviness = 1.6 if r == 9 else (0.7 if r == 0 else 1.0)
        for row in range(ROWS):
            for col in range(COLS):
                b = bus_id(r, row, col)
                if b in gen_buses:
                    continue
                # fixed quasi-random pattern, nothing magic about the primes
                jitter = ((b * 7919 + 104729) % 97) / 97.0
                raw[b] = heaviness * (0.5 + jitter)
    scale = TOTAL_LOAD / sum(raw.values())
    loads = {b: max(1, round(v * scale)) for b, v in raw.items()}
    # force the exact total onto the largest load
    gap = TOTAL_LOAD - sum(loads.values())
    biggest = max(loads, key=lambda b: (loads[b], b))
    loads[biggest] += gap
    assert sum(loads.values()) == TOTAL_LOAD

    for b in range(1, N_REGIONS * PER_REGION + 1):
        buses.append({"id": b, "load_mw": float(loads.get(b, 0))})

    branch_dicts = [
        {
            "id": f"b{i:03d}",
            "from_bus": f,
            "to_bus": t,
            "reactance": x,
            "flow_limit_mw": 1.0,  # placeholder, set from base flows below
        }
        for i, (f, t, x) in enumerate(branches)
    ]

    case = {
        "name": "case300",
        "base_mva": 100.0,
        "buses": buses,
        "branches": branch_dicts,
        "generators": generators,
    }

    # --- derive limits from the intact dispatch
    probe = dict(case)
    probe["branches"] = [dict(b, flow_limit_mw=math.inf) for b in branch_dicts]
    net = network_from_dict(probe)
    base = dispatch(net)
    if base.total_shed != 0.0:
        raise SystemExit(f"intact dispatch sheds {base.total_shed} MW; bad topology")

    order = {br.id: k for k, br in enumerate(net.branches)}
    for i, b in enumerate(branch_dicts):
        flow = abs(base.flows[order[b["id"]]])
        is_tie = i >= tie_first
        # internal branches get enough headroom that redispatch after tie
        # losses binds on the ring, not inside a region; cascades then
        # walk the tie ladder where every step cuts real import capacity
        margin = 1.4 if is_tie else 2.2
        floor = 150.0 if is_tie else 120.0
        b["flow_limit_mw"] = max(floor, 5.0 * math.ceil(margin * flow / 5.0))

    # sanity: intact case has strictly positive margin everywhere
    net = network_from_dict(case)
    final = dispatch(net)
    if final.total_shed != 0.0:
        raise SystemExit("limits clipped the base case")
    util = np.abs(final.flows) / net.flow_limit
    print(f"buses={len(buses)} branches={len(branch_dicts)} (ties={n_ties}) gens={gid}")
    print(f"total load={sum(loads.values())} MW, capacity={TOTAL_CAP} MW")
    print(f"max utilization={util.max():.3f}, mean={util.mean():.3f}")
    flows_by_tie = sorted(
        (abs(final.flows[order[b['id']]]), b["id"]) for b in branch_dicts[tie_first:]
    )
    print("heaviest ties:", [(bid, round(f, 1)) for f, bid in flows_by_tie[-5:]])
    return case


def main() -> None:
    case = build()
    out = REPO / "src" / "cascademc" / "cases" / "case300.json"
    with open(out, "w") as fh:
        json.dump(case, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
