"""Placement and routing of packed netlists onto the fabric.

Routing resources are cell output tables: every output port of every cell
drives exactly one input wire of the next column, so a net occupies one
output port per column it crosses.  A signal present on any input wire of a
cell can be forwarded on any free output table of that cell (projection
table) or replicated on several of them.  Nets are routed with A* over this
port graph and congestion is negotiated PathFinder-style: shared ports get
increasingly expensive until every port carries at most one net.
"""
from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ResolutionError, RoutingError
from .fabric import FabricConfig, PortRef, projection_table, topology_for
from .netlist import pack, parse_signal, simplify

log = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 20


def input_rows(signal, params):
    """Rows whose column-0 input wires carry a primary input."""
    parsed = parse_signal(signal)
    if parsed is None:
        raise ResolutionError(f"{signal!r} is not a fabric input")
    kind, i = parsed
    if kind in ("rs1", "rs2") and i < params.width:
        return [i]
    if kind == "funct3" and i < 3:
        return [r for r in range(params.width) if r % 3 == i]
    raise ResolutionError(f"{signal!r} has no fabric input wire")


def input_port(signal):
    return {"rs1": 0, "rs2": 1, "funct3": 2}[parse_signal(signal)[0]]


def levelize(packed, params):
    """ASAP column of every packed cell (externals sit at column -1)."""
    col = {}
    for i in range(len(packed.cells)):
        srcs = packed.cell_sources(i)
        # sources always have smaller indices: cells are created in topological order
        col[i] = 1 + max((col[s] for s in srcs), default=-1)
    if col and max(col.values()) > params.depth - 1:
        deepest = max(col, key=col.get)
        raise CapacityError(
            f"logic depth {col[deepest] + 1} exceeds fabric depth {params.depth} "
            f"(deepest net {packed.cells[deepest].nodes[0]!r})")
    return col


@dataclass
class Placement:
    params: object
    packed: object
    loc: dict
    outputs: dict = field(default_factory=dict)        # rd row -> driving signal
    const_outputs: dict = field(default_factory=dict)  # rd row -> constant value
    route_through: set = field(default_factory=set)
    unresolved: list = field(default_factory=list)

    def check(self):
        """Raise if two cells overlap or a source is not upstream of its sink."""
        seen = {}
        for i, (c, r) in self.loc.items():
            if (c, r) in seen:
                raise CapacityError(f"cells {seen[(c, r)]} and {i} both at {(c, r)}")
            seen[(c, r)] = i
            for s in self.packed.cell_sources(i):
                if self.loc[s][0] + 1 > c:
                    raise CapacityError(f"cell {i} at column {c} not after its source {s}")


def _tails(packed):
    consumers = {i: set() for i in range(len(packed.cells))}
    for i in range(len(packed.cells)):
        for s in packed.cell_sources(i):
            consumers[s].add(i)
    tail = {}
    for i in reversed(range(len(packed.cells))):
        tail[i] = 1 + max((tail[j] for j in consumers[i]), default=-1)
    return tail


def place(packed, levels, params, outputs=None, seed=0, jitter=0):
    """Assign (column, row) to every cell.

    Cells are visited in topological order.  A cell can sit at (c, r) only
    if each source reaches it (one row per column hop) and enough columns
    remain for its own consumers and outputs.  Among legal spots the
    placer minimises column plus half the distance to the median of its
    source and output rows; ``jitter`` perturbs that target row.
    Placement hints are honoured when legal.
    """
    w, y = params.width, params.depth
    outputs = outputs or {}
    rng = np.random.default_rng(seed)
    out_rows = {}
    for row, sig in outputs.items():
        if sig in packed.node_cell:
            out_rows.setdefault(packed.node_cell[sig], []).append(row)
    tail = _tails(packed)
    occupied, loc = {}, {}
    for i, cell in enumerate(packed.cells):
        if cell.hint is not None and cell.hint not in occupied:
            c, r = cell.hint
            if 0 <= c < y and 0 <= r < w:
                occupied[(c, r)] = i
                loc[i] = (c, r)

    def lower_bound(i, r):
        lb = 0
        for s in packed.cells[i].inputs:
            if s in packed.node_cell:
                cs, rs = loc[packed.node_cell[s]]
                lb = max(lb, cs + max(1, abs(r - rs)))
            else:
                lb = max(lb, min(abs(r - a) for a in input_rows(s, params)))
        return lb

    def upper_bound(i, r):
        ub = y - 1 - tail[i]
        for o in out_rows.get(i, ()):
            ub = min(ub, y - 1 - abs(o - r))
        return ub

    for i in range(len(packed.cells)):
        if i in loc:
            c, r = loc[i]
            if lower_bound(i, r) <= c <= upper_bound(i, r):
                continue
            del occupied[loc.pop(i)]
        rows = []
        for s in packed.cells[i].inputs:
            rows.extend([loc[packed.node_cell[s]][1]] if s in packed.node_cell
                        else input_rows(s, params)[:1])
        rows.extend(out_rows.get(i, ()))
        target = float(np.median(rows)) if rows else (w - 1) / 2
        if jitter:
            target += rng.integers(-jitter, jitter + 1)
        sink_only = tail[i] == 0 and i in out_rows
        best = None
        for r in range(w):
            lb, ub = lower_bound(i, r), upper_bound(i, r)
            if sink_only:
                # output-only cell: centre it in its window so both the
                # incoming and the outgoing routes keep slack
                free = [c for c in range(lb, ub + 1) if (c, r) not in occupied]
                if not free:
                    continue
                mid = (lb + ub) / 2
                c = min(free, key=lambda cc: (abs(cc - mid), cc))
                cost = (-(ub - lb) + abs(c - mid) + 0.5 * abs(r - target), r)
            else:
                c = lb
                while (c, r) in occupied:
                    c += 1
                if c > ub:
                    continue
                cost = (c + 0.5 * abs(r - target), r)
            if best is None or cost < best[0]:
                best = (cost, (c, r))
        if best is None:
            raise CapacityError(
                f"no legal location for cell holding {packed.cells[i].nodes[0]!r}")
        loc[i] = best[1]
        occupied[best[1]] = i
    p = Placement(params, packed, loc, dict(outputs))
    p.check()
    return p


@dataclass
class RouteResult:
    paths: dict                    # net -> [(out PortRef, in PortRef or None)]
    stats: dict
    port_net: dict = field(default_factory=dict)

    def hops(self):
        for net, path in self.paths.items():
            for hop in path:
                yield net, hop


class _Graph:
    """Port graph: state = cell id ``c*W + r`` plus virtual output states."""

    def __init__(self, params):
        self.params = params
        w, y = params.width, params.depth
        topo = topology_for(params)
        self.n_cells = w * y
        self.succ = np.full(self.n_cells * 4, -1, dtype=np.int64)
        for c in range(y):
            for r in range(w):
                sid = c * w + r
                for k in range(4):
                    if c < y - 1:
                        rr, _ = topo.next_in(c, r, k)
                        self.succ[sid * 4 + k] = (c + 1) * w + rr
                    elif k == 0:
                        self.succ[sid * 4 + k] = self.n_cells + r
        self.succ_list = self.succ.tolist()

    def col_row(self, sid):
        w = self.params.width
        if sid >= self.n_cells:
            return self.params.depth, sid - self.n_cells
        return divmod(sid, w)


def _route_net(g, tree, sink, occ, hist, pres_fac, blocked, forbidden):
    w = g.params.width
    tc, tr = g.col_row(sink)
    # the output pseudo-state is one hop beyond column Y-1 on the same row
    reach_col = tc if sink < g.n_cells else tc - 1
    succ = g.succ_list
    heap, best, parent = [], {}, {}
    for sid in tree:
        if sid >= g.n_cells:
            continue
        c, r = divmod(sid, w)
        if c < tc and abs(r - tr) <= reach_col - c:
            best[sid] = 0.0
            heapq.heappush(heap, (tc - c, 0.0, sid))
    while heap:
        f, gcost, sid = heapq.heappop(heap)
        if sid == sink:
            path = []
            while sid not in tree:
                prev, port = parent[sid]
                path.append((port, sid))
                sid = prev
            return path[::-1]
        if gcost > best.get(sid, np.inf):
            continue
        for k in range(4):
            port = sid * 4 + k
            nxt = succ[port]
            if nxt < 0 or nxt in tree or port in blocked:
                continue
            if nxt >= g.n_cells:
                if nxt != sink:
                    continue
                nc = tc
            else:
                nc, nr = divmod(nxt, w)
                if nc > tc or abs(nr - tr) > reach_col - nc:
                    continue
                if nxt in forbidden and nxt != sink:
                    continue
            cost = gcost + (1.0 + hist[port]) * (1.0 + pres_fac * occ[port])
            if cost < best.get(nxt, np.inf):
                best[nxt] = cost
                parent[nxt] = (sid, port)
                heapq.heappush(heap, (cost + (tc - nc), cost, nxt))
    return None


def _build_nets(placement):
    params, packed = placement.params, placement.packed
    w = params.width
    nets = {}
    for sig, consumers in packed.nets().items():
        nets.setdefault(sig, set()).update(
            loc[0] * w + loc[1] for loc in (placement.loc[i] for i in consumers))
    n_cells = params.n_cells
    for row, sig in placement.outputs.items():
        nets.setdefault(sig, set()).add(n_cells + row)
    out = {}
    for sig, sinks in sorted(nets.items()):
        if sig in packed.node_cell:
            c, r = placement.loc[packed.node_cell[sig]]
            sources = {c * w + r}
        else:
            sources = set(input_rows(sig, params))  # column 0 states
        out[sig] = (sources, sorted(s for s in sinks if s not in sources))
    return out


def route(placement, params, allow_mixed=True, max_iterations=50):
    """Route every net; return (RouteResult, FabricConfig).

    Raises RoutingError naming the offending nets if congestion cannot be
    resolved or a sink is structurally unreachable.
    """
    g = _Graph(params)
    w, y = params.width, params.depth
    nets = _build_nets(placement)
    n_ports = g.n_cells * 4
    occ = np.zeros(n_ports, dtype=np.int64)
    hist = np.zeros(n_ports)
    blocked = {((y - 1) * w + row) * 4 for row in placement.const_outputs}
    logic_cells = {c * w + r for c, r in placement.loc.values()}
    routes = {}
    pres_fac = 0.5
    todo = list(nets)
    for it in range(max_iterations):
        occ_l = occ  # numpy view; indexed per port inside the search
        for sig in todo:
            for port in routes.get(sig, {}).get("ports", ()):
                occ[port] -= 1
            sources, sinks = nets[sig]
            tree = set(sources)
            ports = []
            forbidden = set() if allow_mixed else logic_cells
            occ_list, hist_list = occ_l.tolist(), hist.tolist()
            for sink in sorted(sinks, key=lambda s: (g.col_row(s)[0], s)):
                if sink in tree:
                    continue
                path = _route_net(g, tree, sink, occ_list, hist_list, pres_fac, blocked,
                                  forbidden)
                if path is None:
                    raise RoutingError(f"net {sig!r} cannot reach {g.col_row(sink)}", [sig])
                for port, sid in path:
                    ports.append(port)
                    tree.add(sid)
            for port in ports:
                occ[port] += 1
            routes[sig] = {"ports": ports, "tree": tree}
        over = np.flatnonzero(occ > 1)
        log.debug("route iteration %d: %d overused ports", it, len(over))
        if len(over) == 0:
            break
        hist[over] += occ[over] - 1
        pres_fac *= 1.8
        bad = set(over.tolist())
        todo = [s for s in nets if bad.intersection(routes[s]["ports"])]
    else:
        bad = set(np.flatnonzero(occ > 1).tolist())
        culprits = sorted(s for s in nets if bad.intersection(routes[s]["ports"]))
        raise RoutingError(f"{len(bad)} ports still congested after {max_iterations} "
                           f"iterations; nets {culprits[:5]}", culprits)
    return _emit(placement, params, g, routes, it + 1)


def _node_table(node, in_signals):
    """Remap a node's truth table onto the cell's four input ports."""
    ports = [in_signals.index(s) for s in node.inputs]
    table = 0
    for e in range(16):
        idx = 0
        for j, p in enumerate(ports):
            idx |= ((e >> p) & 1) << j
        table |= ((node.table >> idx) & 1) << e
    return table


def _emit(placement, params, g, routes, iterations):
    w, y = params.width, params.depth
    topo = topology_for(params)
    packed = placement.packed
    port_net = {}
    for sig, rt in routes.items():
        for port in rt["ports"]:
            port_net[port] = sig
    cfg = FabricConfig.constant(params, 0)
    at = {loc: i for i, loc in placement.loc.items()}
    routing_cells, paths = set(), {sig: [] for sig in routes}
    for c in range(y):
        for r in range(w):
            sid = c * w + r
            if c == 0:
                ext = topo.external[r]
                in_sig = [f"{k}[{i}]" if k != "const0" else None for k, i in ext]
            else:
                in_sig = []
                for p in range(4):
                    dr, dp = topo.driver(c, r, p)
                    in_sig.append(port_net.get(((c - 1) * w + dr) * 4 + dp))
            cell = packed.cells[at[(c, r)]] if (c, r) in at else None
            local = set(cell.nodes) if cell else set()
            for k in range(4):
                sig = port_net.get(sid * 4 + k)
                if sig is None:
                    continue
                if sig in local:
                    table = _node_table(packed.netlist.nodes[sig], in_sig)
                else:
                    table = projection_table(in_sig.index(sig))
                    if cell is None:
                        routing_cells.add((c, r))
                cfg.tables[c, r, k] = table
                nxt = g.succ_list[sid * 4 + k]
                if nxt < g.n_cells:
                    nr, nk = topo.next_in(c, r, k)
                    dst = PortRef(c + 1, nr, nk, "input")
                else:
                    dst = None
                paths[sig].append((PortRef(c, r, k, "output"), dst))
    for row, value in placement.const_outputs.items():
        cfg.tables[y - 1, row, 0] = 0xFFFF if value else 0
    placement.route_through = routing_cells
    n_logic = len(placement.loc)
    stats = {
        "cells_logic": n_logic,
        "cells_routing": len(routing_cells),
        "cells_constant": w * y - n_logic - len(routing_cells),
        "max_column": max((c for c, _ in placement.loc.values()), default=-1),
        "route_iterations": iterations,
        "ports_used": len(port_net),
    }
    return RouteResult(paths, stats, port_net), cfg


@dataclass
class CompileResult:
    config: FabricConfig
    stats: dict
    placement: Placement
    route: RouteResult

    def stats_json(self):
        return json.dumps(self.stats, indent=2, sort_keys=True)


def compile_netlist(netlist, params, seed=0, max_iterations=DEFAULT_ITERATIONS,
                    allow_mixed=True):
    """pack -> levelize -> place -> route, re-placing with jitter on failure."""
    netlist.validate(canonical=True)
    simple, const_out = simplify(netlist)
    outputs, const_outputs = {}, {}
    for o in netlist.outputs:
        row = parse_signal(o)[1]
        if row >= params.width:
            raise ResolutionError(f"output {o!r} outside a {params.width}-row fabric")
        if o in const_out:
            const_outputs[row] = const_out[o]
        else:
            outputs[row] = o
    for s in simple.inputs:
        input_rows(s, params)
    packed = pack(simple)
    levels = levelize(packed, params)
    last_error = None
    for it in range(max_iterations):
        try:
            placement = place(packed, levels, params, outputs, seed=seed + it, jitter=it)
            placement.const_outputs = const_outputs
            result, cfg = route(placement, params, allow_mixed=allow_mixed)
        except (RoutingError, CapacityError) as exc:
            log.info("compile attempt %d failed: %s", it, exc)
            last_error = exc
            continue
        stats = dict(result.stats)
        stats.update({
            "netlist": netlist.name,
            "nodes": len(netlist.nodes),
            "nodes_after_simplify": len(simple.nodes),
            "packed_cells": len(packed.cells),
            "depth": levels and max(levels.values()) + 1 or 0,
            "iterations": it + 1,
            "seed": seed,
            "params": {"W": params.width, "Y": params.depth, "S": params.reg_spacing,
                       "P": params.config_parallelism},
        })
        return CompileResult(cfg, stats, placement, result)
    raise last_error


def validate_config(cfg, params, route=None):
    """List legality violations of a configuration (empty list = legal)."""
    problems = []
    if cfg.tables.shape[:2] != (params.depth, params.width):
        return [f"grid shape {cfg.tables.shape[:2]} != {(params.depth, params.width)}"]
    for c, r in zip(*np.nonzero(~cfg.programmed)):
        problems.append(f"cell ({c},{r}) left in bypass mode")
    if route is not None:
        topo = topology_for(params)
        driven = {}
        for net, (src, dst) in route.hops():
            key = (src.column, src.row, src.port)
            if key in driven and driven[key] != net:
                problems.append(f"output {src} drives nets {driven[key]!r} and {net!r}")
            driven[key] = net
            if dst is None:
                if not (src.column == params.depth - 1 and src.port == 0):
                    problems.append(f"hop from {src} leaves the fabric")
                continue
            if dst.column != src.column + 1:
                problems.append(f"input {dst} driven from column {src.column}")
                continue
            if (dst.row, dst.port) != topo.next_in(src.column, src.row, src.port):
                problems.append(f"input {dst} is not wired to {src}")
    return problems
