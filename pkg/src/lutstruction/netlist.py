"""LUT-level netlists: BLIF front end, oracle evaluation, LUT4_4 packing.

Truth tables use the fabric convention: for a node with ordered inputs
``i0..i(n-1)`` the entry index is ``sum(i_j << j)``, and ``table`` holds
``2**n`` bits.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (CycleError, ResolutionError, UnsupportedFeatureError,
                     UnsupportedWidthError, NetlistError)

MAX_FANIN = 4
_CANONICAL = re.compile(r"^(rs1|rs2|funct3|rd)\[(\d+)\]$")


def signal_name(kind, index):
    return f"{kind}[{index}]"


def parse_signal(name):
    """``"rs1[3]" -> ("rs1", 3)``; None for non-canonical names."""
    m = _CANONICAL.match(name)
    return (m.group(1), int(m.group(2))) if m else None


@dataclass
class Node:
    name: str
    inputs: tuple
    table: int
    # optional (column, row) placement hint, honoured by the placer when legal
    hint: Optional[tuple] = None

    @property
    def fanin(self):
        return len(self.inputs)

    def evaluate(self, values):
        idx = 0
        for j, v in enumerate(values):
            idx |= (v & 1) << j
        return (self.table >> idx) & 1


@dataclass
class Netlist:
    inputs: list
    outputs: list
    nodes: dict = field(default_factory=dict)
    name: str = "top"

    def __post_init__(self):
        self._order = None

    def add(self, name, inputs, table, hint=None):
        if name in self.nodes or name in self.inputs:
            raise NetlistError(f"duplicate signal {name!r}")
        if len(inputs) > MAX_FANIN:
            raise UnsupportedWidthError(f"node {name!r} has fanin {len(inputs)} > {MAX_FANIN}")
        self.nodes[name] = Node(name, tuple(inputs), int(table) & ((1 << (1 << len(inputs))) - 1),
                                hint)
        self._order = None
        return name

    def validate(self, canonical=False):
        known = set(self.inputs) | set(self.nodes)
        for node in self.nodes.values():
            if node.fanin > MAX_FANIN:
                raise UnsupportedWidthError(f"node {node.name!r} has fanin {node.fanin}")
            for s in node.inputs:
                if s not in known:
                    raise ResolutionError(f"signal {s!r} used by {node.name!r} is undefined")
        for o in self.outputs:
            if o not in known:
                raise ResolutionError(f"output {o!r} is undefined")
        self.topological_order()
        if canonical:
            for s in self.inputs:
                p = parse_signal(s)
                if p is None or p[0] == "rd":
                    raise ResolutionError(f"input {s!r} is not rs1[i]/rs2[i]/funct3[i]")
            for s in self.outputs:
                p = parse_signal(s)
                if p is None or p[0] != "rd":
                    raise ResolutionError(f"output {s!r} is not rd[i]")
        return self

    def topological_order(self):
        if self._order is not None:
            return self._order
        order, state = [], {}
        for root in self.nodes:
            if root in state:
                continue
            stack = [(root, iter(self.nodes[root].inputs))]
            state[root] = 1
            while stack:
                name, it = stack[-1]
                for s in it:
                    if s not in self.nodes:
                        continue
                    st = state.get(s)
                    if st == 1:
                        raise CycleError(f"combinational cycle through {s!r}")
                    if st is None:
                        state[s] = 1
                        stack.append((s, iter(self.nodes[s].inputs)))
                        break
                else:
                    stack.pop()
                    state[name] = 2
                    order.append(name)
        self._order = order
        return order

    def depth(self):
        level = {}
        for name in self.topological_order():
            level[name] = 1 + max((level.get(s, 0) for s in self.nodes[name].inputs), default=0)
        return max((level.get(o, 0) for o in self.outputs), default=0)

    def fanouts(self):
        fo = {s: [] for s in list(self.inputs) + list(self.nodes)}
        for node in self.nodes.values():
            for s in node.inputs:
                fo[s].append(node.name)
        return fo

    def copy(self):
        n = Netlist(list(self.inputs), list(self.outputs), name=self.name)
        n.nodes = {k: Node(v.name, v.inputs, v.table, v.hint) for k, v in self.nodes.items()}
        return n


# ---------------------------------------------------------------- BLIF


def _blif_lines(text):
    pending = ""
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].rstrip()
        if line.endswith("\\"):
            pending += line[:-1] + " "
            continue
        line = (pending + line).strip()
        pending = ""
        if line:
            yield line
    if pending.strip():
        yield pending.strip()


def _cover_to_table(n_in, rows, name):
    if not rows:
        return 0
    out_vals = {r[1] for r in rows}
    if len(out_vals) != 1 or not out_vals <= {"0", "1"}:
        raise NetlistError(f"inconsistent cover output column for {name!r}")
    onset = 0
    for cube, _ in rows:
        if len(cube) != n_in or any(ch not in "01-" for ch in cube):
            raise NetlistError(f"bad cover row {cube!r} for {name!r}")
        for e in range(1 << n_in):
            if all(ch == "-" or int(ch) == (e >> j) & 1 for j, ch in enumerate(cube)):
                onset |= 1 << e
    if out_vals == {"0"}:
        onset = ~onset & ((1 << (1 << n_in)) - 1)
    return onset


def parse_blif(text, canonical=True):
    """Parse the combinational BLIF subset (.model/.inputs/.outputs/.names/.end)."""
    if hasattr(text, "read"):
        text = text.read()
    inputs, outputs, blocks = [], [], []
    model = None
    current = None
    ended = False
    for line in _blif_lines(text):
        if line.startswith("."):
            tok = line.split()
            kw = tok[0]
            current = None
            if kw == ".model":
                if model is not None:
                    raise UnsupportedFeatureError("multiple .model bodies")
                model = tok[1] if len(tok) > 1 else "top"
            elif kw == ".inputs":
                inputs.extend(tok[1:])
            elif kw == ".outputs":
                outputs.extend(tok[1:])
            elif kw == ".names":
                if len(tok) < 2:
                    raise NetlistError(".names without an output")
                ins, out = tok[1:-1], tok[-1]
                if len(ins) > MAX_FANIN:
                    raise UnsupportedWidthError(f".names {out} has {len(ins)} inputs")
                current = (ins, out, [])
                blocks.append(current)
            elif kw == ".end":
                ended = True
            elif kw in (".latch", ".subckt", ".gate", ".mlatch", ".exdc", ".clock"):
                raise UnsupportedFeatureError(f"{kw} is not supported (combinational only)")
            else:
                raise UnsupportedFeatureError(f"unknown directive {kw}")
        else:
            if ended:
                raise UnsupportedFeatureError("content after .end")
            if current is None:
                raise NetlistError(f"cover row outside .names: {line!r}")
            parts = line.split()
            ins = current[0]
            if not ins:
                if len(parts) != 1:
                    raise NetlistError(f"bad constant row {line!r}")
                current[2].append(("", parts[0]))
            else:
                if len(parts) != 2:
                    raise NetlistError(f"bad cover row {line!r}")
                current[2].append((parts[0], parts[1]))
    n = Netlist(inputs, outputs, name=model or "top")
    for ins, out, rows in blocks:
        n.add(out, ins, _cover_to_table(len(ins), rows, out))
    return n.validate(canonical=canonical)


def serialize_blif(n):
    lines = [f".model {n.name}", ".inputs " + " ".join(n.inputs),
             ".outputs " + " ".join(n.outputs)]
    for name in n.topological_order():
        node = n.nodes[name]
        lines.append(".names " + " ".join(node.inputs + (name,)))
        k = node.fanin
        for e in range(1 << k):
            if (node.table >> e) & 1:
                cube = "".join(str((e >> j) & 1) for j in range(k))
                lines.append(f"{cube} 1" if k else "1")
    lines.append(".end")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- evaluation


def eval_netlist(n, assignment):
    """Evaluate outputs given ``{input: bit}``; values may be numpy arrays."""
    vals = {}
    for s in n.inputs:
        if s not in assignment:
            raise ResolutionError(f"no value for input {s!r}")
        vals[s] = np.asarray(assignment[s]).astype(np.uint8) & 1
    for name in n.topological_order():
        node = n.nodes[name]
        idx = 0
        for j, s in enumerate(node.inputs):
            idx = idx | (vals[s].astype(np.uint32) << j)
        vals[name] = ((np.uint32(node.table) >> np.asarray(idx, dtype=np.uint32)) & 1).astype(np.uint8)
    shape = np.broadcast_shapes(*(vals[s].shape for s in n.inputs)) if n.inputs else ()
    return {o: np.broadcast_to(vals[o], shape).copy() if vals[o].shape != shape else vals[o]
            for o in n.outputs}


def word_assignment(n, rs1, rs2=0, funct3=0):
    src = {"rs1": np.asarray(rs1, dtype=np.uint64), "rs2": np.asarray(rs2, dtype=np.uint64),
           "funct3": np.asarray(funct3, dtype=np.uint64)}
    out = {}
    for s in n.inputs:
        kind, i = parse_signal(s)
        out[s] = ((src[kind] >> np.uint64(i)) & np.uint64(1)).astype(np.uint8)
    return out


def eval_words(n, rs1, rs2=0, funct3=0):
    """Integer rd for integer (or array) operands of a canonical netlist."""
    outs = eval_netlist(n, word_assignment(n, rs1, rs2, funct3))
    shape = np.broadcast(np.asarray(rs1), np.asarray(rs2), np.asarray(funct3)).shape
    rd = np.zeros(shape, dtype=np.uint64)
    for o, v in outs.items():
        rd |= np.asarray(v).astype(np.uint64) << np.uint64(parse_signal(o)[1])
    return rd


# ---------------------------------------------------------------- packing


@dataclass
class PackedCell:
    nodes: list
    inputs: list
    hint: Optional[tuple] = None


@dataclass
class PackedNetlist:
    netlist: Netlist
    cells: list
    node_cell: dict

    def cell_sources(self, idx):
        """Producer cell indices feeding cell ``idx``."""
        return sorted({self.node_cell[s] for s in self.cells[idx].inputs if s in self.node_cell})

    def nets(self):
        """{signal: [consumer cell indices]} for every signal read by a cell."""
        nets = {}
        for i, cell in enumerate(self.cells):
            for s in cell.inputs:
                nets.setdefault(s, []).append(i)
        return nets

    def evaluate(self, assignment):
        """Cell-by-cell evaluation (same function as the source netlist)."""
        vals = {s: np.asarray(v).astype(np.uint8) & 1 for s, v in assignment.items()}
        for cell in self.cells:
            ins = [vals[s] for s in cell.inputs]
            for name in cell.nodes:
                node = self.netlist.nodes[name]
                idx = 0
                for j, s in enumerate(node.inputs):
                    idx = idx | (ins[cell.inputs.index(s)].astype(np.uint32) << j)
                vals[name] = ((np.uint32(node.table) >> np.asarray(idx, dtype=np.uint32)) & 1
                              ).astype(np.uint8)
        shape = np.broadcast_shapes(*(np.shape(v) for v in assignment.values()))
        return {o: np.broadcast_to(vals[o], shape).copy() for o in self.netlist.outputs}


def pack(n, require_shared=True):
    """Greedily group nodes into LUT4_4 cells (topological order).

    A node joins an open cell when the union of distinct inputs stays within
    four, the cell has a free output table, hints agree, no cell member is an
    ancestor of the node, every producer of the node sits in an earlier
    cell, and (with ``require_shared``) it shares an input with the cell.
    """
    order = n.topological_order()
    pos = {name: i for i, name in enumerate(order)}
    anc = {}
    for name in order:
        a = 0
        for s in n.nodes[name].inputs:
            if s in pos:
                a |= anc[s] | (1 << pos[s])
        anc[name] = a
    cells, masks, node_cell = [], [], {}
    for name in order:
        node = n.nodes[name]
        ins = list(dict.fromkeys(node.inputs))
        chosen = None
        for ci, cell in enumerate(cells):
            if len(cell.nodes) >= 4 or cell.hint != node.hint:
                continue
            if anc[name] & masks[ci]:
                continue
            # keep cell order topological: producers must be earlier cells
            if any(node_cell.get(s, -1) >= ci for s in ins):
                continue
            union = list(dict.fromkeys(cell.inputs + ins))
            if len(union) > MAX_FANIN:
                continue
            if require_shared and cell.inputs and ins and not set(cell.inputs) & set(ins):
                continue
            chosen = ci
            break
        if chosen is None:
            cells.append(PackedCell([name], ins, node.hint))
            masks.append(1 << pos[name])
            node_cell[name] = len(cells) - 1
        else:
            cell = cells[chosen]
            cell.nodes.append(name)
            cell.inputs = list(dict.fromkeys(cell.inputs + ins))
            masks[chosen] |= 1 << pos[name]
            node_cell[name] = chosen
    return PackedNetlist(n, cells, node_cell)


# ---------------------------------------------------------------- transforms


def simplify(n):
    """Fold constant nodes into their readers and drop logic nobody reads.

    Returns ``(netlist, constants)`` where ``constants`` maps output names
    that became constant to their value; those outputs are removed from the
    returned netlist.
    """
    n = n.copy()
    const = {}
    for name in n.topological_order():
        node = n.nodes[name]
        ins, table = list(node.inputs), node.table
        # substitute constants and duplicate inputs, highest position first
        j = len(ins) - 1
        while j >= 0:
            s = ins[j]
            dup = ins.index(s) < j
            if s in const or dup:
                k = len(ins)
                new = 0
                for e in range(1 << (k - 1)):
                    lo = e & ((1 << j) - 1)
                    hi = e >> j
                    v = const[s] if s in const else (e >> ins.index(s)) & 1
                    full = lo | (v << j) | (hi << (j + 1))
                    new |= ((table >> full) & 1) << e
                table = new
                del ins[j]
            j -= 1
        # drop inputs the function ignores
        j = len(ins) - 1
        while j >= 0:
            k = len(ins)
            lo_t = hi_t = 0
            for e in range(1 << (k - 1)):
                lo = e & ((1 << j) - 1)
                hi = e >> j
                a = lo | (hi << (j + 1))
                lo_t |= ((table >> a) & 1) << e
                hi_t |= ((table >> (a | (1 << j))) & 1) << e
            if lo_t == hi_t:
                table = lo_t
                del ins[j]
            j -= 1
        node.inputs, node.table = tuple(ins), table
        if not ins:
            const[name] = table & 1
    live, stack = set(), [o for o in n.outputs if o in n.nodes and o not in const]
    while stack:
        s = stack.pop()
        if s in live or s not in n.nodes:
            continue
        live.add(s)
        stack.extend(n.nodes[s].inputs)
    n.nodes = {k: v for k, v in n.nodes.items() if k in live}
    n._order = None
    out_const = {o: const[o] for o in n.outputs if o in const}
    n.outputs = [o for o in n.outputs if o not in out_const]
    return n, out_const
