"""Built-in instruction circuits, generated directly as LUT netlists."""
from __future__ import annotations

import numpy as np

from .errors import CapacityError, ParameterError
from .fabric import FabricParams
from .netlist import Netlist, parse_signal, signal_name

XOR2, AND2, BUF = 0x6, 0x8, 0x2
XOR3, MAJ3 = 0x96, 0xE8


def _mux2_table():
    # inputs (a, b, sel)
    return sum(1 << e for e in range(8) if ((e >> 1) & 1 if (e >> 2) & 1 else e & 1))


MUX2 = _mux2_table()


def gen_popcount(params=None):
    """rd = number of set bits of rs1.

    Built as a skewed ripple counter that sweeps up the fabric: bit 0 of the
    running count climbs one row per column and absorbs two fresh operand
    bits per column, while count bit k trails bit 0 by k rows and absorbs
    the carry of bit k-1 one column later.  Each node carries a placement
    hint for that diagonal layout (used when ``depth >= width``).
    """
    params = params or FabricParams()
    w = params.width
    if w < 4:
        raise ParameterError("popcount needs W >= 4")
    nbits = w.bit_length()
    use_hints = params.depth >= w
    rs1 = [signal_name("rs1", i) for i in range(w)]
    n = Netlist(list(rs1), [signal_name("rd", k) for k in range(nbits)], name="popcount")

    def hint(col, row):
        return (col, row) if use_hints else None

    # bit 0 starts as rs1[W-1] and meets operand bits W-2c and W-1-2c at column c
    value, carries = rs1[w - 1], []
    c = 1
    while True:
        tokens = [j for j in (w - 2 * c, w - 1 - 2 * c) if j >= 0]
        if not tokens:
            break
        ins = [value] + [rs1[j] for j in tokens]
        row = w - 1 - c
        if len(ins) == 3:
            s = n.add(f"b0_s{c}", ins, XOR3, hint(c, row))
            k = n.add(f"b0_c{c}", ins, MAJ3, hint(c, row))
        else:
            s = n.add(f"b0_s{c}", ins, XOR2, hint(c, row))
            k = n.add(f"b0_c{c}", ins, AND2, hint(c, row))
        carries.append((c, k))
        value = s
        c += 1
    finals = [value]
    for bit in range(1, nbits):
        value, new_carries = None, []
        for col, carry in carries:
            if value is None:
                value = carry
                continue
            hc = col + 1
            row = w - 1 - hc + bit
            s = n.add(f"b{bit}_s{hc}", [value, carry], XOR2, hint(hc, row))
            if bit < nbits - 1:
                k = n.add(f"b{bit}_c{hc}", [value, carry], AND2, hint(hc, row))
                new_carries.append((hc, k))
            value = s
        finals.append(value)
        carries = new_carries
    for bit, v in enumerate(finals):
        out = signal_name("rd", bit)
        if v is None:
            n.add(out, [], 0)
        else:
            # rename the final node so the output is driven directly
            node = n.nodes.pop(v) if v in n.nodes else None
            if node is None:
                n.add(out, [v], BUF)
            else:
                n.nodes[out] = node
                node.name = out
                for other in n.nodes.values():
                    other.inputs = tuple(out if s == v else s for s in other.inputs)
            n._order = None
    return n.validate(canonical=True)


def random_permutation(width, seed):
    return [int(v) for v in np.random.default_rng(seed).permutation(width)]


def _check_perm(sigma, width):
    if sorted(int(v) for v in sigma) != list(range(width)):
        raise ParameterError(f"not a permutation of range({width}): {list(sigma)}")


def gen_permute_xor(sigma1, sigma2, width=None):
    """rd[i] = rs1[sigma1[i]] ^ rs2[sigma2[i]]."""
    width = width or len(sigma1)
    _check_perm(sigma1, width)
    _check_perm(sigma2, width)
    ins = [signal_name("rs1", i) for i in range(width)] + [signal_name("rs2", i) for i in range(width)]
    n = Netlist(ins, [signal_name("rd", i) for i in range(width)], name="permute_xor")
    for i in range(width):
        n.add(signal_name("rd", i),
              [signal_name("rs1", int(sigma1[i])), signal_name("rs2", int(sigma2[i]))], XOR2)
    return n.validate(canonical=True)


def gen_identity(width=32, source="rs1"):
    """rd = rs1 (pure routing)."""
    ins = [signal_name(source, i) for i in range(width)]
    n = Netlist(ins, [signal_name("rd", i) for i in range(width)], name="identity")
    for i in range(width):
        n.add(signal_name("rd", i), [ins[i]], BUF)
    return n.validate(canonical=True)


def gen_constant(width=32, value=0):
    n = Netlist([], [signal_name("rd", i) for i in range(width)], name="constant")
    for i in range(width):
        n.add(signal_name("rd", i), [], 1 if (value >> i) & 1 else 0)
    return n.validate(canonical=True)


def gen_funct3_mux(subcircuits):
    """Select among up to eight circuits with funct3.

    Circuit ``k`` answers for ``funct3 mod m == k`` where ``m`` is the next
    power of two >= the circuit count; unused selector values repeat the
    list cyclically.
    """
    subcircuits = list(subcircuits)
    if not subcircuits:
        raise ParameterError("need at least one subcircuit")
    if len(subcircuits) > 8:
        raise CapacityError(f"{len(subcircuits)} subcircuits exceed the 8 funct3 values")
    outputs = []
    for sub in subcircuits:
        outputs.extend(o for o in sub.outputs if o not in outputs)
    outputs.sort(key=lambda o: parse_signal(o)[1])
    levels = max(1, (len(subcircuits) - 1).bit_length()) if len(subcircuits) > 1 else 0
    sel = [signal_name("funct3", b) for b in range(levels)]
    inputs = []
    for sub in subcircuits:
        inputs.extend(s for s in sub.inputs if s not in inputs)
    inputs.extend(s for s in sel if s not in inputs)
    n = Netlist(inputs, outputs, name="funct3_mux")
    drivers = []
    for k, sub in enumerate(subcircuits):
        rename = {name: f"s{k}/{name}" for name in sub.nodes}
        for name in sub.topological_order():
            node = sub.nodes[name]
            n.add(rename[name], [rename.get(s, s) for s in node.inputs], node.table)
        if any(o not in sub.outputs for o in outputs):
            n.add(f"s{k}/zero", [], 0)
        drivers.append({o: rename.get(o, o) if o in sub.outputs else f"s{k}/zero"
                        for o in outputs})
    m = 1 << levels
    for o in outputs:
        vals = [drivers[k % len(subcircuits)][o] for k in range(m)]
        for b in range(levels):
            last = b == levels - 1
            vals = [n.add(o if last else f"mux{b}_{j}/{o}", [vals[2 * j], vals[2 * j + 1], sel[b]],
                          MUX2) for j in range(len(vals) // 2)]
        if levels == 0:
            n.add(o, [vals[0]], BUF)
    return n.validate(canonical=True)


CORPUS = {
    "popcount": lambda params, seed=0: gen_popcount(params),
    "permute_xor": lambda params, seed=0: gen_permute_xor(
        random_permutation(params.width, seed), random_permutation(params.width, seed + 1)),
    "identity": lambda params, seed=0: gen_identity(params.width),
    "constant": lambda params, seed=0: gen_constant(params.width),
}


def corpus_netlist(name, params=None, seed=0):
    params = params or FabricParams()
    try:
        return CORPUS[name](params, seed)
    except KeyError:
        raise ParameterError(f"unknown corpus circuit {name!r}; have {sorted(CORPUS)}") from None
