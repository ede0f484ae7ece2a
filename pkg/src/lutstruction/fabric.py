"""Fabric geometry, feed-forward wiring and per-cell configuration state.

A fabric is a grid of ``depth`` columns by ``width`` rows of LUT4_4 cells.
Every cell has four input ports and four output tables (each a 16-entry
truth table over the same four inputs).  Signals only move rightwards: the
outputs of column ``c`` feed the inputs of column ``c + 1``.

Lanes
-----
The 4W wires entering a column are addressed as *lanes*: lane ``4*r + p`` is
the wire entering input port ``p`` of row ``r``.  Wiring between columns is a
permutation of lanes.  Ports 1 and 2 go straight; ports 0 and 3 are the
diagonals and their direction alternates with column parity:

==========  ==============  ==============
column      out0(r)         out3(r)
==========  ==============  ==============
even        in0(r - 1)      in3(r + 1)
odd         in0(r + 1)      in3(r - 1)
==========  ==============  ==============

A diagonal that would leave the grid is reflected onto the other diagonal
port of the same row (even column: ``out0(0) -> in3(0)`` and
``out3(W-1) -> in0(W-1)``), which keeps each boundary a bijection and makes
any two consecutive bypass columns the identity on *all* lanes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterError

TABLE_ENTRIES = 16
TABLES_PER_CELL = 4
BITS_PER_CELL = TABLE_ENTRIES * TABLES_PER_CELL
WORDS_PER_COLUMN = BITS_PER_CELL // 4

BYPASS = "bypass"
PROGRAMMED = "programmed"

# column-0 externals, by input port
EXTERNAL_PORTS = ("rs1", "rs2", "funct3", "const0")
FUNCT3_BITS = 3


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class FabricParams:
    """Geometry and tuning knobs of one fabric instance.

    ``reg_spacing`` (S) defaults to ``depth``, i.e. a single output register.
    """

    width: int = 32
    depth: int = 32
    reg_spacing: Optional[int] = None
    config_parallelism: int = 1

    def __post_init__(self):
        if self.reg_spacing is None:
            object.__setattr__(self, "reg_spacing", self.depth)
        w, y, s, p = self.width, self.depth, self.reg_spacing, self.config_parallelism
        if not all(isinstance(v, (int, np.integer)) for v in (w, y, s, p)):
            raise ParameterError(f"fabric parameters must be integers: {self}")
        if w < 2 or y < 2:
            raise ParameterError(f"need W >= 2 and Y >= 2, got W={w} Y={y}")
        if not 1 <= s <= y:
            raise ParameterError(f"need 1 <= S <= Y, got S={s} Y={y}")
        if not _is_pow2(p) or p > y // 2 or y % p:
            raise ParameterError(
                f"P must be a power of two dividing Y with P <= Y/2, got P={p} Y={y}")

    # short aliases used throughout the package
    @property
    def W(self):
        return self.width

    @property
    def Y(self):
        return self.depth

    @property
    def S(self):
        return self.reg_spacing

    @property
    def P(self):
        return self.config_parallelism

    @property
    def n_cells(self):
        return self.width * self.depth

    @property
    def n_lanes(self):
        return 4 * self.width

    @property
    def bitstream_bits(self):
        return self.n_cells * BITS_PER_CELL

    @property
    def segment_columns(self):
        return self.depth // self.config_parallelism

    @property
    def n_words(self):
        return WORDS_PER_COLUMN * self.segment_columns

    @property
    def word_bits(self):
        return self.n_lanes * self.config_parallelism

    @property
    def load_cycles(self):
        return self.n_words

    @property
    def pipeline_latency(self):
        return -(-self.depth // self.reg_spacing)

    def stage_boundary(self, column):
        """True if ``column`` carries a register in operation mode."""
        return column % self.reg_spacing == self.reg_spacing - 1 or column == self.depth - 1

    def replace(self, **kw):
        d = dict(width=self.width, depth=self.depth, reg_spacing=self.reg_spacing,
                 config_parallelism=self.config_parallelism)
        d.update(kw)
        return FabricParams(**d)


def lane(row, port):
    return 4 * row + port


@dataclass(frozen=True)
class PortRef:
    column: int
    row: int
    port: int
    direction: str  # "input" | "output"

    def __str__(self):
        io = "in" if self.direction == "input" else "out"
        return f"({self.column},{self.row}).{io}{self.port}"


@dataclass(frozen=True)
class CellConfig:
    """Four 16-entry truth tables; table ``t`` entry ``e`` is config bit ``16t+e``."""

    tables: tuple = (0, 0, 0, 0)
    mode: str = BYPASS

    @classmethod
    def from_bits(cls, bits):
        bits = int(bits)
        return cls(tuple((bits >> (16 * t)) & 0xFFFF for t in range(4)), PROGRAMMED)

    @property
    def bits(self):
        return sum(int(t) << (16 * i) for i, t in enumerate(self.tables))


def lut_eval(cell, inputs):
    """Evaluate one cell on a 4-bit input value (bit k = input port k)."""
    if cell.mode == BYPASS:
        return inputs & 0xF
    out = 0
    for k, table in enumerate(cell.tables):
        out |= ((table >> (inputs & 0xF)) & 1) << k
    return out


def projection_table(port):
    """Truth table whose output equals input ``port``."""
    return sum(1 << e for e in range(TABLE_ENTRIES) if (e >> port) & 1)


def bypass_cell_tables():
    return CellConfig(tuple(projection_table(k) for k in range(4)), PROGRAMMED)


class FabricConfig:
    """Y x W grid of cell configurations, stored as arrays.

    ``tables[c, r, t]`` is the 16-bit truth table ``t`` of cell (c, r) and
    ``programmed[c, r]`` is False for cells in bypass mode.
    """

    def __init__(self, params, tables=None, programmed=None):
        self.params = params
        shape = (params.depth, params.width)
        self.tables = (np.zeros(shape + (4,), dtype=np.uint16) if tables is None
                       else np.asarray(tables, dtype=np.uint16).copy())
        self.programmed = (np.zeros(shape, dtype=bool) if programmed is None
                           else np.asarray(programmed, dtype=bool).copy())
        if self.tables.shape != shape + (4,) or self.programmed.shape != shape:
            raise ParameterError(
                f"config grid {self.tables.shape[:2]} does not match params {shape}")

    @classmethod
    def constant(cls, params, value=0):
        t = np.full((params.depth, params.width, 4), 0xFFFF if value else 0, dtype=np.uint16)
        return cls(params, t, np.ones((params.depth, params.width), dtype=bool))

    @classmethod
    def random(cls, params, rng):
        t = rng.integers(0, 1 << 16, size=(params.depth, params.width, 4), dtype=np.uint32)
        return cls(params, t.astype(np.uint16), np.ones((params.depth, params.width), bool))

    def cell(self, column, row):
        mode = PROGRAMMED if self.programmed[column, row] else BYPASS
        return CellConfig(tuple(int(t) for t in self.tables[column, row]), mode)

    def set_cell(self, column, row, cell):
        self.tables[column, row] = cell.tables
        self.programmed[column, row] = cell.mode == PROGRAMMED

    def cell_bits(self):
        """(Y, W) array of uint64 config words."""
        t = self.tables.astype(np.uint64)
        return t[..., 0] | (t[..., 1] << 16) | (t[..., 2] << 32) | (t[..., 3] << 48)

    @property
    def fully_programmed(self):
        return bool(self.programmed.all())

    def copy(self):
        return FabricConfig(self.params, self.tables, self.programmed)

    def __eq__(self, other):
        if not isinstance(other, FabricConfig):
            return NotImplemented
        return (self.params == other.params
                and np.array_equal(self.programmed, other.programmed)
                and np.array_equal(self.tables, other.tables))

    def __repr__(self):
        return (f"FabricConfig({self.params.width}x{self.params.depth}, "
                f"programmed={int(self.programmed.sum())}/{self.params.n_cells})")


def _next_in(params, column, row, port):
    """(row, port) of column+1 driven by out ``port`` of cell (column, row)."""
    w = params.width
    if port in (1, 2):
        return row, port
    even = column % 2 == 0
    step = {0: -1, 3: +1}[port] if even else {0: +1, 3: -1}[port]
    dest = row + step
    if 0 <= dest < w:
        return dest, port
    return row, 3 - port


@dataclass
class WiringTopology:
    """The fixed wiring of a fabric.

    ``dest[c][L]`` is the input lane of column ``c+1`` driven by output lane
    ``L`` of column ``c`` (defined for ``c < Y-1``); ``src`` is its inverse.
    """

    params: FabricParams
    dest: np.ndarray
    src: np.ndarray
    external: list = field(default_factory=list)
    result: list = field(default_factory=list)

    def next_in(self, column, row, port):
        d = int(self.dest[column][lane(row, port)])
        return d // 4, d % 4

    def driver(self, column, row, port):
        """(row, port) of column-1 feeding input ``port`` of (column, row)."""
        s = int(self.src[column - 1][lane(row, port)])
        return s // 4, s % 4

    @property
    def n_wires(self):
        return self.params.n_lanes


def build_topology(params):
    if not isinstance(params, FabricParams):
        raise ParameterError("build_topology expects FabricParams")
    w, y = params.width, params.depth
    dest = np.empty((y - 1, 4 * w), dtype=np.int64)
    for c in range(y - 1):
        for r in range(w):
            for k in range(4):
                rr, kk = _next_in(params, c, r, k)
                dest[c, lane(r, k)] = lane(rr, kk)
    src = np.empty_like(dest)
    for c in range(y - 1):
        src[c, dest[c]] = np.arange(4 * w)
    external = []
    for r in range(w):
        external.append([("rs1", r), ("rs2", r), ("funct3", r % FUNCT3_BITS), ("const0", 0)])
    result = [(y - 1, r, 0) for r in range(w)]
    return WiringTopology(params, dest, src, external, result)


_topology_cache = {}


def topology_for(params):
    topo = _topology_cache.get(params)
    if topo is None:
        topo = _topology_cache[params] = build_topology(params)
    return topo


def compose(first, second):
    """Permutation applying ``first`` then ``second`` (dest-array form)."""
    return second[first]


def invert(perm):
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return inv


def apply_permutation(word, perm):
    """Move bit ``L`` of ``word`` to position ``perm[L]``."""
    word = np.asarray(word)
    out = np.empty_like(word)
    out[..., perm] = word
    return out


def bypass_permutation(params, from_col, to_col):
    """Lane permutation seen by a word crossing bypass columns [from_col, to_col).

    Returned in dest form: bit on lane ``L`` at the inputs of ``from_col``
    ends up on lane ``perm[L]`` at the inputs of ``to_col``.  Crossing the
    last column maps straight onto the output lanes.
    """
    if not 0 <= from_col <= to_col <= params.depth:
        raise ParameterError(f"bad column span [{from_col}, {to_col})")
    topo = topology_for(params)
    perm = np.arange(params.n_lanes)
    for c in range(from_col, min(to_col, params.depth - 1)):
        perm = compose(perm, topo.dest[c])
    return perm
