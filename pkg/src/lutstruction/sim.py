"""Cycle-level simulation of one fabric instance.

Operation mode evaluates configured cells column by column, with pipeline
registers at the stage boundaries given by ``FabricParams.stage_boundary``.
Load mode resets every cell to bypass and streams a bitstream through the
bypass cells, with every column registered, until each column has latched
its 16 configuration words.
"""
from __future__ import annotations

import hashlib

import numpy as np

from .errors import FormatError, NotConfiguredError, ParameterError
from .fabric import (FUNCT3_BITS, WORDS_PER_COLUMN, FabricConfig, bypass_permutation,
                     topology_for)


def external_lanes(params, rs1, rs2=0, funct3=0):
    """(N, 4W) uint8 lane values entering column 0."""
    rs1, rs2, funct3 = np.broadcast_arrays(np.atleast_1d(np.asarray(rs1, dtype=np.uint64)),
                                           np.atleast_1d(np.asarray(rs2, dtype=np.uint64)),
                                           np.atleast_1d(np.asarray(funct3, dtype=np.uint64)))
    w = params.width
    rows = np.arange(w, dtype=np.uint64)
    lanes = np.zeros((rs1.shape[0], w, 4), dtype=np.uint8)
    lanes[:, :, 0] = (rs1[:, None] >> rows) & np.uint64(1)
    lanes[:, :, 1] = (rs2[:, None] >> rows) & np.uint64(1)
    lanes[:, :, 2] = (funct3[:, None] >> (rows % np.uint64(FUNCT3_BITS))) & np.uint64(1)
    return lanes.reshape(rs1.shape[0], 4 * w)


def result_word(params, out_lanes):
    """Pack out0 of every row of the last column into rd integers."""
    bits = out_lanes.reshape(out_lanes.shape[0], params.width, 4)[:, :, 0].astype(np.uint64)
    return (bits << np.arange(params.width, dtype=np.uint64)).sum(axis=1, dtype=np.uint64)


class FabricState:
    """Mutable state of one simulated fabric."""

    def __init__(self, params):
        self.params = params
        self.topology = topology_for(params)
        w, y = params.width, params.depth
        self.tables = np.zeros((y, w, 4), dtype=np.uint16)
        self.programmed = np.zeros((y, w), dtype=bool)
        self.accumulator = np.zeros((y, w), dtype=np.uint64)
        self.load_count = np.zeros((y, w), dtype=np.int64)
        self.cycle = 0
        self._stages = [c for c in range(y) if params.stage_boundary(c)]
        self.pipeline = [None] * len(self._stages)

    # -------------------------------------------------------- configuration

    def reset_to_bypass(self):
        self.tables[:] = 0
        self.programmed[:] = False
        self.accumulator[:] = 0
        self.load_count[:] = 0
        self.pipeline = [None] * len(self._stages)
        return self

    def configure_direct(self, cfg):
        if cfg.tables.shape != self.tables.shape:
            raise ParameterError(
                f"config grid {cfg.tables.shape[:2]} does not fit {self.tables.shape[:2]}")
        self.tables[:] = cfg.tables
        self.programmed[:] = True
        self.pipeline = [None] * len(self._stages)
        return self

    def read_config(self):
        return FabricConfig(self.params, self.tables, self.programmed)

    # -------------------------------------------------------- evaluation

    def _column(self, c, lanes):
        """Outputs of column ``c`` for input lanes (N, 4W)."""
        n = lanes.shape[0]
        w = self.params.width
        grid = lanes.reshape(n, w, 4)
        idx = (grid[:, :, 0] | (grid[:, :, 1] << 1) | (grid[:, :, 2] << 2)
               | (grid[:, :, 3] << 3)).astype(np.uint16)
        out = ((self.tables[c][None, :, :] >> idx[:, :, None]) & 1).astype(np.uint8)
        bypass = ~self.programmed[c]
        if bypass.any():
            out[:, bypass, :] = grid[:, bypass, :]
        return out.reshape(n, 4 * w)

    def _advance(self, c, out):
        """Carry column ``c`` outputs onto the input lanes of column ``c+1``."""
        return out[:, self.topology.src[c]]

    def _run_columns(self, lanes, first, last):
        for c in range(first, last + 1):
            out = self._column(c, lanes)
            lanes = self._advance(c, out) if c < self.params.depth - 1 else out
        return lanes

    def eval_combinational(self, rs1, rs2=0, funct3=0):
        """rd for scalar or array operands, ignoring pipeline registers."""
        if not self.programmed.all():
            raise NotConfiguredError(
                f"{int((~self.programmed).sum())} cells are still in bypass mode")
        scalar = np.ndim(rs1) == 0 and np.ndim(rs2) == 0 and np.ndim(funct3) == 0
        lanes = external_lanes(self.params, rs1, rs2, funct3)
        rd = result_word(self.params, self._run_columns(lanes, 0, self.params.depth - 1))
        return int(rd[0]) if scalar else rd

    @property
    def latency(self):
        return len(self._stages)

    def step_pipelined(self, operands=None):
        """One clock edge in operation mode.

        ``operands`` is ``(rs1, rs2, funct3)`` or None for a bubble.  Returns
        the rd held in the output register after the edge (None = bubble),
        so an input presented at cycle t is visible at cycle t + latency.
        """
        if not self.programmed.all():
            raise NotConfiguredError("fabric is not configured")
        new = [None] * len(self._stages)
        first = 0
        for i, boundary in enumerate(self._stages):
            if i == 0:
                feed = None if operands is None else external_lanes(self.params, *operands)
            else:
                feed = self.pipeline[i - 1]
            new[i] = None if feed is None else self._run_columns(feed, first, boundary)
            first = boundary + 1
        self.pipeline = new
        self.cycle += 1
        last = new[-1]
        return None if last is None else int(result_word(self.params, last)[0])

    def run_pipelined(self, inputs, drain=True):
        """Feed inputs back to back; return [(cycle visible, rd)] for each."""
        results = []
        feed = list(inputs) + ([None] * self.latency if drain else [])
        start = self.cycle
        for operands in feed:
            rd = self.step_pipelined(operands)
            if rd is not None:
                results.append((self.cycle, rd))
        return [(c - start, rd) for c, rd in results]

    # -------------------------------------------------------- loading

    def propagate_bypass(self, word, from_col, to_col):
        """Push one lane word through columns [from_col, to_col) as they stand."""
        lanes = np.asarray(word, dtype=np.uint8)[None, :]
        for c in range(from_col, min(to_col, self.params.depth)):
            out = self._column(c, lanes)
            lanes = self._advance(c, out) if c < self.params.depth - 1 else out
        return lanes[0]

    def load_bitstream(self, bitstream, trace=None):
        """Cycle-accurate configuration load; returns the cycles consumed.

        Each cycle every segment injects one 4W-bit word into the input
        registers of its leftmost column while all other registers shift one
        column right through bypass cells.  The controller latches a word
        into column d when it arrives there; after 16 latches the column
        switches to programmed mode.  ``trace`` may be a list receiving one
        text line per cycle.
        """
        params = self.params
        h = bitstream.header
        if (h.width, h.depth, h.config_parallelism) != (
                params.width, params.depth, params.config_parallelism):
            raise FormatError(f"bitstream header {h} does not match fabric {params}")
        payload = bitstream.payload
        if payload.shape != (params.n_words, params.word_bits):
            raise FormatError(f"payload shape {payload.shape} is wrong for {params}")
        self.reset_to_bypass()
        w, y, p = params.width, params.depth, params.config_parallelism
        seg = params.segment_columns
        nl = params.n_lanes
        n_words = params.n_words
        starts = np.arange(p) * seg
        # gather map: registers of column c take column c-1 bypass outputs
        gather = np.arange(y * nl).reshape(y, nl)
        for c in range(1, y):
            gather[c] = (c - 1) * nl + self.topology.src[c - 1]
        gather = gather.reshape(-1)
        regs = np.zeros(y * nl, dtype=np.uint8)
        offset = np.tile(np.arange(seg), p)                 # column offset within segment
        columns = np.arange(y)
        lane_row = np.arange(w)
        for t in range(n_words):
            self._check_in_flight(t, seg, offset)
            regs = regs[gather]
            words = payload[t].reshape(p, nl)
            regs.reshape(y, nl)[starts] = words
            # word index sitting at each column, and the column it is meant for
            idx = t - offset
            target = seg - 1 - idx // WORDS_PER_COLUMN
            hit = (idx >= 0) & (target == offset)
            latched = columns[hit]
            if len(latched):
                k = (idx[hit] % WORDS_PER_COLUMN).astype(np.uint64)
                grid = regs.reshape(y, w, 4)[latched].astype(np.uint64)
                nib = grid[:, :, 0] | (grid[:, :, 1] << 1) | (grid[:, :, 2] << 2) | (grid[:, :, 3] << 3)
                self.accumulator[latched] |= nib << (k * 4)[:, None]
                self.load_count[latched] += 1
                done = latched[self.load_count[latched, 0] == WORDS_PER_COLUMN]
                for c in done:
                    acc = self.accumulator[c]
                    for tt in range(4):
                        self.tables[c, lane_row, tt] = (acc >> np.uint64(16 * tt)) & np.uint64(0xFFFF)
                    self.programmed[c] = True
            if trace is not None:
                digest = hashlib.sha1(payload[t].tobytes()).hexdigest()[:8]
                trace.append(f"cycle={t} mode=load word={digest} latched={latched.tolist()}")
        self.cycle += n_words
        return n_words

    def _check_in_flight(self, t, seg, offset):
        """Every word still travelling must be crossing bypass columns only."""
        # at the start of cycle t the word at column d (offset o) has index t-1-o
        idx = t - 1 - offset
        live = (idx >= 0) & (idx < self.params.n_words)
        target = seg - 1 - idx // WORDS_PER_COLUMN
        moving = live & (target > offset)
        if (moving & self.programmed[:, 0]).any():
            raise AssertionError(f"cycle {t}: configuration word crossing a programmed column")


def configure_direct(state, cfg):
    return state.configure_direct(cfg)


def reset_to_bypass(state):
    return state.reset_to_bypass()


def fabric_from_config(cfg):
    return FabricState(cfg.params).configure_direct(cfg)


def bypass_check(params, word, from_col, to_col):
    """Reference propagation through a freshly reset fabric (for tests)."""
    state = FabricState(params)
    moved = state.propagate_bypass(word, from_col, to_col)
    perm = bypass_permutation(params, from_col, to_col)
    expected = np.empty_like(np.asarray(word))
    expected[perm] = word
    return moved, expected
