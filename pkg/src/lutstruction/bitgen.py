"""Bitstream generation: injection ordering, zigzag compensation, interleaving.

Within each of the P segments, columns are emitted right to left, 16 words
per column.  Word ``k`` of column ``d`` carries config bits ``4k..4k+3`` of
every row (lane ``4r+s`` holds bit ``4k+s`` of cell (d, r)).  Because a word
reaches column ``d`` only after crossing the bypass columns between the
segment's injection column and ``d``, each word is pre-permuted by the
inverse of that crossing.  The P per-segment words of one cycle are
concatenated (segment 0 in the low bits) into one payload word.

File format (``.luts``)
-----------------------
16-byte header ``b"LUTS"``, version, W, Y, S, P (u8 each), 7 reserved zero
bytes; then the payload words in injection order, each packed LSB-first
(lane 0 of segment 0 is bit 0 of the word's first byte) and zero-padded
to a whole byte when 4W*P is not a multiple of eight.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import EncodeError, FormatError, LayoutError
from .fabric import (WORDS_PER_COLUMN, FabricConfig, FabricParams, apply_permutation,
                     bypass_permutation, invert)

MAGIC = b"LUTS"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sBBBBB7x")
LIBRARY_BASE = 0x100000
LIBRARY_SLOTS = 128
SLOT_BYTES = 8192


@dataclass(frozen=True)
class BitstreamHeader:
    width: int
    depth: int
    reg_spacing: int
    config_parallelism: int
    version: int = FORMAT_VERSION

    @property
    def params(self):
        return FabricParams(self.width, self.depth, self.reg_spacing, self.config_parallelism)


class Bitstream:
    """Header plus payload bits of shape (n_words, 4W*P)."""

    def __init__(self, header, payload):
        self.header = header
        self.payload = np.asarray(payload, dtype=np.uint8)

    @property
    def params(self):
        return self.header.params

    @property
    def n_words(self):
        return self.payload.shape[0]

    @property
    def word_bits(self):
        return self.payload.shape[1]

    @property
    def payload_bits(self):
        return int(self.payload.size)

    def payload_bytes(self):
        return np.packbits(self.payload, axis=1, bitorder="little").tobytes()

    def __eq__(self, other):
        return (isinstance(other, Bitstream) and self.header == other.header
                and np.array_equal(self.payload, other.payload))

    def __repr__(self):
        return f"Bitstream({self.header}, words={self.n_words}x{self.word_bits})"


def compensation_permutation(params, dest_column):
    """Pre-permutation for words bound for ``dest_column`` (dest-array form).

    It is the inverse of the bypass crossing from the segment's injection
    column to ``dest_column``, so applying it and then the crossing gives
    the identity.
    """
    seg = params.segment_columns
    start = (dest_column // seg) * seg
    return invert(bypass_permutation(params, start, dest_column))


def column_words(cfg, column):
    """The 16 raw (uncompensated) 4W-bit words of one column."""
    bits = cfg.cell_bits()[column]                       # (W,) uint64
    pos = np.arange(64, dtype=np.uint64)
    cellbits = ((bits[:, None] >> pos) & np.uint64(1)).astype(np.uint8)   # (W, 64)
    # word k, lane 4r+s  <-  bit 4k+s of row r
    return cellbits.reshape(-1, WORDS_PER_COLUMN, 4).transpose(1, 0, 2).reshape(
        WORDS_PER_COLUMN, -1)


def encode(cfg, params=None):
    params = params or cfg.params
    if cfg.params.width != params.width or cfg.params.depth != params.depth:
        raise EncodeError("configuration does not match parameters")
    if not cfg.fully_programmed:
        raise EncodeError(f"{int((~cfg.programmed).sum())} cells are in bypass mode")
    seg, p = params.segment_columns, params.config_parallelism
    nl = params.n_lanes
    payload = np.zeros((params.n_words, nl * p), dtype=np.uint8)
    for j in range(p):
        start = j * seg
        t = 0
        for d in range(start + seg - 1, start - 1, -1):
            comp = compensation_permutation(params, d)
            words = column_words(cfg, d)
            payload[t:t + WORDS_PER_COLUMN, j * nl:(j + 1) * nl] = apply_permutation(words, comp)
            t += WORDS_PER_COLUMN
    header = BitstreamHeader(params.width, params.depth, params.reg_spacing,
                             params.config_parallelism)
    return Bitstream(header, payload)


def decode(b):
    h = b.header
    if h.version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {h.version}")
    try:
        params = h.params
    except ValueError as exc:
        raise FormatError(f"bad header: {exc}") from None
    if b.payload.shape != (params.n_words, params.word_bits):
        raise FormatError(
            f"payload {b.payload.shape} != expected {(params.n_words, params.word_bits)}")
    seg, p, nl, w = params.segment_columns, params.config_parallelism, params.n_lanes, params.width
    cell_bits = np.zeros((params.depth, w), dtype=np.uint64)
    for j in range(p):
        start = j * seg
        t = 0
        for d in range(start + seg - 1, start - 1, -1):
            perm = bypass_permutation(params, start, d)
            words = apply_permutation(b.payload[t:t + WORDS_PER_COLUMN, j * nl:(j + 1) * nl], perm)
            bits = words.reshape(WORDS_PER_COLUMN, w, 4).transpose(1, 0, 2).reshape(w, 64)
            cell_bits[d] = (bits.astype(np.uint64) << np.arange(64, dtype=np.uint64)).sum(
                axis=1, dtype=np.uint64)
            t += WORDS_PER_COLUMN
    tables = np.stack([(cell_bits >> np.uint64(16 * t)) & np.uint64(0xFFFF) for t in range(4)],
                      axis=-1).astype(np.uint16)
    return FabricConfig(params, tables, np.ones((params.depth, w), dtype=bool))


def write_bitstream(b):
    h = b.header
    head = HEADER.pack(MAGIC, h.version, h.width, h.depth, h.reg_spacing, h.config_parallelism)
    return head + b.payload_bytes()


def read_bitstream(data):
    data = bytes(data)
    if len(data) < HEADER.size:
        raise FormatError(f"file too short ({len(data)} bytes)")
    magic, version, w, y, s, p = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    header = BitstreamHeader(w, y, s, p, version)
    try:
        params = header.params
    except ValueError as exc:
        raise FormatError(f"bad header: {exc}") from None
    body = data[HEADER.size:]
    word_bytes = -(-params.word_bits // 8)
    if len(body) != params.n_words * word_bytes:
        raise FormatError(f"payload is {len(body)} bytes, expected {params.n_words * word_bytes}")
    raw = np.frombuffer(body, dtype=np.uint8).reshape(params.n_words, word_bytes)
    bits = np.unpackbits(raw, axis=1, bitorder="little")
    if bits[:, params.word_bits:].any():
        raise FormatError("nonzero padding bits after a payload word")
    return Bitstream(header, bits[:, :params.word_bits])


def save_bitstream(b, path):
    with open(path, "wb") as fh:
        fh.write(write_bitstream(b))


def load_bitstream_file(path):
    with open(path, "rb") as fh:
        return read_bitstream(fh.read())


def deinterleave(b):
    """{column: (16, 4W) decompensated words} regardless of P."""
    params = b.params
    seg, nl = params.segment_columns, params.n_lanes
    out = {}
    for j in range(params.config_parallelism):
        start = j * seg
        for n, d in enumerate(range(start + seg - 1, start - 1, -1)):
            chunk = b.payload[n * WORDS_PER_COLUMN:(n + 1) * WORDS_PER_COLUMN, j * nl:(j + 1) * nl]
            out[d] = apply_permutation(chunk, bypass_permutation(params, start, d))
    return out


# ---------------------------------------------------------------- library image


@dataclass
class LibraryImage:
    base: int
    data: bytes
    names: dict
    slot_bytes: int = SLOT_BYTES

    def address_of(self, funct7):
        return library_address(funct7, self.base, self.slot_bytes)

    def payload(self, funct7):
        off = funct7 * self.slot_bytes
        return self.data[off:off + self.slot_bytes]

    def manifest(self):
        return json.dumps({"base": hex(self.base), "slot_bytes": self.slot_bytes,
                           "entries": {str(k): v for k, v in sorted(self.names.items())}},
                          indent=2)


def library_address(funct7, base=LIBRARY_BASE, slot_bytes=SLOT_BYTES):
    if not 0 <= funct7 < LIBRARY_SLOTS:
        raise LayoutError(f"funct7 {funct7} outside [0, {LIBRARY_SLOTS})")
    return base + funct7 * slot_bytes


def build_library_image(bitstreams, base_address=LIBRARY_BASE, names=None,
                        slot_bytes=SLOT_BYTES):
    """Lay out headerless payloads at ``base + funct7 * slot_bytes``.

    ``bitstreams`` is a sequence (index = funct7) or a {funct7: bitstream}
    mapping; None entries and missing slots are zero-filled.
    """
    if not isinstance(bitstreams, dict):
        bitstreams = dict(enumerate(bitstreams))
    if len(bitstreams) > LIBRARY_SLOTS or any(not 0 <= k < LIBRARY_SLOTS for k in bitstreams):
        raise LayoutError(f"library holds at most {LIBRARY_SLOTS} bitstreams indexed by funct7")
    image = bytearray(LIBRARY_SLOTS * slot_bytes)
    entries = {}
    for f7, b in bitstreams.items():
        if b is None:
            continue
        raw = b.payload_bytes() if isinstance(b, Bitstream) else bytes(b)
        if len(raw) != slot_bytes:
            raise LayoutError(f"funct7 {f7}: payload is {len(raw)} bytes, need {slot_bytes}")
        image[f7 * slot_bytes:(f7 + 1) * slot_bytes] = raw
        entries[f7] = (names or {}).get(f7, f"reconf{f7:03d}")
    return LibraryImage(base_address, bytes(image), entries, slot_bytes)
