"""Trace-driven timing model of fabric slots, the bitstream cache and memory.

Timing never looks at operand values, and functional results come from
:mod:`lutstruction.sim`, so the two can be studied separately.

Memory latencies (first beat, per beat, BL1 hit, LLC hit) are model
parameters, not measured values.  IL1/DL1/LLC geometry is carried for
completeness; only the BL1 fill path is timed.
"""
from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields

from .bitgen import LIBRARY_BASE, LIBRARY_SLOTS, SLOT_BYTES
from .errors import AddressRangeError, ParameterError, TraceError
from .fabric import FabricParams

SOFTCORE_OR_MASK = 0x40000000
ICAP_BITS_PER_CYCLE = 32
ICAP_CLOCK_MHZ = 100.0
REFERENCE_CONTROLLER_GBPS = 1.4


@dataclass(frozen=True)
class InstructionWord:
    """R-type custom instruction: funct7 picks the bitstream, funct3 feeds the logic."""

    funct7: int
    funct3: int = 0
    rs1: int = 0
    rs2: int = 0
    rd: int = 0
    opcode: int = 0  # custom-0 .. custom-3

    CUSTOM_OPCODES = (0b0001011, 0b0101011, 0b1011011, 0b1111011)

    def __post_init__(self):
        if not 0 <= self.funct7 < 128:
            raise ParameterError(f"funct7 {self.funct7} outside [0, 128)")
        if not 0 <= self.funct3 < 8:
            raise ParameterError(f"funct3 {self.funct3} outside [0, 8)")
        for name in ("rs1", "rs2", "rd"):
            if not 0 <= getattr(self, name) < 32:
                raise ParameterError(f"{name} must be a register index")
        if not 0 <= self.opcode < 4:
            raise ParameterError("opcode selects custom-0..custom-3")

    def encode(self):
        return (self.funct7 << 25 | self.rs2 << 20 | self.rs1 << 15 | self.funct3 << 12
                | self.rd << 7 | self.CUSTOM_OPCODES[self.opcode])

    @classmethod
    def decode(cls, word):
        op = word & 0x7F
        if op not in cls.CUSTOM_OPCODES:
            raise ParameterError(f"opcode {op:#09b} is not a custom opcode")
        return cls(word >> 25, (word >> 12) & 7, (word >> 15) & 31, (word >> 20) & 31,
                   (word >> 7) & 31, cls.CUSTOM_OPCODES.index(op))


@dataclass
class SystemConfig:
    slots: int = 2
    bl1_sets: int = 16
    bl1_ways: int = 1
    bl1_block_bits: int = 65536
    il1_sets: int = 64
    il1_ways: int = 1
    il1_block_bits: int = 256
    dl1_sets: int = 16
    dl1_ways: int = 4
    dl1_block_bits: int = 256
    llc_sets: int = 16
    llc_ways: int = 4
    llc_block_bits: int = 16384
    inter_cache_bits: int = 256
    core_bl1_bits: int = None
    bl1_hit_latency: int = 2
    llc_hit_latency: int = 8
    mem_first_beat: int = 30
    mem_per_beat: int = 1
    slot_switch_overhead: int = 1
    width: int = 32
    depth: int = 32
    reg_spacing: int = 32
    config_parallelism: int = 16
    clock_mhz: float = 150.0
    library_base: int = LIBRARY_BASE

    def __post_init__(self):
        if self.core_bl1_bits is None:
            self.core_bl1_bits = max(self.inter_cache_bits, 4 * self.width * self.config_parallelism)
        if self.slots < 1:
            raise ParameterError("need at least one slot")
        if self.bl1_sets < 1 or self.bl1_ways < 1:
            raise ParameterError("BL1 needs >= 1 set and way")
        fp = self.fabric  # validates geometry
        if self.bl1_block_bits != fp.bitstream_bits:
            raise ParameterError(
                f"BL1 block ({self.bl1_block_bits} bits) must hold one bitstream "
                f"({fp.bitstream_bits} bits)")

    @property
    def fabric(self):
        return FabricParams(self.width, self.depth, self.reg_spacing, self.config_parallelism)

    @property
    def reconfig_cycles(self):
        return self.fabric.load_cycles

    @property
    def hit_latency(self):
        return self.fabric.pipeline_latency

    @property
    def fill_cycles(self):
        beats = -(-self.bl1_block_bits // self.inter_cache_bits)
        return self.mem_first_beat + beats * self.mem_per_beat

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        if ("config_parallelism" in kw or "width" in kw) and "core_bl1_bits" not in kw:
            d["core_bl1_bits"] = None
        if ("width" in kw or "depth" in kw) and "bl1_block_bits" not in kw:
            d["bl1_block_bits"] = FabricParams(d["width"], d["depth"]).bitstream_bits
        return SystemConfig(**d)

    def to_json(self):
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ParameterError(f"unknown system config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class MemoryMap:
    or_mask: int = SOFTCORE_OR_MASK
    library_base: int = LIBRARY_BASE
    program_start: int = 0x0
    program_size: int = LIBRARY_BASE

    def __post_init__(self):
        lib_end = self.library_base + LIBRARY_SLOTS * SLOT_BYTES
        prog_end = self.program_start + self.program_size
        if self.program_start < lib_end and self.library_base < prog_end:
            raise ParameterError("program region overlaps the bitstream library")

    def library_address(self, funct7):
        return self.library_base + funct7 * SLOT_BYTES


def resolve_address(memmap, address):
    """Softcore address -> physical address (ORed into the upper GiB)."""
    memmap = memmap or MemoryMap()
    if not 0 <= address < (1 << 30):
        raise AddressRangeError(f"softcore address {address:#x} must be below 2**30")
    return address | memmap.or_mask


class Disambiguator:
    """Fabric slots tagged by funct7 with LRU replacement."""

    def __init__(self, slots):
        if slots < 1:
            raise ParameterError("need at least one slot")
        self.slots = slots
        self.tags = OrderedDict()  # funct7 -> slot index, LRU first
        self.free = list(range(slots))

    def lookup(self, funct7):
        """Return ``("hit", slot)`` or ``("miss", victim_slot)`` and update LRU state."""
        if funct7 in self.tags:
            self.tags.move_to_end(funct7)
            return "hit", self.tags[funct7]
        if self.free:
            victim = self.free.pop(0)
        else:
            _, victim = self.tags.popitem(last=False)
        self.tags[funct7] = victim
        return "miss", victim


def slot_lookup(disambiguator, funct7):
    return disambiguator.lookup(funct7)


class BitstreamCache:
    """Read-only set-associative cache of whole bitstreams (LRU per set)."""

    def __init__(self, config=None):
        self.config = config or SystemConfig()
        self.sets, self.ways = self.config.bl1_sets, self.config.bl1_ways
        self.lines = [OrderedDict() for _ in range(self.sets)]
        self.hits = self.misses = 0

    def access(self, funct7, memmap=None):
        """Return (hit, cycles) for fetching the bitstream of ``funct7``."""
        config = self.config
        memmap = memmap or MemoryMap(library_base=config.library_base)
        tag = memmap.library_address(funct7)
        line = self.lines[funct7 % self.sets]
        if tag in line:
            line.move_to_end(tag)
            self.hits += 1
            return True, config.bl1_hit_latency
        self.misses += 1
        if len(line) >= self.ways:
            line.popitem(last=False)
        line[tag] = True
        return False, config.bl1_hit_latency + config.fill_cycles


def bl1_access(cache, funct7, memmap=None):
    return cache.access(funct7, memmap)


@dataclass
class Trace:
    calls: list = field(default_factory=list)   # InstructionWord per invocation
    overhead: int = 0                           # cycles between calls
    name: str = ""

    def __len__(self):
        return len(self.calls)


@dataclass
class RunStats:
    invocations: int = 0
    total_cycles: int = 0
    slot_hits: int = 0
    slot_misses: int = 0
    bl1_hits: int = 0
    bl1_misses: int = 0
    reconfig_cycles: int = 0
    fill_cycles: int = 0
    overhead_cycles: int = 0
    execute_cycles: int = 0
    per_call: list = field(default_factory=list, repr=False)

    def summary(self, config):
        bits = self.slot_misses * config.bl1_block_bits
        secs = self.reconfig_cycles / (config.clock_mhz * 1e6) if self.reconfig_cycles else 0.0
        d = {k: v for k, v in asdict(self).items() if k != "per_call"}
        d["reconfig_cycles_per_miss"] = (self.reconfig_cycles // self.slot_misses
                                         if self.slot_misses else 0)
        d["achieved_config_GBps"] = bits / 8 / secs / 1e9 if secs else 0.0
        return d

    def to_json(self, config):
        return json.dumps(self.summary(config), indent=2, sort_keys=True)


def execute_trace(trace, config, library=None):
    """Time a trace; ``library`` is the set of funct7 values with a bitstream.

    Per call: a slot hit costs the pipeline latency, or a single issue cycle
    when it directly follows a call of the same funct7; a slot miss costs
    the BL1 access (plus fill on a BL1 miss), the full reconfiguration, the
    slot switch and then the pipeline latency.  The inter-call overhead is
    added to every call.
    """
    slots = Disambiguator(config.slots)
    bl1 = BitstreamCache(config)
    memmap = MemoryMap(library_base=config.library_base)
    stats = RunStats()
    prev = None
    for call in trace.calls:
        f7 = call.funct7
        if library is not None and f7 not in library:
            raise TraceError(f"funct7 {f7} has no bitstream in the library")
        kind, _ = slots.lookup(f7)
        if kind == "hit":
            stats.slot_hits += 1
            cost = 1 if prev == f7 else config.hit_latency
            stats.execute_cycles += cost
        else:
            stats.slot_misses += 1
            hit, fetch = bl1.access(f7, memmap)
            if hit:
                stats.bl1_hits += 1
            else:
                stats.bl1_misses += 1
                stats.fill_cycles += config.fill_cycles
            stats.reconfig_cycles += config.reconfig_cycles
            stats.execute_cycles += config.hit_latency
            cost = fetch + config.reconfig_cycles + config.slot_switch_overhead + config.hit_latency
        cost += trace.overhead
        stats.overhead_cycles += trace.overhead
        stats.per_call.append(cost)
        stats.total_cycles += cost
        prev = f7
    stats.invocations = len(trace.calls)
    return stats


DEFAULT_LIBRARY = {"popcount": 0, "permute_xor": 1}


def make_benchmark_trace(kind, n, config=None, library=None, overhead=0):
    """popcount / permute_xor: n calls of one funct7; interleaved: n alternating pairs."""
    library = library or DEFAULT_LIBRARY
    missing = [k for k in ("popcount", "permute_xor") if k not in library]
    if missing:
        raise TraceError(f"library lacks {missing}")
    a, b = library["popcount"], library["permute_xor"]
    if kind == "popcount":
        calls = [InstructionWord(a) for _ in range(n)]
    elif kind == "permute_xor":
        calls = [InstructionWord(b) for _ in range(n)]
    elif kind == "interleaved":
        calls = [InstructionWord(f) for _ in range(n) for f in (a, b)]
    else:
        raise TraceError(f"unknown benchmark {kind!r}")
    return Trace(calls, overhead, kind)


def bandwidth_report(config, reference_gbps=REFERENCE_CONTROLLER_GBPS):
    fp = config.fabric
    bits_per_cycle = fp.n_lanes * fp.config_parallelism
    gbps = bits_per_cycle / 8 * config.clock_mhz * 1e6 / 1e9
    icap_cycles = fp.bitstream_bits // ICAP_BITS_PER_CYCLE
    return {
        "config_bits_per_cycle": bits_per_cycle,
        "clock_mhz": config.clock_mhz,
        "config_bandwidth_GBps": gbps,
        "reference_GBps": reference_gbps,
        "speedup_vs_reference": gbps / reference_gbps,
        "bitstream_bits": fp.bitstream_bits,
        "reconfig_cycles": fp.load_cycles,
        "reconfig_us": fp.load_cycles / config.clock_mhz,
        "icap_bits_per_cycle": ICAP_BITS_PER_CYCLE,
        "icap_cycles": icap_cycles,
        "icap_us": icap_cycles / ICAP_CLOCK_MHZ,
        "hit_latency_cycles": fp.pipeline_latency,
        "model_parameters": {
            "bl1_hit_latency": config.bl1_hit_latency,
            "mem_first_beat": config.mem_first_beat,
            "mem_per_beat": config.mem_per_beat,
        },
    }
