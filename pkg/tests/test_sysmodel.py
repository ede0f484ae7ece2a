import json

import pytest
from hypothesis import given, settings, strategies as st

from lutstruction.errors import AddressRangeError, ParameterError, TraceError
from lutstruction.sysmodel import (BitstreamCache, Disambiguator, InstructionWord, MemoryMap,
                                   SystemConfig, Trace, bandwidth_report, bl1_access,
                                   execute_trace, make_benchmark_trace, resolve_address,
                                   slot_lookup)

PS = (1, 2, 4, 8, 16)


def calls(seq, f3=0):
    return Trace([InstructionWord(f, f3) for f in seq])


def misses(slots, seq):
    d = Disambiguator(slots)
    return sum(slot_lookup(d, f)[0] == "miss" for f in seq)


def lru_reference(slots, seq):
    """Independent LRU: a list ordered from least to most recently used."""
    cache, count = [], 0
    for f in seq:
        if f in cache:
            cache.remove(f)
        else:
            count += 1
            if len(cache) == slots:
                cache.pop(0)
        cache.append(f)
    return count


# ---------------------------------------------------------------- types


def test_instruction_word_fields():
    iw = InstructionWord(funct7=5, funct3=3, rs1=1, rs2=2, rd=3, opcode=1)
    assert InstructionWord.decode(iw.encode()) == iw
    assert iw.encode() & 0x7F == 0b0101011
    with pytest.raises(ParameterError):
        InstructionWord(128)
    with pytest.raises(ParameterError):
        InstructionWord(0, 8)


def test_default_config():
    c = SystemConfig()
    assert c.slots == 2 and c.bl1_sets == 16 and c.bl1_block_bits == 65536
    assert (c.il1_sets, c.il1_block_bits) == (64, 256)
    assert (c.dl1_sets, c.dl1_ways, c.dl1_block_bits) == (16, 4, 256)
    assert (c.llc_sets, c.llc_ways, c.llc_block_bits) == (16, 4, 16384)
    assert c.inter_cache_bits == 256
    # core to BL1 width is the larger of the cache width and the configuration width
    assert c.core_bl1_bits == 2048
    assert c.replace(config_parallelism=1).core_bl1_bits == 256
    # 16 sets of 8 KiB blocks
    assert c.bl1_sets * c.bl1_block_bits // 8 == 128 * 1024


def test_config_json_round_trip():
    c = SystemConfig(slots=3)
    assert SystemConfig.from_json(c.to_json()) == c
    with pytest.raises(ParameterError):
        SystemConfig.from_dict({"slotz": 1})
    with pytest.raises(ParameterError):
        SystemConfig(bl1_block_bits=1024)


def test_memory_map():
    with pytest.raises(ParameterError):
        MemoryMap(program_start=0x100000, program_size=16)
    assert MemoryMap().library_address(7) == 0x10E000


def test_resolve_address():
    assert resolve_address(None, 0x100000) == 0x40100000
    assert resolve_address(MemoryMap(), 0) == 0x40000000
    with pytest.raises(AddressRangeError):
        resolve_address(None, 0x40000000)


# ---------------------------------------------------------------- slots and BL1


def test_one_slot_alternation_always_misses():
    assert misses(1, "ABAB") == 4


def test_two_slots_alternation():
    assert misses(2, "AB" * 50) == 2


def test_repeated_call():
    assert misses(1, "A" * 10) == 1
    assert misses(3, "A" * 10) == 1


def test_lru_victim():
    d = Disambiguator(2)
    slot_lookup(d, "A")
    slot_lookup(d, "B")
    slot_lookup(d, "A")
    kind, victim = slot_lookup(d, "C")      # B is least recent
    assert kind == "miss" and d.tags["A"] != victim
    assert slot_lookup(d, "A")[0] == "hit"


def test_bl1_costs():
    cache = BitstreamCache(SystemConfig())
    assert bl1_access(cache, 3) == (False, 2 + 286)
    assert bl1_access(cache, 3) == (True, 2)
    assert SystemConfig().fill_cycles == 30 + 256


def test_bl1_conflicts():
    cache = BitstreamCache(SystemConfig())
    results = [bl1_access(cache, f)[0] for f in (1, 17, 1, 17)]
    assert results == [False, False, False, False]
    cache2 = BitstreamCache(SystemConfig(bl1_ways=2))
    assert [bl1_access(cache2, f)[0] for f in (1, 17, 1, 17)] == [False, False, True, True]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.lists(st.integers(0, 7), max_size=60))
def test_slots_match_reference_lru(slots, seq):
    assert misses(slots, seq) == lru_reference(slots, seq)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.lists(st.integers(0, 9), max_size=80))
def test_slot_monotonicity(k, seq):
    assert misses(k + 1, seq) <= misses(k, seq)


# ---------------------------------------------------------------- traces


def test_benchmark_traces():
    t = make_benchmark_trace("interleaved", 100)
    assert len(t) == 200
    assert [c.funct7 for c in t.calls[:4]] == [0, 1, 0, 1]
    assert len(make_benchmark_trace("popcount", 0)) == 0
    with pytest.raises(TraceError):
        make_benchmark_trace("bogus", 3)


def test_interleaved_one_slot():
    c = SystemConfig(slots=1)
    stats = execute_trace(make_benchmark_trace("interleaved", 100, c), c)
    assert stats.slot_misses == 200 and stats.slot_hits == 0


def test_single_opcode_closed_form():
    c = SystemConfig(slots=2, config_parallelism=16, reg_spacing=32)
    n, ov = 1000, 3
    stats = execute_trace(make_benchmark_trace("popcount", n, c, overhead=ov), c)
    miss = c.bl1_hit_latency + c.fill_cycles + c.reconfig_cycles + c.slot_switch_overhead \
        + c.hit_latency
    assert stats.total_cycles == n * ov + miss + (n - 1) * 1
    assert stats.slot_misses == 1 and stats.bl1_misses == 1


def test_hit_without_pipelining_credit():
    c = SystemConfig(slots=2, reg_spacing=4)
    stats = execute_trace(calls([0, 1, 0, 1]), c)
    assert stats.slot_misses == 2
    assert stats.per_call[2:] == [8, 8]


@pytest.mark.parametrize("p", PS)
def test_one_slot_stall_per_call(p):
    c = SystemConfig(slots=1, config_parallelism=p)
    n = 50
    stats = execute_trace(make_benchmark_trace("interleaved", n, c), c)
    assert stats.reconfig_cycles == (512 // p) * 2 * n
    assert stats.summary(c)["reconfig_cycles_per_miss"] == 512 // p


def test_miss_stall_law():
    """Differencing across P: each BL1-resident miss costs 512/P plus a constant."""
    seq = [0, 1] * 40
    totals = {p: execute_trace(calls(seq), SystemConfig(slots=1, config_parallelism=p))
              for p in PS}
    base = totals[16]
    for p, s in totals.items():
        assert s.bl1_misses == 2
        assert s.total_cycles - base.total_cycles == s.slot_misses * (512 // p - 32)
        # after the two cold fills every call is a BL1-resident slot miss
        assert set(s.per_call[2:]) == {512 // p + 2 + 1 + 1}


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 5), max_size=50), st.integers(0, 20), st.integers(1, 4),
       st.sampled_from(PS))
def test_conservation(seq, overhead, slots, p):
    c = SystemConfig(slots=slots, config_parallelism=p)
    t = calls(seq)
    t.overhead = overhead
    s = execute_trace(t, c)
    assert s.total_cycles == sum(s.per_call)
    assert s.overhead_cycles == overhead * len(seq)
    assert s.slot_hits + s.slot_misses == len(seq)
    assert s.bl1_hits + s.bl1_misses == s.slot_misses


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 7), st.integers(0, 31)),
                max_size=30))
def test_timing_ignores_operands(entries):
    c = SystemConfig()
    a = Trace([InstructionWord(f, f3, rs) for f, f3, rs in entries])
    b = Trace([InstructionWord(f) for f, _, _ in entries])
    assert execute_trace(a, c).summary(c) == execute_trace(b, c).summary(c)


def test_unknown_funct7():
    with pytest.raises(TraceError):
        execute_trace(calls([0, 9]), SystemConfig(), library={0, 1})


def test_stats_json():
    c = SystemConfig(slots=1, config_parallelism=16)
    s = execute_trace(make_benchmark_trace("interleaved", 10, c), c)
    d = json.loads(s.to_json(c))
    assert d["slot_misses"] == 20
    assert d["achieved_config_GBps"] == pytest.approx(38.4)


# ---------------------------------------------------------------- bandwidth


def test_bandwidth_report():
    r = bandwidth_report(SystemConfig(config_parallelism=16, clock_mhz=150.0))
    assert r["config_bits_per_cycle"] == 2048
    assert r["config_bandwidth_GBps"] == pytest.approx(38.4)
    assert round(r["speedup_vs_reference"], 1) == 27.4
    assert r["icap_cycles"] == 2048
    assert r["reconfig_cycles"] == 32


@pytest.mark.parametrize("p", PS)
def test_bandwidth_scales_with_p(p):
    r = bandwidth_report(SystemConfig(config_parallelism=p))
    assert r["config_bandwidth_GBps"] == pytest.approx(2.4 * p)
