"""Acceptance gate: eight criteria at their stated tolerances.

Each test prints one ``[PASS]`` / ``[FAIL]`` line, also when run through
pytest (``python3 tests/test_acceptance.py`` prints the same lines).
"""
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from lutstruction.bitgen import decode, encode, read_bitstream, write_bitstream
from lutstruction.cli import main as cli_main
from lutstruction.corpus import gen_permute_xor, gen_popcount, random_permutation
from lutstruction.fabric import FabricConfig, FabricParams
from lutstruction.pnr import compile_netlist
from lutstruction.sim import FabricState, fabric_from_config
from lutstruction.sysmodel import (SystemConfig, bandwidth_report, execute_trace,
                                   make_benchmark_trace)

PS = (1, 2, 4, 8, 16)
SRC = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src")


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
        with capsys.disabled():
            print("\n" + line)
        return ok
    return emit


def test_1_reconfiguration_cycles(report):
    cfg = FabricConfig.random(FabricParams(), np.random.default_rng(0))
    got, times = {}, {}
    for p in PS:
        params = FabricParams(config_parallelism=p)
        b = encode(FabricConfig(params, cfg.tables, cfg.programmed))
        assert len(b.payload_bytes()) == 8192
        t = time.perf_counter()
        got[p] = FabricState(params).load_bitstream(b)
        times[p] = time.perf_counter() - t
    ok = all(got[p] == 512 // p and times[p] < 1.0 for p in PS)
    assert report(1, ok, f"load cycles {[got[p] for p in PS]} (want 512/P), "
                         f"slowest load {max(times.values()):.3f}s")


def test_2_load_equivalence(report):
    rng = np.random.default_rng(2)
    t = time.perf_counter()
    mismatches = runs = 0
    for _ in range(100):
        base = FabricConfig.random(FabricParams(), rng)
        rs1 = rng.integers(0, 1 << 32, 100, dtype=np.uint64)
        rs2 = rng.integers(0, 1 << 32, 100, dtype=np.uint64)
        f3 = rng.integers(0, 8, 100, dtype=np.uint64)
        want = fabric_from_config(base).eval_combinational(rs1, rs2, f3)
        for p in PS:
            params = FabricParams(config_parallelism=p)
            state = FabricState(params)
            state.load_bitstream(encode(FabricConfig(params, base.tables, base.programmed)))
            mismatches += int(np.count_nonzero(state.eval_combinational(rs1, rs2, f3) != want))
            runs += 1
    elapsed = time.perf_counter() - t
    ok = mismatches == 0 and elapsed < 60
    assert report(2, ok, f"{runs} loads x 100 inputs, {mismatches} mismatches, {elapsed:.1f}s")


def test_3_hit_latency(report):
    cfg = compile_netlist(gen_popcount(), FabricParams()).config
    got = {}
    for s in (1, 2, 4, 7, 8, 16, 32):
        params = FabricParams(32, 32, s)
        state = fabric_from_config(FabricConfig(params, cfg.tables, cfg.programmed))
        (cycle, rd), = state.run_pipelined([(0xFF, 0, 0)])
        assert rd == 8
        got[s] = cycle
    want = {s: math.ceil(32 / s) for s in got}
    assert report(3, got == want, f"latency by S {got}")


def test_4_end_to_end(report):
    params = FabricParams()
    rng = np.random.default_rng(4)
    n = 100_000
    rs1 = rng.integers(0, 1 << 32, n, dtype=np.uint64)
    rs2 = rng.integers(0, 1 << 32, n, dtype=np.uint64)
    t = time.perf_counter()
    pc = fabric_from_config(compile_netlist(gen_popcount(), params).config)
    popcount_ref = np.array([bin(int(v)).count("1") for v in rs1], dtype=np.uint64)
    bad_pc = int(np.count_nonzero(pc.eval_combinational(rs1, rs2) != popcount_ref))
    s1, s2 = random_permutation(32, 0), random_permutation(32, 1)
    px = fabric_from_config(compile_netlist(gen_permute_xor(s1, s2), params).config)
    bits1 = (rs1[:, None] >> np.array(s1, dtype=np.uint64)) & np.uint64(1)
    bits2 = (rs2[:, None] >> np.array(s2, dtype=np.uint64)) & np.uint64(1)
    permute_ref = ((bits1 ^ bits2) << np.arange(32, dtype=np.uint64)).sum(axis=1,
                                                                          dtype=np.uint64)
    bad_px = int(np.count_nonzero(px.eval_combinational(rs1, rs2) != permute_ref))
    elapsed = time.perf_counter() - t
    ok = bad_pc == 0 and bad_px == 0 and elapsed < 120
    assert report(4, ok, f"popcount {bad_pc} / permute_xor {bad_px} mismatches on {n} "
                         f"operand pairs, {elapsed:.1f}s")


def test_5_bandwidth(report):
    r = bandwidth_report(SystemConfig(config_parallelism=16, clock_mhz=150.0))
    gbps, ratio = r["config_bandwidth_GBps"], r["speedup_vs_reference"]
    ok = (f"{gbps:.3g}" == "38.4" and f"{ratio:.3g}" == "27.4" and r["icap_cycles"] == 2048)
    assert report(5, ok, f"{gbps:.3g} GB/s, {ratio:.3g}x vs {r['reference_GBps']} GB/s, "
                         f"ICAP {r['icap_cycles']} cycles")


def test_6_one_slot_stress(report):
    failures = []
    for p in PS:
        for n in (1, 7, 100):
            one = SystemConfig(slots=1, config_parallelism=p)
            s = execute_trace(make_benchmark_trace("interleaved", n, one), one)
            if s.slot_misses != s.invocations or s.reconfig_cycles != s.slot_misses * (512 // p):
                failures.append(("1 slot", p, n))
            stall = {c - (2 + 1 + one.hit_latency) for c in s.per_call[2:]}
            if stall and stall != {512 // p}:
                failures.append(("stall", p, n, stall))
            two = one.replace(slots=2)
            if execute_trace(make_benchmark_trace("interleaved", n, two), two).slot_misses != 2:
                failures.append(("2 slots", p, n))
    assert report(6, not failures, "1 slot: misses = invocations, stall 512/P; "
                                   f"2 slots: misses = 2 (failures: {failures or 'none'})")


def test_7_round_trip(report):
    rng = np.random.default_rng(7)
    bad = 0
    for i in range(1000):
        params = FabricParams(config_parallelism=PS[i % len(PS)])
        cfg = FabricConfig.random(params, rng)
        b = encode(cfg)
        data = write_bitstream(b)
        back = read_bitstream(data)
        if decode(b) != cfg or back != b or write_bitstream(back) != data:
            bad += 1
    assert report(7, bad == 0, f"1000 configs, {bad} round-trip failures")


def test_8_determinism(report, tmp_path, capsys):
    """One run in-process, one in a fresh interpreter with another hash seed."""
    env = dict(os.environ, PYTHONHASHSEED="12345",
               PYTHONPATH=os.pathsep.join([SRC, os.environ.get("PYTHONPATH", "")]))
    same = []
    for name in ("popcount", "permute_xor"):
        args = ["compile", "--corpus", name, "--seed", "7", "--output-dir"]
        assert cli_main(args + [str(tmp_path / "a")]) == 0
        subprocess.run([sys.executable, "-m", "lutstruction.cli"] + args + [str(tmp_path / "b")],
                       check=True, env=env, capture_output=True)
        same.append((tmp_path / "a" / f"{name}.luts").read_bytes()
                    == (tmp_path / "b" / f"{name}.luts").read_bytes())
    capsys.readouterr()
    assert report(8, all(same), "two compile runs per circuit (separate processes) give "
                                "byte-identical .luts")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
