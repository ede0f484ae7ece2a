"""Timing model: slot misses, bitstream cache fills and configuration bandwidth."""
from lutstruction import SystemConfig, bandwidth_report, execute_trace, make_benchmark_trace

N = 1000
print("scenario       slots  P   misses  reconfig/miss  total cycles")
for scenario in ("popcount", "permute_xor", "interleaved"):
    for slots in (1, 2):
        for p in (1, 16):
            cfg = SystemConfig(slots=slots, config_parallelism=p)
            stats = execute_trace(make_benchmark_trace(scenario, N, cfg, overhead=4), cfg)
            s = stats.summary(cfg)
            print(f"{scenario:14s} {slots:5d} {p:3d} {s['slot_misses']:7d} "
                  f"{s['reconfig_cycles_per_miss']:14d} {s['total_cycles']:13d}")

r = bandwidth_report(SystemConfig(config_parallelism=16, clock_mhz=150.0))
print(f"\nconfiguration port: {r['config_bits_per_cycle']} bits/cycle at {r['clock_mhz']} MHz "
      f"= {r['config_bandwidth_GBps']:.1f} GB/s, {r['speedup_vs_reference']:.1f}x a "
      f"{r['reference_GBps']} GB/s controller")
print(f"the same 65536 bits through a 32-bit port: {r['icap_cycles']} cycles "
      f"({r['icap_us']:.2f} us at 100 MHz) vs {r['reconfig_cycles']} cycles here")
