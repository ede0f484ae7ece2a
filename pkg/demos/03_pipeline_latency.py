"""Register spacing S trades clock period for hit latency ceil(Y/S)."""
from lutstruction import FabricConfig, FabricParams, compile_netlist, fabric_from_config
from lutstruction import gen_popcount

base = compile_netlist(gen_popcount(), FabricParams()).config
ops = [(0xFF, 0, 0), (0x3, 0, 0), (0xFFFFFFFF, 0, 0), (0, 0, 0)]

for s in (1, 2, 4, 7, 8, 16, 32):
    params = FabricParams(32, 32, s)
    fabric = fabric_from_config(FabricConfig(params, base.tables, base.programmed))
    out = fabric.run_pipelined(ops)
    print(f"S={s:2d}  latency={params.pipeline_latency:2d}  results at cycles "
          f"{[c for c, _ in out]} -> {[rd for _, rd in out]}")
