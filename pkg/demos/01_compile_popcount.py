"""Compile popcount onto the 32x32 fabric and check it against bin().count."""
import numpy as np

from lutstruction import FabricParams, compile_netlist, fabric_from_config, gen_popcount

params = FabricParams()          # W=32 rows, Y=32 columns, one output register
netlist = gen_popcount(params)
print(f"{len(netlist.nodes)} LUT nodes, logic depth {netlist.depth()}")

result = compile_netlist(netlist, params, seed=0)
for key in ("packed_cells", "cells_logic", "cells_routing", "route_iterations", "max_column"):
    print(f"  {key:16s} {result.stats[key]}")

fabric = fabric_from_config(result.config)
print("popcount(0xF0F0F0F0) =", fabric.eval_combinational(0xF0F0F0F0))

# vectorised check on a batch of operands
rng = np.random.default_rng(1)
rs1 = rng.integers(0, 1 << 32, 10_000, dtype=np.uint64)
rd = fabric.eval_combinational(rs1)
ref = np.array([bin(int(v)).count("1") for v in rs1])
print("mismatches:", int((rd != ref).sum()))

# a text map of the placement: L = logic cell, . = route-through / constant
grid = np.full((params.width, params.depth), ".")
for (c, r) in result.placement.loc.values():
    grid[r, c] = "L"
print("\n".join("".join(row) for row in grid[::-1]))
