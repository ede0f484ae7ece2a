"""Several functions behind one funct7: funct3 selects between sub-circuits."""
import numpy as np

from lutstruction import eval_words, gen_funct3_mux, gen_permute_xor, gen_popcount
from lutstruction.corpus import random_permutation

pc = gen_popcount()
px = gen_permute_xor(random_permutation(32, 0), random_permutation(32, 1))
mux = gen_funct3_mux([pc, px])
print(f"mux netlist: {len(mux.nodes)} nodes, depth {mux.depth()}")

rs1, rs2 = np.uint64(0xFF), np.uint64(0x0F)
for f3 in range(4):
    print(f"funct3={f3}: rd = {int(eval_words(mux, rs1, rs2, f3)):#010x}")
