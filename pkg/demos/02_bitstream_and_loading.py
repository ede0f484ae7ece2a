"""Encode a configuration, then watch the fabric load itself through bypass cells."""
import numpy as np

from lutstruction import FabricConfig, FabricParams, FabricState, decode, encode
from lutstruction.bitgen import column_words, compensation_permutation
from lutstruction.fabric import bypass_permutation

rng = np.random.default_rng(0)

for p in (1, 2, 4, 8, 16):
    params = FabricParams(config_parallelism=p)
    cfg = FabricConfig.random(params, rng)
    b = encode(cfg)
    state = FabricState(params)
    cycles = state.load_bitstream(b)
    print(f"P={p:2d}: {b.n_words:3d} words x {b.word_bits:4d} bits, "
          f"load {cycles:3d} cycles, loaded == source: {state.read_config() == cfg}, "
          f"decode ok: {decode(b) == cfg}")

# Two bypass columns cancel, so only words bound for an odd distance are scrambled.
params = FabricParams()
for d in range(4):
    moved = int((compensation_permutation(params, d) != np.arange(params.n_lanes)).sum())
    print(f"column {d}: {moved} of {params.n_lanes} lanes pre-permuted")

# Skipping the pre-permutation breaks the load.
cfg = FabricConfig.random(params, rng)
raw = np.concatenate([column_words(cfg, d) for d in range(params.depth - 1, -1, -1)])
state = FabricState(params)
state.load_bitstream(type(encode(cfg))(encode(cfg).header, raw))
bad = int((state.read_config().tables != cfg.tables).any(axis=-1).sum())
print(f"without compensation {bad} of {params.n_cells} cells come out wrong")

assert np.array_equal(bypass_permutation(params, 4, 6), np.arange(params.n_lanes))
