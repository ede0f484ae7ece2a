import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lutstruction.bitgen import (Bitstream, BitstreamHeader, LIBRARY_BASE, build_library_image,
                                 column_words, compensation_permutation, decode, deinterleave,
                                 encode, library_address, read_bitstream, write_bitstream)
from lutstruction.errors import EncodeError, FormatError, LayoutError
from lutstruction.fabric import FabricConfig, FabricParams, bypass_permutation
from lutstruction.sim import FabricState

PS = (1, 2, 4, 8, 16)


def rand_cfg(params, seed):
    return FabricConfig.random(params, np.random.default_rng(seed))


@pytest.mark.parametrize("p,words,bits", [(1, 512, 128), (16, 32, 2048)])
def test_word_geometry(p, words, bits):
    b = encode(rand_cfg(FabricParams(config_parallelism=p), 0))
    assert (b.n_words, b.word_bits) == (words, bits)
    assert b.payload_bits == 65536


def test_column_word_layout():
    p = FabricParams(4, 4)
    cfg = FabricConfig.constant(p)
    cfg.tables[2, 1] = [0x0001, 0, 0, 0x8000]      # bits 0 and 63 of cell (2, 1)
    words = column_words(cfg, 2)
    assert words.shape == (16, 16)
    assert words[0, 4 * 1 + 0] == 1                 # word 0, row 1, slot 0
    assert words[15, 4 * 1 + 3] == 1                # word 15, row 1, slot 3
    assert words.sum() == 2


def test_injection_column_needs_no_compensation():
    for p in PS:
        params = FabricParams(config_parallelism=p)
        for seg in range(p):
            start = seg * params.segment_columns
            comp = compensation_permutation(params, start)
            assert np.array_equal(comp, np.arange(params.n_lanes))


def test_compensation_cancels_crossing():
    params = FabricParams(config_parallelism=4)
    for d in range(params.depth):
        start = (d // params.segment_columns) * params.segment_columns
        comp = compensation_permutation(params, d)
        cross = bypass_permutation(params, start, d)
        assert np.array_equal(cross[comp], np.arange(params.n_lanes))


def test_odd_distance_compensation_is_not_identity():
    params = FabricParams()
    assert not np.array_equal(compensation_permutation(params, 1), np.arange(128))


def test_compensation_is_needed():
    """Without pre-permutation the loaded fabric differs from the source config."""
    params = FabricParams()
    cfg = rand_cfg(params, 1)
    b = encode(cfg)
    raw = np.concatenate([column_words(cfg, d) for d in range(params.depth - 1, -1, -1)])
    assert not np.array_equal(raw, b.payload)
    state = FabricState(params)
    state.load_bitstream(Bitstream(b.header, raw))
    assert state.read_config() != cfg


@pytest.mark.parametrize("p", PS)
def test_round_trip(p):
    params = FabricParams(config_parallelism=p)
    for seed in range(5):
        cfg = rand_cfg(params, seed)
        b = encode(cfg)
        assert decode(b) == cfg
        data = write_bitstream(b)
        assert len(data) == 16 + 8192
        assert read_bitstream(data) == b
        assert write_bitstream(read_bitstream(data)) == data


@settings(max_examples=25, deadline=None)
@given(w=st.integers(2, 12), half=st.integers(1, 8), logp=st.integers(0, 3),
       seed=st.integers(0, 2**32 - 1))
def test_round_trip_any_geometry(w, half, logp, seed):
    p = 1 << logp
    y = 2 * half * p
    params = FabricParams(w, y, config_parallelism=p)
    cfg = rand_cfg(params, seed)
    b = encode(cfg)
    assert decode(read_bitstream(write_bitstream(b))) == cfg
    cols = deinterleave(b)
    for d in range(y):
        assert np.array_equal(cols[d], column_words(cfg, d))


def test_bypass_cells_cannot_be_encoded():
    cfg = FabricConfig(FabricParams())
    with pytest.raises(EncodeError):
        encode(cfg)


def test_header_fields():
    b = encode(rand_cfg(FabricParams(32, 32, 7, 16), 0))
    data = write_bitstream(b)
    assert data[:4] == b"LUTS" and data[4] == 1
    assert tuple(data[5:9]) == (32, 32, 7, 16)
    assert data[9:16] == bytes(7)


def test_truncated_payload():
    data = write_bitstream(encode(rand_cfg(FabricParams(), 0)))
    with pytest.raises(FormatError):
        read_bitstream(data[:-1])
    with pytest.raises(FormatError):
        read_bitstream(data[:10])


def test_wrong_p_in_header():
    data = bytearray(write_bitstream(encode(rand_cfg(FabricParams(), 0))))
    data[8] = 4
    # same payload length for any P, so the mismatch shows up on decode shape
    b = read_bitstream(bytes(data))
    assert b.params.config_parallelism == 4
    bad = Bitstream(BitstreamHeader(32, 32, 32, 4), np.zeros((512, 128), np.uint8))
    with pytest.raises(FormatError):
        decode(bad)


def test_bad_magic_and_version():
    data = bytearray(write_bitstream(encode(rand_cfg(FabricParams(), 0))))
    bad = b"XXXX" + bytes(data[4:])
    with pytest.raises(FormatError):
        read_bitstream(bad)
    data[4] = 9
    with pytest.raises(FormatError):
        read_bitstream(bytes(data))


def test_library_addresses():
    assert library_address(7) == 0x10E000
    assert library_address(0) == LIBRARY_BASE
    with pytest.raises(LayoutError):
        library_address(128)


def test_library_image():
    b = encode(rand_cfg(FabricParams(), 0))
    img = build_library_image({0: b, 7: b}, names={0: "popcount"})
    assert len(img.data) == 128 * 8192
    assert img.payload(7) == b.payload_bytes()
    assert img.payload(1) == bytes(8192)
    assert img.address_of(7) == 0x10E000
    assert '"0": "popcount"' in img.manifest()


def test_library_too_large():
    b = encode(rand_cfg(FabricParams(), 0))
    with pytest.raises(LayoutError):
        build_library_image([b] * 129)
    with pytest.raises(LayoutError):
        build_library_image({0: b"short"})
