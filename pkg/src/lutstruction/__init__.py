"""Toolchain and simulator for a feed-forward LUT4_4 reconfigurable-instruction fabric."""
from .bitgen import (Bitstream, BitstreamHeader, build_library_image, decode, encode,
                     load_bitstream_file, read_bitstream, save_bitstream, write_bitstream)
from .corpus import gen_funct3_mux, gen_permute_xor, gen_popcount
from .errors import LutstructionError
from .fabric import CellConfig, FabricConfig, FabricParams, PortRef
from .netlist import Netlist, eval_netlist, eval_words, pack, parse_blif, serialize_blif
from .pnr import compile_netlist, validate_config
from .sim import FabricState, fabric_from_config
from .sysmodel import (SystemConfig, Trace, bandwidth_report, execute_trace,
                       make_benchmark_trace)

__version__ = "0.1.0"
