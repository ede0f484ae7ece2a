"""``lutstruction`` command line: compile, decode, sim, load-sim, bench, library, report.

Every command prints JSON on stdout.  Failures print one ``code: message``
line on stderr and exit with status 2.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bitgen, corpus, netlist, pnr, sim, sysmodel
from .errors import LutstructionError, ParameterError
from .fabric import FabricParams

CONFIG_ENV = "LUTSTRUCTION_CONFIG"
SCENARIOS = ("popcount", "permute_xor", "interleaved")


@dataclass
class ProjectConfig:
    W: int = 32
    Y: int = 32
    S: int = None
    P: int = 1
    system: dict = field(default_factory=dict)
    library_manifest: str = None
    seed: int = 0
    output_dir: str = "."

    def __post_init__(self):
        self.fabric()                    # validate early
        self.system_config()

    def fabric(self):
        return FabricParams(self.W, self.Y, self.S, self.P)

    def system_config(self, **overrides):
        d = {"width": self.W, "depth": self.Y, "reg_spacing": self.S or self.Y,
             "config_parallelism": self.P,
             "bl1_block_bits": FabricParams(self.W, self.Y).bitstream_bits}
        d.update(self.system)
        d.update(overrides)
        return sysmodel.SystemConfig.from_dict(d)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ParameterError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: {exc}") from None
        return cls.from_dict(data)


def _int(text):
    return int(text, 0)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def resolve_config(args):
    path = args.config or os.environ.get(CONFIG_ENV)
    cfg = ProjectConfig.load(path) if path else ProjectConfig()
    d = asdict(cfg)
    for key in ("W", "Y", "S", "P", "seed", "output_dir"):
        val = getattr(args, key, None)
        if val is not None and not isinstance(val, list):
            d[key] = val
    return ProjectConfig.from_dict(d)


def _load_netlist(source):
    """BLIF path or corpus name (names win only when no such file exists)."""
    path = Path(source)
    if path.exists():
        return netlist.parse_blif(path.read_text())
    if source in corpus.CORPUS:
        return corpus.corpus_netlist(source)
    raise ParameterError(f"{source!r} is neither a BLIF file nor a corpus circuit")


# ------------------------------------------------------------------ commands


def cmd_compile(args, cfg):
    params = cfg.fabric()
    if args.corpus:
        n = corpus.corpus_netlist(args.corpus, params, cfg.seed)
        stem = args.corpus
    elif args.blif:
        n = netlist.parse_blif(Path(args.blif).read_text())
        stem = Path(args.blif).stem
    else:
        raise ParameterError("give a BLIF path or --corpus NAME")
    res = pnr.compile_netlist(n, params, seed=cfg.seed, allow_mixed=not args.no_mixed)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    luts = Path(args.output) if args.output else out_dir / f"{stem}.luts"
    bitgen.save_bitstream(bitgen.encode(res.config), luts)
    stats_path = luts.with_suffix(".stats.json")
    stats_path.write_text(res.stats_json() + "\n")
    outputs = {"luts": str(luts), "stats": str(stats_path), "bytes": luts.stat().st_size}
    if args.corpus:
        blif_path = luts.with_suffix(".blif")
        blif_path.write_text(netlist.serialize_blif(n))
        outputs["blif"] = str(blif_path)
    _emit({"outputs": outputs, "stats": res.stats})


def cmd_decode(args, cfg):
    b = bitgen.load_bitstream_file(args.luts)
    decoded = bitgen.decode(b)
    h = b.header
    out = {"header": {"version": h.version, "W": h.width, "Y": h.depth, "S": h.reg_spacing,
                      "P": h.config_parallelism},
           "words": b.n_words, "word_bits": b.word_bits}
    if args.cells:
        out["cells"] = [[[f"{int(t):04x}" for t in decoded.tables[c, r]]
                         for r in range(h.width)] for c in range(h.depth)]
    _emit(out)


def cmd_sim(args, cfg):
    b = bitgen.load_bitstream_file(args.luts)
    state = sim.fabric_from_config(bitgen.decode(b))
    if args.random:
        rng = np.random.default_rng(cfg.seed)
        w = b.params.width
        rs1 = rng.integers(0, 1 << w, args.random, dtype=np.uint64)
        rs2 = rng.integers(0, 1 << w, args.random, dtype=np.uint64)
        f3 = rng.integers(0, 8, args.random, dtype=np.uint64)
    else:
        rs1 = np.array([args.rs1], dtype=np.uint64)
        rs2 = np.array([args.rs2], dtype=np.uint64)
        f3 = np.array([args.funct3], dtype=np.uint64)
    rd = state.eval_combinational(rs1, rs2, f3)
    out = {"count": int(len(rd))}
    if len(rd) <= 16:
        out["rd"] = [int(v) for v in rd]
        out["rd_hex"] = [hex(int(v)) for v in rd]
    if args.oracle:
        ref = netlist.eval_words(_load_netlist(args.oracle), rs1, rs2, f3)
        out["mismatches"] = int(np.count_nonzero(np.asarray(ref, dtype=np.uint64) != rd))
    _emit(out)
    return 1 if out.get("mismatches") else 0


def cmd_load_sim(args, cfg):
    b = bitgen.load_bitstream_file(args.luts)
    state = sim.FabricState(b.params)
    log = [] if args.trace else None
    cycles = state.load_bitstream(b, trace=log)
    if log is not None:
        Path(args.trace).write_text("\n".join(log) + "\n")
    ok = state.read_config() == bitgen.decode(b)
    _emit({"cycles": cycles, "expected_cycles": b.params.load_cycles, "config_matches": ok})
    return 0 if ok else 1


def _sweep(args, cfg):
    for slots in args.slots or [cfg.system.get("slots", 2)]:
        for p in args.P or [cfg.P]:
            for s in args.S or [cfg.S or cfg.Y]:
                yield slots, p, s


def cmd_bench(args, cfg):
    if args.scenario is None and not args.report_bandwidth:
        raise ParameterError("give a scenario or --report-bandwidth")
    if args.scenario is not None and args.scenario not in SCENARIOS:
        raise ParameterError(f"unknown scenario {args.scenario!r}; have {list(SCENARIOS)}")
    extra = {"clock_mhz": args.clock} if args.clock is not None else {}
    runs, bandwidth = [], []
    for slots, p, s in _sweep(args, cfg):
        sc = cfg.system_config(slots=slots, config_parallelism=p, reg_spacing=s,
                               core_bl1_bits=None, **extra)
        if args.report_bandwidth:
            bandwidth.append(sysmodel.bandwidth_report(sc))
        if args.scenario:
            trace = sysmodel.make_benchmark_trace(args.scenario, args.N, sc, overhead=args.overhead)
            stats = sysmodel.execute_trace(trace, sc)
            runs.append({"scenario": args.scenario, "N": args.N, "slots": slots, "P": p, "S": s,
                         **stats.summary(sc)})
    out = {}
    if runs:
        out["runs"] = runs
    if bandwidth:
        out["bandwidth"] = bandwidth
        out["lines"] = [f"{r['config_bandwidth_GBps']:.1f} GB/s, "
                        f"{r['speedup_vs_reference']:.1f}x vs {r['reference_GBps']} GB/s "
                        f"(up to {math.ceil(r['speedup_vs_reference'])}x)" for r in bandwidth]
    if args.csv and runs:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(runs[0]))
            writer.writeheader()
            writer.writerows(runs)
    _emit(out)


def cmd_library(args, cfg):
    entries, names = {}, {}
    for entry in args.entries:
        f7, _, path = entry.partition("=")
        if not path:
            raise ParameterError(f"library entry {entry!r} must be FUNCT7=PATH")
        f7 = _int(f7)
        entries[f7] = bitgen.load_bitstream_file(path)
        names[f7] = Path(path).stem
    image = bitgen.build_library_image(entries, base_address=args.base, names=names)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    img = out_dir / args.image
    img.write_bytes(image.data)
    manifest = img.with_suffix(".json")
    manifest.write_text(image.manifest() + "\n")
    _emit({"image": str(img), "manifest": str(manifest), "bytes": len(image.data),
           "addresses": {str(k): hex(image.address_of(k)) for k in sorted(entries)}})


def cmd_report(args, cfg):
    params = cfg.fabric()
    sc = cfg.system_config()
    _emit({"fabric": {"W": params.width, "Y": params.depth, "S": params.reg_spacing,
                      "P": params.config_parallelism, "cells": params.n_cells,
                      "bitstream_bits": params.bitstream_bits,
                      "load_cycles": params.load_cycles,
                      "pipeline_latency": params.pipeline_latency},
           "system": asdict(sc),
           "bandwidth": sysmodel.bandwidth_report(sc)})


# ------------------------------------------------------------------ parser


def build_parser():
    ap = argparse.ArgumentParser(prog="lutstruction", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help=f"ProjectConfig JSON (default: ${CONFIG_ENV})")
    sub = ap.add_subparsers(dest="command", required=True)

    def fabric_flags(p, sweep=False):
        kw = {"nargs": "+"} if sweep else {}
        for key in ("W", "Y"):
            p.add_argument(f"--{key}", type=int)
        p.add_argument("--S", type=int, **kw)
        p.add_argument("--P", type=int, **kw)
        p.add_argument("--seed", type=int)
        p.add_argument("--output-dir", dest="output_dir")

    p = sub.add_parser("compile", help="BLIF or corpus circuit -> .luts + stats")
    p.add_argument("blif", nargs="?")
    p.add_argument("--corpus", choices=sorted(corpus.CORPUS))
    p.add_argument("-o", "--output")
    p.add_argument("--no-mixed", action="store_true",
                   help="keep logic and route-through functions in separate cells")
    fabric_flags(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("decode", help="print header (and tables) of a .luts file")
    p.add_argument("luts")
    p.add_argument("--cells", action="store_true")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sim", help="evaluate a .luts file")
    p.add_argument("luts")
    p.add_argument("--rs1", type=_int, default=0)
    p.add_argument("--rs2", type=_int, default=0)
    p.add_argument("--funct3", type=_int, default=0)
    p.add_argument("--random", type=int, metavar="N")
    p.add_argument("--oracle", help="BLIF file or corpus name to compare against")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("load-sim", help="cycle-accurate bitstream load")
    p.add_argument("luts")
    p.add_argument("--trace", help="write a per-cycle log here")
    p.set_defaults(func=cmd_load_sim)

    p = sub.add_parser("bench", help="timing model scenarios and bandwidth report")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--slots", type=int, nargs="+")
    p.add_argument("--overhead", type=int, default=0)
    p.add_argument("--clock", type=float)
    p.add_argument("--report-bandwidth", action="store_true")
    p.add_argument("--csv")
    fabric_flags(p, sweep=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("library", help="lay out bitstreams by funct7")
    p.add_argument("entries", nargs="+", metavar="FUNCT7=PATH")
    p.add_argument("--base", type=_int, default=bitgen.LIBRARY_BASE)
    p.add_argument("--image", default="library.bin")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_library)

    p = sub.add_parser("report", help="fabric, system and bandwidth summary")
    fabric_flags(p)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg) or 0
    except LutstructionError as exc:
        print(str(exc).splitlines()[0], file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"io-error: {exc}", file=sys.stderr)
    except (ValueError, KeyError) as exc:
        print(f"invalid-parameter: {exc}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
