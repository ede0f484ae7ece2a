import json

import pytest

from lutstruction.cli import CONFIG_ENV, ProjectConfig, main
from lutstruction.errors import ParameterError


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


@pytest.fixture(scope="module")
def popcount_luts(tmp_path_factory):
    d = tmp_path_factory.mktemp("pc")
    assert main(["compile", "--corpus", "popcount", "--output-dir", str(d)]) == 0
    return d / "popcount.luts"


def test_compile_corpus(popcount_luts):
    assert popcount_luts.stat().st_size == 8208
    stats = json.loads(popcount_luts.with_suffix(".stats.json").read_text())
    assert stats["cells_logic"] == 81
    assert popcount_luts.with_suffix(".blif").exists()


def test_compile_bad_width(tmp_path, capsys):
    blif = tmp_path / "bad5input.blif"
    blif.write_text(".model m\n.inputs rs1[0] rs1[1] rs1[2] rs1[3] rs1[4]\n.outputs rd[0]\n"
                    ".names rs1[0] rs1[1] rs1[2] rs1[3] rs1[4] rd[0]\n11111 1\n.end\n")
    code, _, err = run(capsys, "compile", str(blif), "--output-dir", str(tmp_path))
    assert code != 0
    assert err.startswith("unsupported-width:") and err.count("\n") == 1


def test_compile_blif_file(tmp_path, capsys):
    blif = tmp_path / "andy.blif"
    blif.write_text(".model m\n.inputs rs1[2] rs2[2]\n.outputs rd[2]\n"
                    ".names rs1[2] rs2[2] rd[2]\n11 1\n.end\n")
    code, out, _ = run(capsys, "compile", str(blif), "--output-dir", str(tmp_path))
    assert code == 0
    code, out, _ = run(capsys, "sim", out["outputs"]["luts"], "--rs1", "4", "--rs2", "0x7")
    assert out["rd"] == [4]


def test_compile_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["compile", "--corpus", "permute_xor", "--seed", "7",
                     "--output-dir", str(d)]) == 0
    assert (a / "permute_xor.luts").read_bytes() == (b / "permute_xor.luts").read_bytes()
    assert (a / "permute_xor.stats.json").read_bytes() == \
        (b / "permute_xor.stats.json").read_bytes()


def test_sim_single(popcount_luts, capsys):
    code, out, _ = run(capsys, "sim", str(popcount_luts), "--rs1", "0xFF")
    assert code == 0 and out["rd"] == [8]


def test_sim_oracle(popcount_luts, capsys):
    blif = str(popcount_luts.with_suffix(".blif"))
    code, out, _ = run(capsys, "sim", str(popcount_luts), "--random", "100000", "--oracle", blif)
    assert code == 0 and out["mismatches"] == 0 and out["count"] == 100000


def test_sim_corrupted(popcount_luts, tmp_path, capsys):
    bad = tmp_path / "bad.luts"
    bad.write_bytes(popcount_luts.read_bytes()[:500])
    code, _, err = run(capsys, "sim", str(bad), "--rs1", "1")
    assert code != 0 and err.startswith("format-error:")


def test_decode(popcount_luts, capsys):
    code, out, _ = run(capsys, "decode", str(popcount_luts), "--cells")
    assert out["header"] == {"version": 1, "W": 32, "Y": 32, "S": 32, "P": 1}
    assert len(out["cells"]) == 32 and len(out["cells"][0][0]) == 4


def test_load_sim(popcount_luts, tmp_path, capsys):
    log = tmp_path / "load.log"
    code, out, _ = run(capsys, "load-sim", str(popcount_luts), "--trace", str(log))
    assert code == 0
    assert out == {"cycles": 512, "expected_cycles": 512, "config_matches": True}
    assert len(log.read_text().splitlines()) == 512


def test_bench_interleaved(capsys):
    code, out, _ = run(capsys, "bench", "interleaved", "--slots", "1", "--P", "16", "--N", "40")
    r = out["runs"][0]
    assert r["slot_misses"] == 80 and r["reconfig_cycles_per_miss"] == 32


def test_bench_popcount(capsys):
    code, out, _ = run(capsys, "bench", "popcount", "--slots", "2")
    assert out["runs"][0]["slot_misses"] == 1


def test_bench_sweep_csv(tmp_path, capsys):
    csv_path = tmp_path / "sweep.csv"
    code, out, _ = run(capsys, "bench", "interleaved", "--slots", "1", "2", "--P", "1", "16",
                       "--csv", str(csv_path))
    assert len(out["runs"]) == 4
    assert len(csv_path.read_text().splitlines()) == 5


def test_bench_bandwidth(capsys):
    code, out, _ = run(capsys, "bench", "--report-bandwidth", "--P", "16", "--clock", "150")
    assert out["bandwidth"][0]["config_bandwidth_GBps"] == pytest.approx(38.4)
    assert out["lines"][0].startswith("38.4 GB/s") and "28x" in out["lines"][0]


def test_bench_unknown(capsys):
    code, _, err = run(capsys, "bench", "stream")
    assert code != 0 and err.startswith("invalid-parameter:")


def test_library(popcount_luts, tmp_path, capsys):
    code, out, _ = run(capsys, "library", f"7={popcount_luts}", "--output-dir", str(tmp_path))
    assert out["addresses"] == {"7": "0x10e000"}
    assert (tmp_path / "library.bin").stat().st_size == 128 * 8192
    assert json.loads((tmp_path / "library.json").read_text())["entries"] == {"7": "popcount"}


def test_report_and_config_env(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "project.json"
    cfg.write_text(json.dumps({"P": 16, "S": 7, "system": {"slots": 1}}))
    monkeypatch.setenv(CONFIG_ENV, str(cfg))
    code, out, _ = run(capsys, "report")
    assert out["fabric"]["load_cycles"] == 32 and out["fabric"]["pipeline_latency"] == 5
    assert out["system"]["slots"] == 1
    cfg.write_text(json.dumps({"P": 16, "colour": "red"}))
    code, _, err = run(capsys, "report")
    assert code != 0 and "colour" in err


def test_project_config_validation():
    with pytest.raises(ParameterError):
        ProjectConfig(P=3)
    with pytest.raises(ParameterError):
        ProjectConfig.from_dict({"W": 32, "nope": 1})
