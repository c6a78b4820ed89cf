"""End-to-end CLI behavior: exit codes, file outputs, determinism, figures."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from duet_compress import load_archive, save_archive
from duet_compress.cli import main

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def run(*argv):
    return main(list(argv))


@pytest.fixture()
def archive(tmp_path):
    path = tmp_path / "in.dueta"
    assert run("generate", "--out", str(path), "--seed", "4", "--n", "24",
               "--d", "4", "--m", "5", "--stages", "3", "--hotspots", "1") == 0
    return path


def test_generate_then_compress(tmp_path, archive):
    out = tmp_path / "comp.dueta"
    code = run("compress", "--in", str(archive), "--out", str(out),
               "--k1", "6", "--k2", "3", "--w", "2")
    assert code == 0
    entries = load_archive(str(out))
    assert entries["out_tokens"].shape == (9, 4)
    assert (entries["config"] == np.array([6, 3, 2])).all()
    assert entries["dominant_idx"].shape == (6,)
    assert entries["cluster_members"].shape == (3, 2)


def test_pipeline_outputs_and_determinism(tmp_path, archive):
    out1, out2 = tmp_path / "a.dueta", tmp_path / "b.dueta"
    args = ["pipeline", "--in", str(archive), "--k1", "6", "--k2", "3",
            "--w", "2", "--schedule", "2:0.5,3:0.25", "--layers", "8",
            "--selector", "topk:2"]
    assert run(*args, "--out", str(out1)) == 0
    assert run(*args, "--out", str(out2)) == 0
    assert out1.read_bytes() == out2.read_bytes()
    entries = load_archive(str(out1))
    assert "survivors_0" in entries and "trajectory" in entries
    assert (entries["trajectory"] == np.array([9, 4, 2])).all()


def test_prune_requires_compressed_entry(tmp_path, archive):
    out = tmp_path / "p.dueta"
    # generated archives carry raw tokens, not a compressed stream
    assert run("prune", "--in", str(archive), "--out", str(out),
               "--schedule", "2:0.5", "--layers", "8") == 3
    assert not out.exists()


def test_prune_on_compressed_stream(tmp_path, archive):
    entries = load_archive(str(archive))
    stream = {
        "x_out": entries["tokens"][:10],
        "attn_text_0": entries["attn_text_0"],
        "attn_t2v_0": entries["attn_t2v_0"],
    }
    src = tmp_path / "stream.dueta"
    save_archive(str(src), stream)
    out = tmp_path / "pruned.dueta"
    assert run("prune", "--in", str(src), "--out", str(out),
               "--schedule", "2:0.4", "--layers", "8") == 0
    got = load_archive(str(out))
    assert (got["trajectory"] == np.array([10, 4])).all()
    assert got["survivors_0"].shape == (4,)


def test_budget_stdout_records(capsys):
    assert run("budget", "--n0", "1536", "--layers", "32",
               "--schedule", "16:0.5,24:0") == 0
    lines = [json.loads(line) for line in
             capsys.readouterr().out.strip().splitlines()]
    assert len(lines) == 33
    assert lines[0] == {"record": "layer", "layer": 1, "tokens": 1536}
    summary = lines[-1]
    assert summary["average"] == 960.0
    assert summary["schedule"] == "16:0.5,24:0"


def test_budget_file_with_figure(tmp_path):
    out = tmp_path / "report.jsonl"
    assert run("budget", "--n0", "307", "--layers", "32",
               "--schedule", "16:0.5,24:0", "--base", "576",
               "--out", str(out)) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert rows[-1]["average"] == 191.75
    assert rows[-1]["reduction_pct"] == 66.7101  # 6 significant digits
    png = tmp_path / "report.png"
    assert png.read_bytes()[:8] == PNG_MAGIC


def test_budget_no_plot(tmp_path):
    out = tmp_path / "report.jsonl"
    assert run("budget", "--n0", "307", "--out", str(out), "--no-plot") == 0
    assert out.exists()
    assert not (tmp_path / "report.png").exists()


def test_plan_prints_n0(capsys):
    assert run("plan", "--target", "192", "--schedule", "16:0.5,24:0",
               "--layers", "32") == 0
    assert capsys.readouterr().out.strip() == "307"


def test_sweep_csv_and_figure(tmp_path, archive):
    out = tmp_path / "sweep.csv"
    args = ["sweep", "--in", str(archive), "--k1", "6", "--k2", "3",
            "--w", "2", "--schedule", "2:0.5,3:0", "--layers", "8",
            "--sweep-axis", "k1", "--sweep-values", "0,3,6,9",
            "--metric", "drop_count", "--out", str(out)]
    assert run(*args) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "k1,drop_count,error"
    assert len(lines) == 5
    assert (tmp_path / "sweep.png").read_bytes()[:8] == PNG_MAGIC
    # byte-identical on repeat
    first = out.read_bytes()
    assert run(*args) == 0
    assert out.read_bytes() == first


def test_sweep_reports_row_errors_but_succeeds(tmp_path, archive):
    out = tmp_path / "sweep.csv"
    assert run("sweep", "--in", str(archive), "--k1", "6", "--k2", "3",
               "--w", "2", "--schedule", "2:0.5", "--layers", "8",
               "--sweep-axis", "k1", "--sweep-values", "3,99",
               "--out", str(out), "--no-plot") == 0
    rows = list(csv.reader(out.read_text().splitlines()))
    good, bad = rows[1], rows[2]
    assert good[0] == "3" and good[1] != "" and good[2] == ""
    assert bad[0] == "99" and bad[1] == "" and bad[2] != ""


def test_sweep_stage_layout_uses_semicolons(tmp_path, archive):
    out = tmp_path / "layout.csv"
    assert run("sweep", "--in", str(archive), "--k1", "6", "--k2", "3",
               "--w", "2", "--schedule", "2:0.5", "--layers", "8",
               "--sweep-axis", "stage_layout",
               "--sweep-values", "2:0.5,3:0;2:0.25,4:0.1,6:0",
               "--out", str(out), "--no-plot") == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3


def test_heatmap_outputs(tmp_path, archive):
    entries = load_archive(str(archive))
    stream = {
        "x_out": entries["tokens"][:9],
        "attn_text_0": entries["attn_text_0"],
        "attn_t2v_0": entries["attn_t2v_0"],
        "attn_text_1": entries["attn_text_1"],
        "attn_t2v_1": entries["attn_t2v_1"],
    }
    src = tmp_path / "stream.dueta"
    save_archive(str(src), stream)
    out = tmp_path / "heat.dueta"
    assert run("heatmap", "--in", str(src), "--out", str(out),
               "--schedule", "2:0.5,3:0.25", "--layers", "8",
               "--selector", "all") == 0
    got = load_archive(str(out))
    assert got["heat_0"].shape == (5, 9)
    assert got["heat_1"].shape == (5, 4)
    assert (tmp_path / "heat_stage0.png").read_bytes()[:8] == PNG_MAGIC
    assert (tmp_path / "heat_stage1.png").read_bytes()[:8] == PNG_MAGIC


def test_exit_codes(tmp_path, archive):
    missing = tmp_path / "nope.dueta"
    out = tmp_path / "o.dueta"
    # 3: missing input file
    assert run("compress", "--in", str(missing), "--out", str(out),
               "--k1", "2", "--k2", "1") == 3
    # 3: corrupt stream
    corrupt = tmp_path / "corrupt.dueta"
    corrupt.write_bytes(b"not an archive at all")
    assert run("compress", "--in", str(corrupt), "--out", str(out),
               "--k1", "2", "--k2", "1") == 3
    # 4: config exceeds token count
    assert run("compress", "--in", str(archive), "--out", str(out),
               "--k1", "20", "--k2", "20") == 4
    assert not out.exists()  # nothing written on failure
    # 2: malformed schedule / selector
    assert run("pipeline", "--in", str(archive), "--out", str(out),
               "--k1", "2", "--k2", "1", "--schedule", "junk") == 2
    assert run("pipeline", "--in", str(archive), "--out", str(out),
               "--k1", "2", "--k2", "1", "--selector", "bogus") == 2
    # 2: argparse-level misuse
    assert run("compress", "--in", str(archive), "--out", str(out)) == 2
    assert run("no-such-command") == 2
    # 0: help
    assert run("--help") == 0


def test_element_cap_flows_through_cli(tmp_path, monkeypatch, archive):
    monkeypatch.setenv("DUET_MAX_ELEMENTS", "10")
    out = tmp_path / "o.dueta"
    assert run("compress", "--in", str(archive), "--out", str(out),
               "--k1", "2", "--k2", "1") == 3


def test_console_script_installed():
    proc = subprocess.run([sys.executable, "-m", "duet_compress.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "generate" in proc.stdout
    which = subprocess.run(["duet", "--help"], capture_output=True, text=True)
    assert which.returncode == 0
