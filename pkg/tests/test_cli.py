"""End-to-end command-line runs (in-process)."""

import json

import pytest

from winoshare.cli import main
from winoshare.tensors import Tensor
from winoshare.tensorio import read_tensor, read_text_tensor, write_tensor

SMALL_MODEL = """\
model: small
batch: 2
---
name: c1
kind: conv
in: 2x8x8
out: 4x8x8
kernel: 3x3
pad: 1
relu: true
---
name: p1
kind: pool
in: 4x8x8
out: 4x4x4
op: max
window: 2
---
name: c2
kind: conv
in: 4x4x4
out: 2x4x4
kernel: 1x1
"""


@pytest.fixture
def model_path(tmp_path):
    p = tmp_path / "small.model"
    p.write_text(SMALL_MODEL)
    return str(p)


def test_verify_command_passes(model_path, capsys):
    assert main(["verify", model_path, "--shrink", "2", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 2
    assert "FAIL" not in out


def test_run_command_roundtrip(model_path, tmp_path, capsys):
    x = Tensor(2, 8, 8, list(range(-64, 64)))
    inp = tmp_path / "x.bin"
    write_tensor(inp, x)
    outp = tmp_path / "y.bin"
    rc = main(["run", model_path, "--input", str(inp),
               "--output", str(outp), "--seed", "3"])
    assert rc == 0
    y = read_tensor(outp)
    assert y.dims == (2, 4, 4)
    # Determinism: same seed, same result.
    outp2 = tmp_path / "y2.bin"
    main(["run", model_path, "--input", str(inp),
          "--output", str(outp2), "--seed", "3"])
    assert read_tensor(outp2) == y


def test_run_text_output(model_path, tmp_path):
    x = Tensor(2, 8, 8, [1] * 128)
    inp = tmp_path / "x.bin"
    write_tensor(inp, x)
    outp = tmp_path / "y.txt"
    assert main(["run", model_path, "--input", str(inp),
                 "--output", str(outp)]) == 0
    assert read_text_tensor(outp).dims == (2, 4, 4)


def test_model_command_text_and_json(model_path, capsys):
    assert main(["model", model_path, "--config", "ultra96-f4.cfg"]) == 0
    text = capsys.readouterr().out
    assert "c1" in text and "dsp_use: 256" in text
    assert main(["model", model_path, "--config", "ultra96-f4.cfg",
                 "--report", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["kind"] == "model"
    assert [e["name"] for e in doc["layers"]] == ["c1", "c2"]
    assert doc["bram_total"] == 370


def test_simulate_command_with_trace(model_path, tmp_path, capsys):
    trace = tmp_path / "mem.trace"
    rc = main(["simulate", model_path, "--config", "ultra96-f4.cfg",
               "--shrink", "2", "--trace", str(trace), "--report", "json"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert all(entry["output_exact"] for entry in doc["layers"])
    lines = trace.read_text().strip().splitlines()
    assert lines[0] == "# layer c1"
    assert any(", R" in ln for ln in lines)


def test_explore_command(model_path, capsys):
    rc = main(["explore", model_path, "--omega", "4",
               "--dsp", "360", "--bram", "432"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "chosen: M=" in out and "dsp_use:" in out


def test_explore_requires_budgets(model_path, capsys):
    assert main(["explore", model_path, "--omega", "4"]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_model_is_an_error(capsys):
    assert main(["verify", "nosuch.model"]) == 2
    assert "not found" in capsys.readouterr().err


def test_bundled_models_resolve(capsys):
    assert main(["model", "vgg16.model", "--config", "zcu102-f4.cfg",
                 "--report", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["layers"]) == 13
