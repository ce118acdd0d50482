import json
import os

import pytest

from momenta.catalog import CUBIC_A, CUBIC_B
from momenta.cli import main


@pytest.fixture(autouse=True)
def isolated_config(monkeypatch, tmp_path):
    for name in list(os.environ):
        if name.startswith("MOMENTA_"):
            monkeypatch.delenv(name)
    monkeypatch.setenv("MOMENTA_CONFIG", "")
    monkeypatch.setenv("MOMENTA_CACHE_DIR", str(tmp_path / "cache"))


def _run(capsys, *argv):
    main(list(argv))
    return capsys.readouterr()


def _exit_code(*argv):
    with pytest.raises(SystemExit) as exc_info:
        main(list(argv))
    return exc_info.value.code


def test_no_arguments_prints_help(capsys):
    assert _exit_code() == 0
    assert "COMMAND" in capsys.readouterr().out


def test_help_topics(capsys):
    out = _run(capsys, "help").out
    assert "formulas" in out and "exit-codes" in out
    assert "x varying fastest" in _run(capsys, "help", "vox").out
    assert "No help topic found" in _run(capsys, "help", "nothing").out


def test_moments(capsys):
    out = _run(capsys, "moments", "--expr", "1", "--lmax", "2").out
    document = json.loads(out)
    assert document["kind"] == "moments"
    assert document["flavor"] == "volumetric"
    assert document["lmax"] == 2
    assert document["tensors"]["0"][0] == pytest.approx(4.18879020478639)


def test_moments_check_trace(capsys):
    captured = _run(capsys, "moments", "-e", "x^2 + 1", "-l", "4", "-f", "spherical", "--check-trace")
    assert "trace relation (spherical): holds" in captured.err


def test_moments_to_file(capsys, tmp_path):
    path = tmp_path / "m.json"
    assert _run(capsys, "moments", "-e", CUBIC_A, "-l", "3", "-o", str(path)).out == ""
    assert json.loads(path.read_text())["lmax"] == 3


def test_invalid_formula(capsys):
    assert _exit_code("moments", "--expr", "3*x**2") == 2
    assert "position 3" in capsys.readouterr().err


def test_missing_voxel_file(capsys, tmp_path):
    assert _exit_code("moments", "--voxels", str(tmp_path / "missing.vox")) == 4


def test_radially_constant_needs_volumetric(capsys):
    assert _exit_code("moments", "-e", "x", "-f", "spherical", "--radially-constant") == 2
    assert "radially-constant" in capsys.readouterr().err


def test_decompose(capsys, tmp_path):
    path = tmp_path / "m.json"
    _run(capsys, "moments", "-e", CUBIC_B, "-l", "3", "-o", str(path))
    document = json.loads(_run(capsys, "decompose", "--moments", str(path)).out)
    assert document["kind"] == "decompositions"
    assert len(document["orders"]) == 4


def test_basis(capsys):
    document = json.loads(_run(capsys, "basis", "--lmax", "1", "--no-cache").out)
    assert document["kind"] == "invariant_set"
    assert document["mode"] == "specific"
    assert len(document["members"]) == 2


def test_basis_cache(capsys):
    first = _run(capsys, "basis", "--lmax", "2").out
    second = _run(capsys, "basis", "--lmax", "2").out
    assert first == second
    assert "Cached sets: 1" in _run(capsys, "cache", "status").out
    listing = _run(capsys, "cache", "list").out.splitlines()
    assert len(listing) == 1
    assert listing[0].startswith("lmax=2 flavor=volumetric mode=specific robust=2,2 seed=0")
    assert "Removed 1 cached sets" in _run(capsys, "cache", "purge").out
    assert "Cached sets: 0" in _run(capsys, "cache", "status").out


def test_basis_trace_and_dot(capsys, tmp_path):
    trace = tmp_path / "trace.jsonl"
    dot_dir = tmp_path / "dot"
    captured = _run(
        capsys, "basis", "-l", "1", "--trace", str(trace), "--dot-dir", str(dot_dir)
    )
    assert len(json.loads(captured.out)["members"]) == 2
    assert "Wrote 2 DOT files" in captured.err
    assert sorted(os.listdir(dot_dir)) == ["invariant_001.dot", "invariant_002.dot"]
    assert len(trace.read_text().splitlines()) >= 2


def test_basis_spherical_moments_mode(capsys):
    assert _exit_code("basis", "-l", "2", "-f", "spherical", "-m", "langbein", "--no-cache") == 2


def test_basis_invalid_robust(capsys):
    assert _exit_code("basis", "--robust", "2,1") == 2


def test_basis_reference_without_robust_part(capsys, tmp_path):
    path = tmp_path / "m.json"
    _run(capsys, "moments", "-e", CUBIC_A, "-l", "2", "-o", str(path))
    # The moments of the cubic vanish up to order 2.
    assert _exit_code("basis", "-l", "2", "--reference", str(path), "--no-cache") == 3
    assert "minimal flexible set" in capsys.readouterr().err


def test_eval_catalog(capsys):
    document = json.loads(
        _run(capsys, "eval", "--catalog", "irreducible-order3-pure", "-e", CUBIC_B).out
    )
    assert document["kind"] == "descriptor"
    assert len(document["values"]) == 4
    csv = _run(capsys, "eval", "--catalog", "irreducible-order3-pure", "-e", CUBIC_B, "--csv").out
    lines = csv.splitlines()
    assert lines[0] == "index,role,pattern,value"
    assert len(lines) == 5


def test_eval_set_file(capsys, tmp_path):
    path = tmp_path / "set.json"
    _run(capsys, "basis", "-l", "2", "--no-cache", "-o", str(path))
    document = json.loads(_run(capsys, "eval", str(path), "-e", "x^2 + y + 1").out)
    assert len(document["values"]) == 7
    assert document["lmax"] == 2


def test_eval_needs_a_set(capsys):
    assert _exit_code("eval", "-e", "x") == 2
    assert "--catalog" in capsys.readouterr().err


def test_demo(capsys):
    out = _run(capsys, "demo").out
    assert "[homogeneous-order3-7]" in out
    verdicts = [line for line in out.splitlines() if line.startswith("distinguished")]
    assert len(verdicts) == 3
    assert verdicts[0].startswith("distinguished: false")
    assert verdicts[1].startswith("distinguished: false")
    assert verdicts[2].startswith("distinguished: true, member #4, 1418 vs 1152 (x c^10)")


def test_demo_rotated(capsys):
    out = _run(capsys, "demo", "--rotate", "5").out
    assert "rotated f1 vs f1: equal" in out
    assert "member #4, 1418 vs 1152" in out


def test_export_dot(capsys, tmp_path):
    out = _run(capsys, "export-dot", "--catalog", "minimal-lm3", "--out-dir", str(tmp_path))
    assert len(out.out.splitlines()) == 22


def test_counts(capsys):
    lines = _run(capsys, "counts", "--max-lmax", "3").out.splitlines()
    assert lines[-1].split() == ["3", "10", "7", "17"]
    lines = _run(capsys, "counts", "--per-order", "--max-lmax", "3").out.splitlines()
    assert lines[-1].split() == ["3", "5", "2", "7"]
    lines = _run(capsys, "counts", "-m", "minimal", "--published", "--max-lmax", "3").out.splitlines()
    assert lines[0].split()[-1] == "published"
    assert lines[-1].split() == ["3", "10", "12", "22", "22"]


def test_dump_config(capsys, monkeypatch):
    monkeypatch.setenv("MOMENTA_LMAX", "5")
    out = _run(capsys, "dump-config", "--skip-default").out
    assert "lmax = 5" in out
    assert "MOMENTA_LMAX" in out
