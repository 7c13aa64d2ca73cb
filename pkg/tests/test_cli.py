"""End-to-end tests of the command line interface."""

import json

import pytest

from qptopo.cli import main
from qptopo.fields import parse_model, serialize_model, builtin_model


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_model_list(capsys):
    code, out, _ = run(capsys, "model", "list")
    assert code == 0
    assert set(json.loads(out)["models"]) >= {"c3", "d4"}


def test_model_show_round_trips(capsys):
    code, out, _ = run(capsys, "model", "show", "c3")
    assert code == 0
    assert serialize_model(parse_model(out)) == serialize_model(builtin_model("c3"))


def test_unknown_model_is_argument_error(capsys):
    code, _, err = run(capsys, "model", "show", "nosuch")
    assert code == 2
    assert "nosuch" in err


def test_missing_required_argument(capsys):
    code, _, err = run(capsys, "label", "--model", "c3", "--level", "0")
    assert code == 2
    assert "--dir" in err


def test_malformed_direction_is_argument_error(capsys):
    code, _, err = run(capsys, "label", "--model", "c3", "--level", "0",
                       "--dir", "1,2")
    assert code == 2
    assert "comma-separated" in err


def test_version(capsys):
    from qptopo import __version__
    code, out, _ = run(capsys, "--version")
    assert code == 0
    assert __version__ in out


def test_label_axis_direction(capsys):
    code, out, _ = run(capsys, "label", "--model", "c3", "--level", "0",
                       "--dir", "0,0,1", "--res", "32")
    assert code == 0
    assert json.loads(out)["kind"] == "all_closed"


def test_label_threads_flag_does_not_change_output(capsys):
    args = ["label", "--model", "c3", "--level", "0", "--dir", "0,0,1",
            "--res", "32"]
    _, out1, _ = run(capsys, *args)
    _, out2, _ = run(capsys, "--threads", "4", *args)
    assert out1 == out2


def test_mesh_report_and_obj(capsys, tmp_path):
    obj = tmp_path / "surf.obj"
    code, out, _ = run(capsys, "mesh", "--model", "c3", "--level", "0",
                       "--res", "24", "--out", str(obj))
    assert code == 0
    report = json.loads(out)
    assert [c["genus"] for c in report["components"]] == [3]
    assert report["components"][0]["rank"] == 3
    text = obj.read_text()
    assert text.startswith("#") or text.startswith("v ")
    manifest = json.loads((tmp_path / "surf.obj.manifest.json").read_text())
    assert manifest["parameters"]["res"] == 24
    assert "version" in manifest and "timestamp" in manifest


def test_trace_outputs_and_determinism(capsys, tmp_path):
    csv1 = tmp_path / "a.csv"
    csv2 = tmp_path / "b.csv"
    svg = tmp_path / "a.svg"
    args = ["trace", "--model", "c3", "--normal", "0,0,1", "--level", "2.0",
            "--start", "0,0.2", "--max-arc", "5"]
    code, out, _ = run(capsys, *args, "--out", str(csv1), "--plot", str(svg))
    assert code == 0
    assert json.loads(out)["verdict"] == "closed"
    code2, _, _ = run(capsys, *args, "--out", str(csv2))
    assert code2 == 0
    assert csv1.read_bytes() == csv2.read_bytes()
    assert csv1.read_text().splitlines()[0] == "x,y"
    assert svg.read_text().startswith("<svg")


def test_interval_axis(capsys):
    code, out, _ = run(capsys, "interval", "--model", "c3", "--dir", "1,0,0",
                       "--res", "24", "--tol", "0.05")
    assert code == 0
    iv = json.loads(out)
    assert iv["status"] in ("interval", "point", "empty")


def test_homology_basis_csv(capsys):
    code, out, _ = run(capsys, "homology", "basis", "--model", "c3",
                       "--level", "0", "--res", "24")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "component,loop,pairing_row,class_x,class_y,class_z"
    assert len(lines) == 1 + 6  # genus 3 => 6 basis loops
    row = lines[1].split(",")
    assert row[0] == "0" and len(row) == 6


def test_scan_dim_render_pipeline(capsys, tmp_path):
    csv = tmp_path / "map.csv"
    ppm = tmp_path / "map.ppm"
    code, out, _ = run(capsys, "scan", "--model", "c3", "--level", "0",
                       "--grid", "3", "--res", "24", "--reduced",
                       "--out", str(csv), "--png", str(ppm))
    assert code == 0
    assert json.loads(out)["cells"] == 9
    assert csv.read_text().startswith("bx_num,bx_den,by_num,by_den,")
    assert ppm.read_bytes().startswith(b"P6")

    code, out, _ = run(capsys, "dim", "--map", str(csv), "--scales", "3")
    assert code == 0
    rep = json.loads(out)
    assert len(rep["scales"]) == len(rep["counts"]) >= 2

    svg = tmp_path / "map.svg"
    code, out, _ = run(capsys, "render", "--map", str(csv), "--out", str(svg))
    assert code == 0
    assert svg.read_text().startswith("<svg")


def test_dim_missing_file_is_computation_error(capsys, tmp_path):
    code, _, err = run(capsys, "dim", "--map", str(tmp_path / "none.csv"))
    assert code == 1
    assert json.loads(err.strip())["error"] == "FileNotFoundError"
