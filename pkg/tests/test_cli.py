import csv
import json
from pathlib import Path

import numpy as np
import pytest

from pinnmesh.cli import main

from conftest import sine_bottom_dict, square_dict


@pytest.fixture
def square_file(tmp_path):
    p = tmp_path / "square.json"
    p.write_text(json.dumps(square_dict()))
    return p


@pytest.fixture
def channel_file(tmp_path):
    p = tmp_path / "channel.json"
    p.write_text(json.dumps(sine_bottom_dict()))
    return p


TINY = ["--adam-epochs", "8", "--lbfgs-iters", "3", "--no-figures"]


def test_generate_tfi(square_file, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["generate", "--geometry", str(square_file),
                 "--method", "tfi", "--ni", "9", "--nj", "9",
                 "--out-dir", str(out), "--no-figures"])
    assert code == 0
    assert (out / "mesh.vtk").exists()
    assert (out / "quality.json").exists()
    assert (out / "quality_hist.csv").exists()
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["spec"]["method"] == "tfi"
    assert doc["spec"]["ni"] == 9
    assert "geometry_sha256" in doc["spec"]
    assert "outputs" in doc["run"]
    report = json.loads((out / "quality.json").read_text())
    assert report["n_cells"] == 64
    assert "max included angle" in capsys.readouterr().out


def test_generate_elliptic(square_file, tmp_path):
    out = tmp_path / "out"
    code = main(["generate", "--geometry", str(square_file),
                 "--method", "elliptic", "--ni", "9", "--nj", "9",
                 "--iterations", "40", "--init", "tfi",
                 "--format", "p3d", "--out-dir", str(out), "--no-figures"])
    assert code == 0
    assert (out / "mesh.p3d").exists()
    with open(out / "residual_history.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sweep", "max_update"]
    assert len(rows) == 41
    updates = [float(r[1]) for r in rows[1:]]
    assert all(np.isfinite(updates))


def test_generate_pinn_tiny(square_file, tmp_path):
    out = tmp_path / "out"
    code = main(["generate", "--geometry", str(square_file),
                 "--method", "pinn", "--ni", "5", "--nj", "5",
                 "--out-dir", str(out)] + TINY)
    assert code == 0
    assert (out / "mesh.vtk").exists()
    assert (out / "checkpoint.json").exists()
    with open(out / "training_log.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[1][0] == "adam"
    assert rows[-1][0] == "lbfgs"
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["spec"]["train_config"]["adam_epochs"] == 8


def test_generate_rerun_is_byte_identical(square_file, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(["generate", "--geometry", str(square_file),
                     "--method", "pinn", "--ni", "5", "--nj", "5",
                     "--out-dir", str(out)] + TINY)
        assert code == 0
        outs.append(out)
    a, b = outs
    for fname in ("mesh.vtk", "training_log.csv", "quality.json",
                  "quality_hist.csv", "checkpoint.json"):
        assert (a / fname).read_bytes() == (b / fname).read_bytes(), fname
    spec_a = json.loads((a / "manifest.json").read_text())["spec"]
    spec_b = json.loads((b / "manifest.json").read_text())["spec"]
    assert spec_a == spec_b


def test_generate_from_manifest_replays(square_file, tmp_path):
    first = tmp_path / "first"
    code = main(["generate", "--geometry", str(square_file),
                 "--method", "pinn", "--ni", "5", "--nj", "5",
                 "--out-dir", str(first)] + TINY)
    assert code == 0
    second = tmp_path / "second"
    code = main(["generate", "--from-manifest", str(first / "manifest.json"),
                 "--out-dir", str(second), "--no-figures"])
    assert code == 0
    assert (second / "mesh.vtk").read_bytes() \
        == (first / "mesh.vtk").read_bytes()
    assert (second / "training_log.csv").read_bytes() \
        == (first / "training_log.csv").read_bytes()


def test_replay_survives_cwd_change(square_file, tmp_path, monkeypatch):
    # The manifest must pin the geometry by absolute path so a replay
    # started from any directory finds it.
    monkeypatch.chdir(square_file.parent)
    first = tmp_path / "first"
    code = main(["generate", "--geometry", square_file.name,
                 "--method", "tfi", "--ni", "5", "--nj", "5",
                 "--out-dir", str(first), "--no-figures"])
    assert code == 0
    elsewhere = tmp_path / "elsewhere"
    elsewhere.mkdir()
    monkeypatch.chdir(elsewhere)
    second = tmp_path / "second"
    code = main(["generate", "--from-manifest", str(first / "manifest.json"),
                 "--out-dir", str(second), "--no-figures"])
    assert code == 0
    assert (second / "mesh.vtk").read_bytes() \
        == (first / "mesh.vtk").read_bytes()


def test_generate_rejects_bad_geometry(tmp_path, capsys):
    doc = square_dict()
    doc["left"][0] = [0.7, 0.0]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    code = main(["generate", "--geometry", str(p), "--method", "tfi",
                 "--out-dir", str(tmp_path / "o"), "--no-figures"])
    assert code == 2
    assert "corner" in capsys.readouterr().err


def test_generate_rejects_missing_file(tmp_path, capsys):
    code = main(["generate", "--geometry", str(tmp_path / "nope.json"),
                 "--method", "tfi", "--out-dir", str(tmp_path / "o"),
                 "--no-figures"])
    assert code == 2


def test_generate_rejects_unparseable_json(tmp_path, capsys):
    p = tmp_path / "geom.json"
    p.write_text("{]")
    code = main(["generate", "--geometry", str(p), "--method", "tfi",
                 "--out-dir", str(tmp_path / "o"), "--no-figures"])
    assert code == 2


def test_evaluate_roundtrip(square_file, tmp_path, capsys):
    gen = tmp_path / "gen"
    main(["generate", "--geometry", str(square_file), "--method", "tfi",
          "--ni", "7", "--nj", "7", "--out-dir", str(gen), "--no-figures"])
    out = tmp_path / "eval"
    code = main(["evaluate", "--mesh", str(gen / "mesh.vtk"),
                 "--out-dir", str(out), "--no-figures"])
    assert code == 0
    report = json.loads((out / "quality.json").read_text())
    assert report["n_cells"] == 36
    assert report["max_angle_deg"] == pytest.approx(90.0)
    assert "cells" in capsys.readouterr().out


def test_evaluate_missing_mesh(tmp_path):
    code = main(["evaluate", "--mesh", str(tmp_path / "nope.vtk"),
                 "--out-dir", str(tmp_path / "o"), "--no-figures"])
    assert code == 2


def test_fit_boundary(channel_file, tmp_path):
    out = tmp_path / "fit"
    code = main(["fit-boundary", "--geometry", str(channel_file),
                 "--samples", "65", "--out-dir", str(out), "--no-figures"])
    assert code == 0
    with open(out / "boundary_fit.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4 * 65
    sides = {r["side"] for r in rows}
    assert sides == {"bottom", "top", "left", "right"}
    bottom = [r for r in rows if r["side"] == "bottom"]
    assert float(bottom[0]["x"]) == 0.0
    assert float(bottom[-1]["x"]) == 1.0


def test_sweep_tiny(channel_file, tmp_path):
    out = tmp_path / "sweep"
    code = main(["sweep", "--geometry", str(channel_file),
                 "--layers", "1,2", "--neurons", "6", "--seeds", "0",
                 "--adam-epochs", "6", "--lbfgs-iters", "2",
                 "--out-dir", str(out), "--no-figures"])
    assert code == 0
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert [r["layers"] for r in rows] == ["1", "2"]
    assert all(r["error"] == "" for r in rows)
    assert all(float(r["loss_total"]) > 0 for r in rows)

    # Appending keeps the existing rows and writes no second header.
    code = main(["sweep", "--geometry", str(channel_file),
                 "--layers", "3", "--neurons", "6", "--seeds", "0",
                 "--adam-epochs", "6", "--lbfgs-iters", "2",
                 "--out-dir", str(out), "--no-figures"])
    assert code == 0
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert [r["layers"] for r in rows] == ["1", "2", "3"]


def test_sweep_threads_match_serial(channel_file, tmp_path):
    args = ["--geometry", str(channel_file), "--layers", "1,2",
            "--neurons", "5", "--seeds", "0", "--adam-epochs", "5",
            "--lbfgs-iters", "2", "--no-figures"]
    a = tmp_path / "serial"
    b = tmp_path / "threaded"
    assert main(["sweep"] + args + ["--out-dir", str(a),
                                    "--threads", "1"]) == 0
    assert main(["sweep"] + args + ["--out-dir", str(b),
                                    "--threads", "2"]) == 0

    def rows(path):
        with open(path / "sweep.csv", newline="") as fh:
            data = list(csv.DictReader(fh))
        return [{k: v for k, v in r.items() if k != "wall_time_s"}
                for r in data]

    assert rows(a) == rows(b)


PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def test_figures_render_alongside_data(square_file, channel_file, tmp_path):
    out = tmp_path / "ell"
    assert main(["generate", "--geometry", str(square_file),
                 "--method", "elliptic", "--ni", "7", "--nj", "7",
                 "--iterations", "20", "--out-dir", str(out)]) == 0
    for name in ("mesh.png", "quality_hist.png", "residual_history.png"):
        assert (out / name).read_bytes()[:8] == PNG_MAGIC, name

    out = tmp_path / "pinn"
    assert main(["generate", "--geometry", str(square_file),
                 "--method", "pinn", "--ni", "5", "--nj", "5",
                 "--adam-epochs", "6", "--lbfgs-iters", "2",
                 "--out-dir", str(out)]) == 0
    assert (out / "training_curves.png").read_bytes()[:8] == PNG_MAGIC

    out = tmp_path / "fit"
    assert main(["fit-boundary", "--geometry", str(channel_file),
                 "--samples", "40", "--out-dir", str(out)]) == 0
    assert (out / "boundary_fit.png").read_bytes()[:8] == PNG_MAGIC

    out = tmp_path / "sweep"
    assert main(["sweep", "--geometry", str(square_file), "--layers", "1",
                 "--neurons", "4", "--seeds", "0", "--adam-epochs", "4",
                 "--lbfgs-iters", "1", "--out-dir", str(out)]) == 0
    assert (out / "sweep.png").read_bytes()[:8] == PNG_MAGIC

    doc = json.loads((tmp_path / "ell" / "manifest.json").read_text())
    assert "quality_hist_figure" in doc["run"]["outputs"]


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "pinnmesh" in capsys.readouterr().out
