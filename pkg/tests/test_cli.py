import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from gaugekit.cli import (
    SpecError,
    bound_from_table,
    build_problem,
    generate_data,
    main,
    quantize_midrise,
    resolve_spec,
    validate_spec,
)
from gaugekit.families import build_family
from gaugekit.tvgrad import read_pgm, write_pgm


def _run(args, capsys=None):
    code = main(args)
    out = capsys.readouterr() if capsys else None
    return code, out


def _load(path):
    return json.loads(path.read_text())


def test_l1_fixture_report(tmp_path, capsys):
    code, _ = _run(["solve", "--spec", "l1_m5_n40", "--out", str(tmp_path)], capsys)
    assert code == 0
    report = _load(tmp_path / "report.json")
    assert report["bound_met"] and report["r_after"] <= 5
    with open(tmp_path / "atoms.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == report["r_after"]
    assert set(rows[0]) == {"label", "alpha", "cost", "kind"}
    # the verdict can be recomputed from the atom table alone
    bound = bound_from_table(report["m"], report["d"], report["delta"], rows)
    assert bound == report["bound"] and (len(rows) <= bound) == report["bound_met"]


def test_psd_fixture_has_at_most_four_rank_one_atoms(tmp_path, capsys):
    assert _run(["solve", "--spec", "psd_m4", "--out", str(tmp_path)], capsys)[0] == 0
    report = _load(tmp_path / "report.json")
    assert report["r_after"] <= 4
    assert all(row["label"].startswith("vvT") and row["kind"] == "ray_direction" for row in report["atoms"])


def test_replay_is_bit_identical(tmp_path, capsys):
    first, second = tmp_path / "a", tmp_path / "b"
    assert _run(["solve", "--spec", "nnls_m6_n50", "--out", str(first), "--seed", "11"], capsys)[0] == 0
    assert _run(["solve", "--spec", str(first / "report.json"), "--out", str(second)], capsys)[0] == 0
    a, b = _load(first / "report.json"), _load(second / "report.json")
    a.pop("timings"), b.pop("timings")
    assert a == b
    assert (first / "atoms.csv").read_text() == (second / "atoms.csv").read_text()


def test_tv_run_writes_images(tmp_path, capsys):
    spec = {
        "family": {"tag": "TVGradient2D", "params": {"H": 4, "W": 4}},
        "phi": {"kind": "gaussian", "m": 3, "seed": 1},
        "fit": {"kind": "EqualityIndicator", "y_gen": {"ground_truth": {"kind": "random_sparse", "k": 1}}},
    }
    path = tmp_path / "tv.json"
    path.write_text(json.dumps(spec))
    out = tmp_path / "out"
    assert _run(["solve", "--spec", str(path), "--out", str(out)], capsys)[0] == 0
    report = _load(out / "report.json")
    img, _ = read_pgm(out / "reconstruction.pgm")
    assert img.shape == (4, 4)
    masks = sorted(out.glob("atom_*.pgm"))
    assert len(masks) == report["r_after"]
    assert set(np.unique(read_pgm(masks[0])[0])) <= {0, 255}


def test_missing_y_names_the_field(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"family": {"tag": "L1Ball", "params": {"n": 3}},
                                "phi": {"kind": "dense", "rows": [[1, 0, 0]]},
                                "fit": {"kind": "SquaredL2"}}))
    code, out = _run(["solve", "--spec", str(path), "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "fit.y" in out.err


def test_schema_errors_carry_paths():
    base = {"family": {"tag": "L1Ball", "params": {"n": 2}}, "phi": {"kind": "gaussian", "m": 0},
            "fit": {"kind": "SquaredL2", "y": [1.0]}}
    with pytest.raises(SpecError, match="phi.m"):
        validate_spec(base)
    base["phi"] = {"kind": "gaussian"}
    with pytest.raises(SpecError, match="phi.m"):
        validate_spec(base)
    base["phi"] = {"kind": "gaussian", "m": 1}
    base["family"]["params"] = {}
    with pytest.raises(SpecError, match="family.params"):
        validate_spec(base)


def test_invalid_json_reports_line(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "family": ,\n}')
    code, out = _run(["solve", "--spec", str(path), "--out", str(tmp_path)], capsys)
    assert code == 2 and "line 2" in out.err


def test_dimension_mismatch_is_a_spec_error(tmp_path, capsys):
    path = tmp_path / "dims.json"
    path.write_text(json.dumps({"family": {"tag": "L1Ball", "params": {"n": 3}},
                                "phi": {"kind": "dense", "rows": [[1, 0]]},
                                "fit": {"kind": "SquaredL2", "y": [1.0]}}))
    assert _run(["solve", "--spec", str(path), "--out", str(tmp_path)], capsys)[0] == 2


def test_quantizer():
    np.testing.assert_allclose(quantize_midrise([0.3, -0.7], 2), [0.5, -0.5])
    np.testing.assert_allclose(quantize_midrise([0.3, -0.7], 2, step=0.2), [0.1, -0.1])
    np.testing.assert_allclose(quantize_midrise([5.0, -5.0, 0.0], 4), [1.5, -1.5, 0.5])


def _gen(noise):
    gauge = build_family("L1Ball", n=6)
    Phi = np.random.default_rng(0).standard_normal((3, 6))
    y_gen = {"ground_truth": {"kind": "random_sparse", "k": 2}, "noise": noise, "seed": 5}
    return generate_data(y_gen, gauge, Phi), Phi


def test_generate_noise_models():
    (y, u, clean), Phi = _gen({"kind": "none"})
    np.testing.assert_array_equal(y, Phi @ u)
    assert np.count_nonzero(u) == 2
    (y0, u0, _), _ = _gen({"kind": "gaussian", "sigma": 0.0})
    np.testing.assert_array_equal(y0, y)
    np.testing.assert_array_equal(u0, u)
    (yq, _, _), _ = _gen({"kind": "quantize", "levels": 2})
    np.testing.assert_array_equal(yq, quantize_midrise(clean, 2))


def test_image_ground_truth(tmp_path):
    write_pgm(tmp_path / "gt.pgm", np.array([[0, 255], [255, 0]]))
    spec = resolve_spec({
        "family": {"tag": "TVGradient2D", "params": {"H": 2, "W": 2}},
        "phi": {"kind": "dense", "rows": [[1, 0, 0, 0], [0, 1, 0, 0]]},
        "fit": {"kind": "EqualityIndicator",
                "y_gen": {"ground_truth": {"kind": "image", "path": str(tmp_path / "gt.pgm")}}},
    })
    problem, extras = build_problem(spec)
    np.testing.assert_allclose(extras["u_true"], [0, 1, 1, 0])
    np.testing.assert_allclose(problem.fit.y, [0, 1])


def test_generate_command(tmp_path, capsys):
    out = tmp_path / "gen"
    assert _run(["generate", "--spec", "tv_16x16_m8", "--out", str(out)], capsys)[0] == 0
    problem = _load(out / "problem.json")
    assert "y" in problem["fit"] and "y_gen" not in problem["fit"]
    data = _load(out / "data.json")
    np.testing.assert_allclose(data["y"], data["y_clean"])
    assert (out / "ground_truth.pgm").exists()


def test_verify_suites(capsys):
    code, out = _run(["verify", "--suite", "tv", "--count", "10", "--seed", "3"], capsys)
    assert code == 0 and "tv: 10/10 passed" in out.out
    code, out = _run(["verify", "--suite", "bounds", "--count", "20", "--threads", "2"], capsys)
    assert code == 0 and "20/20" in out.out


def test_verify_unknown_suite(capsys):
    assert _run(["verify", "--suite", "nope"], capsys)[0] == 2


def test_verify_threads_from_env(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("GAUGEKIT_THREADS", "3")
    code, out = _run(["verify", "--suite", "lmo", "--count", "6", "--out", str(tmp_path)], capsys)
    assert code == 0
    results = sorted(tmp_path.glob("lmo_*.json"))
    assert len(results) == 6 and all(_load(p)["passed"] for p in results)
    monkeypatch.setenv("GAUGEKIT_THREADS", "many")
    assert _run(["verify", "--suite", "lmo", "--count", "1"], capsys)[0] == 2


def test_verify_is_order_independent(capsys):
    _, serial = _run(["verify", "--suite", "faces", "--count", "8", "--threads", "1"], capsys)
    _, parallel = _run(["verify", "--suite", "faces", "--count", "8", "--threads", "4"], capsys)
    assert serial.out == parallel.out


def test_bound_violation_exits_one(tmp_path, capsys):
    spec = {"family": {"tag": "L1Ball", "params": {"n": 4}},
            "phi": {"kind": "gaussian", "m": 2, "seed": 0},
            "fit": {"kind": "SquaredL2", "y": [1.0, -1.0]}, "reg_weight": 0.01, "sparsify": False}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(spec))
    code, _ = _run(["solve", "--spec", str(path), "--out", str(tmp_path / "o")], capsys)
    report = _load(tmp_path / "o" / "report.json")
    assert code == (0 if report["bound_met"] else 1)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gaugekit", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gaugekit" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "gaugekit", "solve"], capture_output=True, text=True)
    assert proc.returncode == 2
