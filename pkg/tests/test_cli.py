"""End-to-end tests of the command-line interface at tiny scale."""

import filecmp
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from cavityfill import io as fio
from cavityfill.cli import main
from cavityfill.solver import SolverConfig

import synthetic


def write_synthetic_dataset(out: Path, nb=6, ns=6, nx=31) -> Path:
    """Fabricate a dataset directory from the analytic stand-in map."""
    ts = synthetic.make_training(nb=nb, ns=ns, nx=nx)
    (out / "couples").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (prm, prof) in enumerate(zip(ts.inputs, ts.outputs)):
        cid = fio.couple_id(i)
        csv_path, sidecar_path = fio.dataset_paths(out, cid)
        fio.write_profile(csv_path, sidecar_path, prof)
        entries.append(
            {
                "id": cid,
                "B": prm.B,
                "S": prm.S,
                "status": "ok",
                "csv": str(csv_path.relative_to(out)),
                "sidecar": str(sidecar_path.relative_to(out)),
                "wall_touch_time": prof.t,
            }
        )
    fio.write_dataset_index(out, ts.grid_descriptor, 1.0, SolverConfig(nx=nx), entries)
    return out


def tree_bytes(root: Path, exclude=("manifest.json",)) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name not in exclude
    }


class TestSimulate:
    def test_writes_profile_pair(self, tmp_path, capsys):
        rc = main([
            "simulate", "--B", "10", "--S", "10", "--n", "1",
            "--nx", "41", "--out", str(tmp_path / "sim"),
        ])
        assert rc == 0
        assert "wall-touch time" in capsys.readouterr().out
        out = tmp_path / "sim"
        prof = fio.read_profile(out / "profile.csv")
        assert prof.nx == 41
        assert prof.h[-1] >= 1e-8
        assert (out / "manifest.json").exists()
        meta = json.loads((out / "profile.json").read_text())
        assert meta["B"] == 10.0 and meta["nx"] == 41

    def test_minimal_grid_smoke(self, tmp_path):
        rc = main([
            "simulate", "--B", "2", "--S", "5", "--n", "1",
            "--nx", "3", "--out", str(tmp_path / "s3"),
        ])
        assert rc == 0

    def test_identical_invocations_identical_files(self, tmp_path):
        for name in ("a", "b"):
            assert main([
                "simulate", "--B", "8", "--S", "12", "--n", "0.8",
                "--nx", "31", "--out", str(tmp_path / name),
            ]) == 0
        assert (tmp_path / "a" / "profile.csv").read_bytes() == \
            (tmp_path / "b" / "profile.csv").read_bytes()

    def test_scientific_notation_accepted(self, tmp_path):
        rc = main([
            "simulate", "--B", "1e1", "--S", "1.0e1", "--n", "1",
            "--nx", "31", "--wall-touch-threshold", "1e-6",
            "--out", str(tmp_path / "sci"),
        ])
        assert rc == 0


class TestDataset:
    def test_regular_grid(self, tmp_path):
        out = tmp_path / "ds"
        rc = main([
            "dataset", "--grid", "2x2", "--b-range", "5", "15",
            "--s-range", "5", "15", "--n", "1", "--nx", "31",
            "--out", str(out),
        ])
        assert rc == 0
        index = json.loads((out / "index.json").read_text())
        assert len(index["couples"]) == 4
        assert all(e["status"] == "ok" for e in index["couples"])
        ts = fio.read_dataset(out)
        assert len(ts.inputs) == 4

    def test_resume_reproduces_uninterrupted_run(self, tmp_path):
        args = [
            "dataset", "--grid", "2x2", "--b-range", "5", "15",
            "--s-range", "5", "15", "--n", "1", "--nx", "31",
        ]
        full = tmp_path / "full"
        assert main(args + ["--out", str(full)]) == 0

        resumed = tmp_path / "resumed"
        assert main(args + ["--out", str(resumed)]) == 0
        # Interrupt: drop two couples and the index, then re-run.
        (resumed / "couples" / "c0001.csv").unlink()
        (resumed / "couples" / "c0001.json").unlink()
        (resumed / "couples" / "c0003.csv").unlink()
        (resumed / "index.json").unlink()
        assert main(args + ["--out", str(resumed)]) == 0
        assert tree_bytes(full) == tree_bytes(resumed)

    def test_workers_do_not_change_outputs(self, tmp_path):
        args = [
            "dataset", "--grid", "2x2", "--b-range", "5", "15",
            "--s-range", "5", "15", "--n", "1", "--nx", "31",
        ]
        serial = tmp_path / "w1"
        parallel = tmp_path / "w2"
        assert main(args + ["--out", str(serial), "--workers", "1"]) == 0
        assert main(args + ["--out", str(parallel), "--workers", "2"]) == 0
        assert tree_bytes(serial) == tree_bytes(parallel)

    def test_random_grid_is_seeded(self, tmp_path):
        args = [
            "dataset", "--random", "3", "--b-range", "5", "15",
            "--s-range", "5", "15", "--n", "1", "--nx", "31", "--seed", "11",
        ]
        a, b = tmp_path / "ra", tmp_path / "rb"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert tree_bytes(a) == tree_bytes(b)

    def test_bad_grid_spec_is_usage_error(self, tmp_path, capsys):
        rc = main(["dataset", "--grid", "20", "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "NBxNS" in capsys.readouterr().err


class TestTrainValidate:
    def test_train_then_validate(self, tmp_path, capsys):
        ds = write_synthetic_dataset(tmp_path / "ds")
        model_dir = tmp_path / "model"
        rc = main([
            "train", "--dataset", str(ds), "--beta", "2", "--p", "4",
            "--out", str(model_dir),
        ])
        assert rc == 0
        assert (model_dir / "surrogate.json").exists()

        rep_dir = tmp_path / "rep"
        rc = main([
            "validate", "--model", str(model_dir / "surrogate.json"),
            "--dataset", str(ds), "--out", str(rep_dir),
        ])
        assert rc == 0
        report = json.loads((rep_dir / "report.json").read_text())
        assert report["median"] <= 1e-8  # interpolating order on exact map
        per_couple = (rep_dir / "per_couple.csv").read_text().splitlines()
        assert per_couple[0] == "B,S,l2_error"
        assert len(per_couple) == 1 + report["count"]

    def test_underdetermined_is_rejected(self, tmp_path, capsys):
        ds = write_synthetic_dataset(tmp_path / "ds", nb=3, ns=3)  # 9 couples
        rc = main([
            "train", "--dataset", str(ds), "--beta", "4", "--p", "2",
            "--out", str(tmp_path / "m"),
        ])
        assert rc == 1
        err = capsys.readouterr().err
        assert "9 samples" in err and "15 coefficients" in err

    def test_order_zero_model_is_dataset_mean(self, tmp_path):
        ds = write_synthetic_dataset(tmp_path / "ds", nb=4, ns=4)
        model_dir = tmp_path / "m0"
        assert main([
            "train", "--dataset", str(ds), "--beta", "0", "--p", "2",
            "--out", str(model_dir),
        ]) == 0
        from cavityfill.surrogate import evaluate, load_surrogate
        from cavityfill.model import RheoParams

        surr = load_surrogate(model_dir / "surrogate.json")
        ts = fio.read_dataset(ds)
        mean = ts.output_matrix().mean(axis=0)
        got = evaluate(surr, RheoParams(100.0, 60.0, 1.0)).h
        np.testing.assert_allclose(got, np.maximum(mean, 0.0), atol=1e-10)


class TestInvert:
    @pytest.fixture()
    def model_path(self, tmp_path):
        ds = write_synthetic_dataset(tmp_path / "ds")
        model_dir = tmp_path / "model"
        assert main([
            "train", "--dataset", str(ds), "--beta", "2", "--p", "4",
            "--out", str(model_dir),
        ]) == 0
        return model_dir / "surrogate.json"

    def test_round_trip_recovers_couple(self, tmp_path, model_path):
        # Full-pipeline self-consistency on the analytic map: write an
        # observation file, invert it, recover the generating couple.
        from cavityfill.model import RheoParams
        from cavityfill.solver import HeightProfile

        truth = RheoParams(60.0, 25.0, 1.0)
        prof = HeightProfile(
            h=synthetic.fake_profile(60.0, 25.0, 31), t=1.0, params=truth,
            provenance="pde",
        )
        obs_dir = tmp_path / "obs"
        obs_dir.mkdir()
        fio.write_profile(obs_dir / "obs.csv", obs_dir / "obs.json", prof)

        inv_dir = tmp_path / "inv"
        rc = main([
            "invert", "--model", str(model_path),
            "--observation", str(obs_dir / "obs.csv"),
            "--overlay", "--out", str(inv_dir),
        ])
        assert rc == 0
        result = json.loads((inv_dir / "result.json").read_text())
        assert result["B"] == pytest.approx(60.0, rel=1e-3)
        assert result["S"] == pytest.approx(25.0, rel=1e-3)
        assert result["relative_error"] <= 1e-3
        assert result["converged"] is True
        overlay = (inv_dir / "overlay.csv").read_text().splitlines()
        assert overlay[0] == "x,h_observed,h_fitted"
        assert len(overlay) == 32

    def test_boundary_estimate_warns(self, tmp_path, model_path, capsys):
        from cavityfill.model import RheoParams
        from cavityfill.solver import HeightProfile

        prof = HeightProfile(
            h=synthetic.fake_profile(249.9, 0.06, 31), t=1.0,
            params=RheoParams(249.9, 0.06, 1.0), provenance="pde",
        )
        obs_dir = tmp_path / "obsb"
        obs_dir.mkdir()
        fio.write_profile(obs_dir / "obs.csv", obs_dir / "obs.json", prof)
        rc = main([
            "invert", "--model", str(model_path),
            "--observation", str(obs_dir / "obs.csv"),
            "--out", str(tmp_path / "invb"),
        ])
        assert rc == 0
        # boundary / low-S notes surface on stderr
        assert "warning" in capsys.readouterr().err.lower()

    def test_arbitrary_monotone_x_is_resampled(self, tmp_path, model_path):
        # Lab-style observation: non-uniform x spanning [0, 1].
        x = np.sort(np.concatenate([[0.0, 1.0], np.random.default_rng(5).uniform(0, 1, 40)]))
        h = np.interp(x, np.linspace(0, 1, 31), synthetic.fake_profile(60.0, 25.0, 31))
        lines = ["x,h"] + [f"{float(xi)!r},{float(hi)!r}" for xi, hi in zip(x, h)]
        obs = tmp_path / "lab.csv"
        obs.write_text("\n".join(lines) + "\n")
        rc = main([
            "invert", "--model", str(model_path), "--observation", str(obs),
            "--out", str(tmp_path / "invlab"),
        ])
        assert rc == 0
        result = json.loads((tmp_path / "invlab" / "result.json").read_text())
        assert result["B"] == pytest.approx(60.0, rel=0.05)


class TestNoiseStudy:
    def test_report_and_reproducibility(self, tmp_path):
        ds = write_synthetic_dataset(tmp_path / "ds")
        model_dir = tmp_path / "model"
        assert main([
            "train", "--dataset", str(ds), "--beta", "2", "--p", "4",
            "--out", str(model_dir),
        ]) == 0
        args = [
            "noise-study", "--model", str(model_dir / "surrogate.json"),
            "--dataset", str(ds), "--alphas", "0,0.05", "--couples", "4",
            "--seed", "17",
        ]
        a, b = tmp_path / "nsa", tmp_path / "nsb"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        report = json.loads((a / "report.json").read_text())
        assert [r["alpha"] for r in report["rows"]] == [0.0, 0.05]
        assert report["rows"][0]["median"] <= report["rows"][1]["median"] + 1e-12
        overlays = sorted((a / "overlays").glob("*.csv"))
        assert len(overlays) == 6  # 3 couples x 2 alphas
        head = overlays[0].read_text().splitlines()[0]
        assert head == "x,h_clean,h_noisy,h_fitted"


class TestConvergence:
    def test_study_and_gate(self, tmp_path):
        ok = main([
            "convergence", "--B", "10", "--S", "10", "--n", "1",
            "--nx-list", "26,51", "--nx-ref", "101", "--min-order", "0.0",
            "--out", str(tmp_path / "cv"),
        ])
        assert ok == 0
        errors = (tmp_path / "cv" / "errors.csv").read_text().splitlines()
        assert errors[0] == "nx,dx,l2_error"
        assert len(errors) == 3

        gated = main([
            "convergence", "--B", "10", "--S", "10", "--n", "1",
            "--nx-list", "26,51", "--nx-ref", "101", "--min-order", "5.0",
            "--out", str(tmp_path / "cv2"),
        ])
        assert gated == 3


class TestUsageAndConfig:
    def test_missing_required_flag(self, capsys):
        assert main(["simulate", "--B", "1", "--S", "1"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 1

    def test_config_file_supplies_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nx": 41}))
        out = tmp_path / "sim"
        rc = main([
            "simulate", "--B", "10", "--S", "10", "--n", "1",
            "--config", str(cfg), "--out", str(out),
        ])
        assert rc == 0
        assert json.loads((out / "profile.json").read_text())["nx"] == 41

    def test_cli_overrides_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nx": 41}))
        out = tmp_path / "sim"
        rc = main([
            "simulate", "--B", "10", "--S", "10", "--n", "1",
            "--config", str(cfg), "--nx", "31", "--out", str(out),
        ])
        assert rc == 0
        assert json.loads((out / "profile.json").read_text())["nx"] == 31

    def test_profile_sets_default_nx(self, tmp_path):
        out = tmp_path / "simp"
        rc = main([
            "simulate", "--B", "50", "--S", "80", "--n", "1",
            "--profile", "desk", "--out", str(out),
        ])
        assert rc == 0
        assert json.loads((out / "profile.json").read_text())["nx"] == 151

    def test_missing_config_file(self, tmp_path, capsys):
        rc = main([
            "simulate", "--B", "1", "--S", "1", "--n", "1",
            "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o"),
        ])
        assert rc == 1
