import json
import subprocess
import sys

import numpy as np
import pytest

from gce.cli import run_pipeline
from gce.errors import ConfigError
from gce.explain import TradeoffCurve, TradeoffPoint
from gce.metrics import MetricsReport
from gce.plots import emit_metrics_plots, emit_scatter_plots, heatmap_svg


def run(*argv):
    return run_pipeline([str(a) for a in argv])


def read(path):
    return path.read_bytes()


@pytest.fixture(scope="module")
def mini_flow(tmp_path_factory):
    """A small but complete pipeline run used by several tests."""
    root = tmp_path_factory.mktemp("flow")
    gen = root / "gen"
    assert run("gen-synth", "--seed", 3, "--n", 80, "--output-dir", gen) == 0
    train = root / "train"
    assert (
        run(
            "train",
            "--dataset", gen / "dataset.csv",
            "--no-standardize",
            "--epochs", 60,
            "--seed", 5,
            "--output-dir", train,
        )
        == 0
    )
    group = root / "group"
    assert (
        run(
            "group",
            "--dataset", gen / "dataset.csv",
            "--model", train / "model.json",
            "--labels", gen / "labels_true.txt",
            "--output-dir", group,
        )
        == 0
    )
    calib = root / "calib"
    assert (
        run(
            "calibrate",
            "--dataset", gen / "dataset.csv",
            "--model", train / "model.json",
            "--labels", group / "labels.txt",
            "--output-dir", calib,
        )
        == 0
    )
    return {"gen": gen, "train": train, "group": group, "calib": calib}


class TestPipelineFlow:
    def test_gen_synth_artifacts(self, mini_flow):
        gen = mini_flow["gen"]
        assert (gen / "dataset.csv").exists()
        labels = (gen / "labels_true.txt").read_text().split()
        assert len(labels) == 80

    def test_gen_synth_reruns_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run("gen-synth", "--seed", 3, "--n", 80, "--output-dir", a)
        run("gen-synth", "--seed", 3, "--n", 80, "--output-dir", b)
        assert read(a / "dataset.csv") == read(b / "dataset.csv")
        assert read(a / "labels_true.txt") == read(b / "labels_true.txt")

    def test_inputs_not_mutated(self, mini_flow, tmp_path):
        gen = mini_flow["gen"]
        before = read(gen / "dataset.csv")
        run(
            "calibrate",
            "--dataset", gen / "dataset.csv",
            "--model", mini_flow["train"] / "model.json",
            "--labels", mini_flow["group"] / "labels.txt",
            "--output-dir", tmp_path / "again",
        )
        assert read(gen / "dataset.csv") == before

    def test_dbm_explain_then_metrics_diagonal(self, mini_flow, tmp_path):
        gen, train, group, calib = (
            mini_flow["gen"], mini_flow["train"], mini_flow["group"], mini_flow["calib"]
        )
        out = tmp_path / "exp"
        assert (
            run(
                "explain",
                "--method", "dbm",
                "--dataset", gen / "dataset.csv",
                "--model", train / "model.json",
                "--labels", group / "labels.txt",
                "--epsilon", calib / "epsilon.json",
                "--output-dir", out,
            )
            == 0
        )
        mets = tmp_path / "mets"
        assert (
            run(
                "metrics",
                "--dataset", gen / "dataset.csv",
                "--model", train / "model.json",
                "--labels", group / "labels.txt",
                "--epsilon", calib / "epsilon.json",
                "--explanations", out / "explanations_dbm.json",
                "--output-dir", mets,
            )
            == 0
        )
        report = json.load((mets / "metrics_dbm.json").open())
        diag = np.array(report["correctness"]).diagonal()
        assert np.all(diag >= 0.95)

    def test_explain_artifacts_deterministic(self, mini_flow, tmp_path):
        gen, train, group, calib = (
            mini_flow["gen"], mini_flow["train"], mini_flow["group"], mini_flow["calib"]
        )
        outs = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            run(
                "explain",
                "--method", "tgt",
                "--lam", 0.01,
                "--iterations", 2000,
                "--seed", 7,
                "--dataset", gen / "dataset.csv",
                "--model", train / "model.json",
                "--labels", group / "labels.txt",
                "--epsilon", calib / "epsilon.json",
                "--output-dir", out,
            )
            outs.append(read(out / "explanations_tgt.json"))
        assert outs[0] == outs[1]

    def test_modify_and_compare(self, mini_flow, tmp_path):
        gen, group = mini_flow["gen"], mini_flow["group"]
        spec = tmp_path / "spec.json"
        spec.write_text(
            json.dumps({"group": 0, "edits": [{"feature": 1, "offset": -0.4, "jitter": 0.1}]})
        )
        out = tmp_path / "mod"
        assert (
            run(
                "modify",
                "--dataset", gen / "dataset.csv",
                "--labels", group / "labels.txt",
                "--spec", spec,
                "--seed", 2,
                "--output-dir", out,
            )
            == 0
        )
        meta = json.load((out / "modify_meta.json").open())
        n_original = len((gen / "dataset.csv").read_text().strip().splitlines()) - 1
        n_modified = len((out / "dataset_modified.csv").read_text().strip().splitlines()) - 1
        assert n_modified == n_original + meta["copied_rows"]

        cmp_dir = tmp_path / "cmp"
        exps = {
            "method": "tgt", "reference": 0, "lambda": 0.0,
            "basis": [[1.0, 0.0, 0.0, 0.0]],
        }
        other = dict(exps, basis=[[1.0, 0.5, 0.0, 0.0]])
        (tmp_path / "a.json").write_text(json.dumps(exps))
        (tmp_path / "b.json").write_text(json.dumps(other))
        assert (
            run(
                "compare",
                "--original", tmp_path / "a.json",
                "--other", tmp_path / "b.json",
                "--output-dir", cmp_dir,
            )
            == 0
        )
        doc = json.load((cmp_dir / "comparison.json").open())
        assert doc["scale_rule"] == "max-abs-original-entry"
        assert doc["pairs"][0]["scaled_diff"][1] == 0.5


class TestErrorHandling:
    def test_missing_dataset_exits_with_config_code(self, tmp_path):
        proc = subprocess.run(
            [
                sys.executable, "-m", "gce", "calibrate",
                "--dataset", str(tmp_path / "missing.csv"),
                "--output-dir", str(tmp_path / "out"),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
        assert proc.stderr.splitlines()[-1].startswith("error: config:")

    def test_bad_labels_exit_code(self, mini_flow, tmp_path):
        bad = tmp_path / "labels.txt"
        bad.write_text("0\n1\n")  # wrong row count
        proc = subprocess.run(
            [
                sys.executable, "-m", "gce", "calibrate",
                "--dataset", str(mini_flow["gen"] / "dataset.csv"),
                "--model", str(mini_flow["train"] / "model.json"),
                "--labels", str(bad),
                "--output-dir", str(tmp_path / "out"),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 4
        assert proc.stderr.splitlines()[-1].startswith("error: data:")

    def test_config_file_supplies_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 40, "seed": 9}))
        out = tmp_path / "out"
        assert run("gen-synth", "--config", cfg, "--output-dir", out) == 0
        assert json.load((out / "gen_meta.json").open())["n"] == 40

    def test_explicit_flag_beats_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 40}))
        out = tmp_path / "out"
        assert run("gen-synth", "--config", cfg, "--n", 25, "--output-dir", out) == 0
        assert json.load((out / "gen_meta.json").open())["n"] == 25

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"frobnicate": 1}))
        with pytest.raises(ConfigError, match="frobnicate"):
            run("gen-synth", "--config", cfg, "--output-dir", tmp_path / "out")


class TestPlots:
    def _report(self):
        cr = np.array([[1.0, 0.5], [0.25, 1.0]])
        return MetricsReport(cr, cr * 0.5, 0.1, 0.375, 0.1875)

    def test_heatmap_cells_show_report_entries(self):
        svg = heatmap_svg(self._report().correctness)
        for value in ("1.00", "0.50", "0.25"):
            assert value in svg

    def test_metrics_plot_files(self, tmp_path):
        written = emit_metrics_plots(self._report(), tmp_path, "dbm")
        names = {p.name for p in written}
        assert names == {
            "heatmap_correctness_dbm.svg",
            "heatmap_coverage_dbm.svg",
            "metrics_dbm.csv",
        }

    def test_scatter_skipped_for_non_2d_with_warning(self, tmp_path):
        reps = np.zeros((5, 3))
        with pytest.warns(UserWarning, match="scatter"):
            written = emit_scatter_plots(reps, np.zeros(5, dtype=int), tmp_path)
        assert {p.suffix for p in written} == {".csv"}
        assert not (tmp_path / "scatter.svg").exists()

    def test_overlay_preserves_cardinality(self, tmp_path):
        rng = np.random.default_rng(0)
        reps = rng.normal(size=(10, 2))
        overlay = rng.normal(size=(4, 2))
        emit_scatter_plots(
            reps, np.zeros(10, dtype=int), tmp_path, {"shifted": overlay}
        )
        svg = (tmp_path / "scatter.svg").read_text()
        assert svg.count("<path") == 4
        assert svg.count("<circle") == 10
        overlay_csv = (tmp_path / "scatter_shifted.csv").read_text().strip().splitlines()
        assert len(overlay_csv) == 1 + 4

    def test_tradeoff_csv_round_trip(self, tmp_path):
        curve = TradeoffCurve(
            tgt=tuple(
                TradeoffPoint(k, 0.1, 0.9, 0.8, 1.0) for k in (1, 2, 3, 4)
            ),
            dbm=tuple(
                TradeoffPoint(k, 0.0, 0.7, 0.6, 1.0) for k in (1, 2, 3, 4)
            ),
        )
        from gce.explain import curve_to_csv

        rows = curve_to_csv(curve.tgt).strip().splitlines()
        assert len(rows) == 5
        assert rows[1].split(",")[0] == "1"
