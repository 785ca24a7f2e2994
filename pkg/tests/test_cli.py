"""End-to-end tests of the command-line interface."""

import json
import time

import numpy as np
import pytest

import ecml
from ecml import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def workspace(tmp_path, capsys):
    """Synthetic features/labels/pairs written through the CLI."""
    f, l, p = tmp_path / "f.csv", tmp_path / "l.csv", tmp_path / "p.csv"
    code, out, _ = run(
        capsys,
        "synth",
        "--ids", "12", "--samples-per-id", "10", "--dim", "16",
        "--intra-spread", "1.0", "--inter-spread", "2.0",
        "--seed", "4", "--count", "600",
        "--features", str(f), "--labels", str(l), "--pairs", str(p),
    )
    assert code == 0
    return tmp_path


class TestSynth:
    def test_outputs_roundtrip(self, workspace):
        feats = ecml.load_features(workspace / "f.csv", "csv")
        assert feats.count == 120 and feats.dim == 16
        labels = ecml.load_labels(workspace / "l.csv")
        assert labels.size == 120
        pairs = ecml.load_pairs(workspace / "p.csv")
        assert len(pairs) == 600

    def test_prints_seed(self, tmp_path, capsys):
        code, out, _ = run(
            capsys,
            "synth", "--ids", "4", "--samples-per-id", "4", "--dim", "4",
            "--seed", "9", "--count", "20",
            "--features", str(tmp_path / "f.csv"),
            "--labels", str(tmp_path / "l.csv"),
            "--pairs", str(tmp_path / "p.csv"),
        )
        assert code == 0 and "seed: 9" in out

    def test_deterministic_files(self, tmp_path, capsys):
        args = [
            "synth", "--ids", "4", "--samples-per-id", "4", "--dim", "4",
            "--seed", "9", "--count", "20",
            "--labels", str(tmp_path / "l.csv"), "--pairs", str(tmp_path / "p.csv"),
        ]
        run(capsys, *args, "--features", str(tmp_path / "a.csv"))
        run(capsys, *args, "--features", str(tmp_path / "b.csv"))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestPairsCommand:
    def test_split_counting(self, tmp_path, capsys):
        labels = np.repeat(np.arange(50), 20)
        ecml.save_labels(labels, tmp_path / "l.csv")
        code, out, _ = run(
            capsys,
            "pairs", "--labels", str(tmp_path / "l.csv"),
            "--count", "10000", "--pos-fraction", "0.55", "--seed", "3",
            "--pairs", str(tmp_path / "p.csv"),
        )
        assert code == 0
        pairs = ecml.load_pairs(tmp_path / "p.csv")
        assert abs(pairs.n_pos - 5500) <= 1


class TestFit:
    def test_lambda_zero_plain_gives_identity_metric(self, workspace, capsys):
        model_path = workspace / "m0.ecml"
        code, _, _ = run(
            capsys,
            "fit", "--features", str(workspace / "f.csv"),
            "--pairs", str(workspace / "p.csv"), "--model", str(model_path),
            "--learner", "rmml", "--lambda", "0", "--seed", "1",
        )
        assert code == 0
        model, _ = ecml.load_model(model_path)
        assert np.array_equal(model.final_metric.matrix, np.eye(16))

    def test_byte_identical_refits(self, workspace, capsys):
        common = [
            "fit", "--features", str(workspace / "f.csv"),
            "--pairs", str(workspace / "p.csv"), "--cascade", "--stages", "2",
            "--seed", "5",
        ]
        run(capsys, *common, "--model", str(workspace / "a.ecml"))
        run(capsys, *common, "--model", str(workspace / "b.ecml"))
        assert (workspace / "a.ecml").read_bytes() == (workspace / "b.ecml").read_bytes()

    def test_reports_clamped_counts_per_stage(self, workspace, capsys):
        code, out, err = run(
            capsys,
            "fit", "--features", str(workspace / "f.csv"),
            "--pairs", str(workspace / "p.csv"),
            "--model", str(workspace / "m.ecml"),
            "--cascade", "--stages", "2", "--seed", "5",
        )
        assert code == 0
        assert "stage 0: groups=4" in out and "clamped=" in out
        # timing lines go to the diagnostics stream as phase,seconds
        assert any(line.startswith("fit,") for line in err.splitlines())
        assert "fit," not in out

    def test_fit_budget_on_medium_problem(self, tmp_path, capsys):
        run(
            capsys,
            "synth", "--ids", "20", "--samples-per-id", "20", "--dim", "64",
            "--seed", "0", "--count", "2000",
            "--features", str(tmp_path / "f.csv"),
            "--labels", str(tmp_path / "l.csv"), "--pairs", str(tmp_path / "p.csv"),
        )
        start = time.perf_counter()
        code, _, _ = run(
            capsys,
            "fit", "--features", str(tmp_path / "f.csv"),
            "--pairs", str(tmp_path / "p.csv"), "--model", str(tmp_path / "m.ecml"),
            "--cascade", "--stages", "3", "--seed", "0",
        )
        assert code == 0
        assert time.perf_counter() - start < 10.0

    def test_pca_embedded_in_model(self, workspace, capsys):
        model_path = workspace / "mp.ecml"
        code, _, _ = run(
            capsys,
            "fit", "--features", str(workspace / "f.csv"),
            "--pairs", str(workspace / "p.csv"), "--model", str(model_path),
            "--pca-dim", "8", "--seed", "2",
        )
        assert code == 0
        model, pca = ecml.load_model(model_path)
        assert pca is not None and pca.k == 8 and model.input_dim == 8

    def test_config_file_precedence(self, workspace, capsys):
        cfg = workspace / "cfg.json"
        cfg.write_text(json.dumps({
            "features": str(workspace / "f.csv"),
            "pairs": str(workspace / "p.csv"),
            "model": str(workspace / "c.ecml"),
            "lambda": 0.9,
            "seed": 3,
        }))
        code, _, _ = run(capsys, "fit", "--config", str(cfg), "--lambda", "0.2")
        assert code == 0
        model, _ = ecml.load_model(workspace / "c.ecml")
        # flag wins over config file
        assert model.final_metric.lam == 0.2
        assert model.seed == 3

    def test_missing_features_flag(self, workspace, capsys):
        code, _, err = run(
            capsys, "fit", "--pairs", str(workspace / "p.csv"),
            "--model", str(workspace / "x.ecml"),
        )
        assert code == 2 and "--features" in err

    def test_missing_file_exit_code(self, workspace, capsys):
        code, _, err = run(
            capsys,
            "fit", "--features", str(workspace / "nope.csv"),
            "--pairs", str(workspace / "p.csv"), "--model", str(workspace / "x.ecml"),
        )
        assert code == 2

    def test_numerical_failure_exit_code(self, tmp_path, capsys):
        # few pairs in higher dim: kissme covariances are rank deficient
        run(
            capsys,
            "synth", "--ids", "6", "--samples-per-id", "4", "--dim", "24",
            "--seed", "1", "--count", "12",
            "--features", str(tmp_path / "f.csv"),
            "--labels", str(tmp_path / "l.csv"), "--pairs", str(tmp_path / "p.csv"),
        )
        code, _, err = run(
            capsys,
            "fit", "--features", str(tmp_path / "f.csv"),
            "--pairs", str(tmp_path / "p.csv"), "--model", str(tmp_path / "m.ecml"),
            "--learner", "kissme",
        )
        assert code == 3
        assert "covariance" in err


class TestEval:
    def fit_model(self, workspace, capsys, name="m.ecml", *extra):
        run(
            capsys,
            "fit", "--features", str(workspace / "f.csv"),
            "--pairs", str(workspace / "p.csv"), "--model", str(workspace / name),
            *extra,
        )
        return workspace / name

    def test_separated_clusters_zero_eer(self, tmp_path, capsys):
        run(
            capsys,
            "synth", "--ids", "6", "--samples-per-id", "8", "--dim", "8",
            "--intra-spread", "0.05", "--inter-spread", "5.0",
            "--seed", "2", "--count", "200",
            "--features", str(tmp_path / "f.csv"),
            "--labels", str(tmp_path / "l.csv"), "--pairs", str(tmp_path / "p.csv"),
        )
        run(
            capsys,
            "fit", "--features", str(tmp_path / "f.csv"),
            "--pairs", str(tmp_path / "p.csv"), "--model", str(tmp_path / "m.ecml"),
            "--lambda", "0",
        )
        code, out, _ = run(
            capsys,
            "eval", "--model", str(tmp_path / "m.ecml"),
            "--features", str(tmp_path / "f.csv"), "--pairs", str(tmp_path / "p.csv"),
        )
        assert code == 0 and "eer=0.0" in out

    def test_eval_read_only_and_stable(self, workspace, capsys):
        model = self.fit_model(workspace, capsys)
        args = [
            "eval", "--model", str(model),
            "--features", str(workspace / "f.csv"), "--pairs", str(workspace / "p.csv"),
            "--report", str(workspace / "rep.txt"),
        ]
        code, out1, _ = run(capsys, *args)
        rep1 = (workspace / "rep.txt").read_bytes()
        code, out2, _ = run(capsys, *args)
        rep2 = (workspace / "rep.txt").read_bytes()
        assert code == 0 and out1 == out2 and rep1 == rep2
        report = ecml.load_report(workspace / "rep.txt")
        assert 0.0 <= report.eer <= 1.0

    def test_multi_model_mean_std(self, workspace, capsys):
        paths = []
        for seed in range(3):
            paths.append(str(self.fit_model(
                workspace, capsys, f"m{seed}.ecml",
                "--cascade", "--stages", "2", "--seed", str(seed),
            )))
        code, out, _ = run(
            capsys,
            "eval", "--model", *paths,
            "--features", str(workspace / "f.csv"), "--pairs", str(workspace / "p.csv"),
        )
        assert code == 0
        assert "eer_mean=" in out and "eer_std=" in out
        assert "model_2_eer=" in out

    def test_corrupt_model_exit_code(self, workspace, capsys):
        bad = workspace / "bad.ecml"
        bad.write_bytes(b"not a model")
        code, _, err = run(
            capsys,
            "eval", "--model", str(bad),
            "--features", str(workspace / "f.csv"), "--pairs", str(workspace / "p.csv"),
        )
        assert code == 2 and "magic" in err


class TestTransform:
    def test_matches_library_transform(self, workspace, capsys):
        run(
            capsys,
            "fit", "--features", str(workspace / "f.csv"),
            "--pairs", str(workspace / "p.csv"), "--model", str(workspace / "m.ecml"),
            "--cascade", "--stages", "2", "--seed", "5",
        )
        code, _, _ = run(
            capsys,
            "transform", "--model", str(workspace / "m.ecml"),
            "--features", str(workspace / "f.csv"),
            "--output", str(workspace / "t.csv"),
        )
        assert code == 0
        model, _ = ecml.load_model(workspace / "m.ecml")
        feats = ecml.load_features(workspace / "f.csv", "csv")
        expected = ecml.transform(model, feats)
        got = ecml.load_features(workspace / "t.csv", "csv")
        assert np.array_equal(got.data, expected.data)

    def test_applies_embedded_pca_first(self, workspace, capsys):
        run(
            capsys,
            "fit", "--features", str(workspace / "f.csv"),
            "--pairs", str(workspace / "p.csv"), "--model", str(workspace / "mp.ecml"),
            "--pca-dim", "8", "--cascade", "--stages", "1", "--seed", "2",
        )
        code, _, _ = run(
            capsys,
            "transform", "--model", str(workspace / "mp.ecml"),
            "--features", str(workspace / "f.csv"),
            "--output", str(workspace / "tp.csv"),
        )
        assert code == 0
        model, pca = ecml.load_model(workspace / "mp.ecml")
        feats = ecml.load_features(workspace / "f.csv", "csv")
        expected = ecml.transform(model, ecml.apply_pca(pca, feats))
        got = ecml.load_features(workspace / "tp.csv", "csv")
        assert np.array_equal(got.data, expected.data)


class TestInspect:
    def test_cascade_summary(self, workspace, capsys):
        run(
            capsys,
            "fit", "--features", str(workspace / "f.csv"),
            "--pairs", str(workspace / "p.csv"), "--model", str(workspace / "m3.ecml"),
            "--cascade", "--stages", "3", "--seed", "5",
        )
        code, out, _ = run(capsys, "inspect", "--model", str(workspace / "m3.ecml"))
        assert code == 0
        assert "group counts: 8,4,2" in out
        assert "learner: rmml" in out
        assert "rho:" in out

    def test_plain_model_reports_zero_stages(self, workspace, capsys):
        run(
            capsys,
            "fit", "--features", str(workspace / "f.csv"),
            "--pairs", str(workspace / "p.csv"), "--model", str(workspace / "m0.ecml"),
        )
        code, out, _ = run(capsys, "inspect", "--model", str(workspace / "m0.ecml"))
        assert code == 0 and "stages: 0" in out

    def test_truncated_model_errors(self, workspace, capsys):
        run(
            capsys,
            "fit", "--features", str(workspace / "f.csv"),
            "--pairs", str(workspace / "p.csv"), "--model", str(workspace / "mt.ecml"),
        )
        blob = (workspace / "mt.ecml").read_bytes()
        (workspace / "mt.ecml").write_bytes(blob[:-7])
        code, _, err = run(capsys, "inspect", "--model", str(workspace / "mt.ecml"))
        assert code == 2 and "truncated" in err
