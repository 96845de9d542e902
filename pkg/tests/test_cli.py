"""Command-line client: exit codes, printed summaries, artifact locations."""

import os

import numpy as np
import pytest
from PIL import Image

from laneseg.cli import EXIT_ERROR, EXIT_NO_IMAGERY, EXIT_OK, main
from helpers import seed_pipeline_fixtures


@pytest.fixture(autouse=True)
def no_ambient_api_key(monkeypatch):
    monkeypatch.delenv("LANESEG_API_KEY", raising=False)


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("cli-model"))
    code = main(["train", "--out", out, "--synthetic", "4", "--dims", "16x16",
                 "--epochs", "1", "--batch", "2", "--filters", "4,8",
                 "--seed", "0", "--normalize-per-pixel"])
    assert code == EXIT_OK
    return out


class TestTrain:
    def test_reports_the_artifacts(self, tmp_path, capsys):
        out = str(tmp_path / "model")
        code = main(["train", "--out", out, "--synthetic", "2",
                     "--dims", "16x16", "--epochs", "1", "--batch", "2",
                     "--filters", "4"])
        captured = capsys.readouterr().out
        assert code == EXIT_OK
        assert "trained 1 epochs" in captured
        assert os.path.isfile(os.path.join(out, "arch.json"))
        assert os.path.isfile(os.path.join(out, "weights.lseg"))
        assert os.path.isfile(os.path.join(out, "curves.csv"))

    def test_requires_exactly_one_data_source(self, tmp_path, capsys):
        out = str(tmp_path / "model")
        assert main(["train", "--out", out]) == EXIT_ERROR
        assert "exactly one" in capsys.readouterr().err

    def test_missing_manifest_file_fails_cleanly(self, tmp_path, capsys):
        code = main(["train", "--out", str(tmp_path),
                     "--manifest", str(tmp_path / "absent.tsv")])
        assert code == EXIT_ERROR
        assert "file not found" in capsys.readouterr().err


class TestEval:
    def test_prints_the_metrics_row_and_writes_the_csv(self, model_dir, capsys):
        code = main(["eval", "--model", model_dir, "--synthetic", "2",
                     "--epochs-label", "1"])
        captured = capsys.readouterr().out
        assert code == EXIT_OK
        assert "epochs,precision,recall,accuracy_standard,accuracy_paper,f1" in captured
        assert os.path.isfile(os.path.join(model_dir, "metrics.csv"))

    def test_out_flag_redirects_the_csv(self, model_dir, tmp_path):
        out = str(tmp_path / "reports")
        os.makedirs(out)
        code = main(["eval", "--model", model_dir, "--synthetic", "2",
                     "--out", out])
        assert code == EXIT_OK
        assert os.path.isfile(os.path.join(out, "metrics.csv"))

    def test_missing_model_directory_fails(self, tmp_path, capsys):
        code = main(["eval", "--model", str(tmp_path / "nowhere"),
                     "--synthetic", "2"])
        assert code == EXIT_ERROR
        assert "model file not found" in capsys.readouterr().err

    def test_requires_exactly_one_data_source(self, model_dir, capsys):
        code = main(["eval", "--model", model_dir, "--synthetic", "2",
                     "--manifest", "x.tsv"])
        assert code == EXIT_ERROR


class TestPredict:
    def test_writes_mask_and_overlay_next_to_the_image(
            self, model_dir, tmp_path, capsys):
        image_path = str(tmp_path / "shot.png")
        rng = np.random.default_rng(3)
        Image.fromarray(rng.integers(0, 256, (24, 48, 3), dtype=np.uint8).astype(
            np.uint8), mode="RGB").save(image_path)
        code = main(["predict", "--model", model_dir, "--image", image_path])
        assert code == EXIT_OK
        assert os.path.isfile(str(tmp_path / "shot_mask.png"))
        assert os.path.isfile(str(tmp_path / "shot_overlay.png"))
        assert "mask:" in capsys.readouterr().out

    def test_missing_image_fails(self, model_dir, tmp_path, capsys):
        code = main(["predict", "--model", model_dir,
                     "--image", str(tmp_path / "none.png")])
        assert code == EXIT_ERROR
        assert "--image" in capsys.readouterr().err


class TestFetch:
    def test_fixture_replay_succeeds_offline(self, model_dir, tmp_path, capsys):
        fixtures = tmp_path / "fixtures"
        seed_pipeline_fixtures(fixtures)
        out = str(tmp_path / "out")
        code = main(["fetch", "--model", model_dir,
                     "--fixtures", str(fixtures), "--out", out])
        captured = capsys.readouterr().out
        assert code == EXIT_OK
        assert "pano pano-test-1" in captured
        for name in ("source.png", "mask.png", "overlay.png"):
            assert os.path.isfile(os.path.join(out, name)), name

    def test_no_coverage_exits_with_the_reserved_code(
            self, model_dir, tmp_path, capsys):
        fixtures = tmp_path / "fixtures"
        seed_pipeline_fixtures(fixtures, metadata_doc={"status": "ZERO_RESULTS"})
        code = main(["fetch", "--model", model_dir,
                     "--fixtures", str(fixtures), "--out", str(tmp_path / "o")])
        assert code == EXIT_NO_IMAGERY
        assert "no street-view imagery at (12.987600, 77.543200)" \
            in capsys.readouterr().out

    def test_live_without_key_fails_before_any_request(
            self, model_dir, tmp_path, capsys):
        code = main(["fetch", "--model", model_dir, "--live",
                     "--out", str(tmp_path)])
        assert code == EXIT_ERROR
        assert "API key" in capsys.readouterr().err

    def test_fixtures_and_live_are_mutually_exclusive(
            self, model_dir, tmp_path, capsys):
        fixtures = tmp_path / "fixtures"
        seed_pipeline_fixtures(fixtures)
        code = main(["fetch", "--model", model_dir, "--fixtures", str(fixtures),
                     "--live", "--out", str(tmp_path)])
        assert code == EXIT_ERROR
        assert "exactly one" in capsys.readouterr().err

    def test_missing_fixture_directory_fails(self, model_dir, tmp_path, capsys):
        code = main(["fetch", "--model", model_dir,
                     "--fixtures", str(tmp_path / "absent"), "--out", str(tmp_path)])
        assert code == EXIT_ERROR
        assert "fixture directory not found" in capsys.readouterr().err


class TestGradcheck:
    def test_prints_one_line_per_layer_and_passes(self, capsys):
        code = main(["gradcheck", "--seed", "0"])
        captured = capsys.readouterr().out
        assert code == EXIT_OK
        assert "conv: max_rel_error=" in captured
        assert "network: max_rel_error=" in captured
        assert "all gradients match finite differences" in captured

    def test_deliberate_weight_skew_fails(self, capsys):
        code = main(["gradcheck", "--perturb", "weights"])
        assert code == EXIT_ERROR
        assert "gradient check failed for:" in capsys.readouterr().err


class TestUsageErrors:
    def test_unknown_command_exits_with_the_error_code(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["frobnicate"])
        assert excinfo.value.code == EXIT_ERROR

    def test_missing_required_flag_exits_with_the_error_code(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["train", "--synthetic", "2"])
        assert excinfo.value.code == EXIT_ERROR
