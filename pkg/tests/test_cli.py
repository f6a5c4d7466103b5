import numpy as np
import pytest

from promptseg.cli import main
from promptseg.config import ExperimentConfig, load_config, parse_config_text
from promptseg.data import load_corpus, read_features
from promptseg.errors import ConfigError
from promptseg.metrics import read_report_csv
from promptseg.pipeline import (
    directory_hash,
    run_extract,
    run_pretrain,
    run_synth,
    run_train_eval,
    write_random_init_checkpoint,
)

TINY = dict(
    n_videos=4,
    frames_per_video=96,
    n_users=2,
    grid=8,
    strides="2",
    pretrain_epochs=2,
    train_epochs=2,
    dim=16,
    hidden=16,
    heads=2,
    batch_size=4,
    channels=8,
    pg_layers=2,
    refine_stages=1,
    refine_layers=2,
)


def _tiny_config(**overrides) -> ExperimentConfig:
    values = dict(TINY)
    values.update(overrides)
    return ExperimentConfig(**values).validate()


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """One tiny end-to-end run shared by the read-only assertions below."""
    root = tmp_path_factory.mktemp("tiny_run")
    config = _tiny_config()
    run_synth(config, root / "corpus")
    run_pretrain(config, root / "corpus", root / "pre")
    write_random_init_checkpoint(config, root / "corpus", root / "rand")
    run_extract(config, root / "corpus", root / "pre" / "checkpoint.bin", root / "feats")
    run_train_eval(config, root / "corpus", root / "feats", root / "eval")
    return root, config


class TestConfig:
    def test_defaults_validate(self):
        config = ExperimentConfig().validate()
        assert config.n_videos == 20 and config.n_gestures == 8 and config.seed == 7
        assert config.stride_set() == (4, 8, 16)

    def test_parse_file_and_overrides(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nn_videos = 6\nprompt_mode = index\n", encoding="utf-8")
        config = load_config(path, overrides={"seed": "11", "noise_level": "0.2"})
        assert (config.n_videos, config.prompt_mode, config.seed) == (6, "index", 11)
        assert config.noise_level == 0.2

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("does_not_exist = 3")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("n_videos = many")

    def test_validation_errors(self):
        with pytest.raises(ConfigError):
            _tiny_config(prompt_mode="prose")
        with pytest.raises(ConfigError):
            _tiny_config(strides="0,4")
        with pytest.raises(ConfigError):
            _tiny_config(dim=10, heads=4)
        with pytest.raises(ConfigError):
            _tiny_config(temperature=0.0)

    def test_allowed_set_parsing(self):
        assert _tiny_config().allowed_set() is None
        assert _tiny_config(allowed_gestures="G1, G3").allowed_set() == {"G1", "G3"}

    def test_round_trip_text(self):
        config = _tiny_config(prompt_mode="index")
        again = ExperimentConfig(**parse_config_text(config.to_text())).validate()
        assert again == config


class TestStages:
    def test_synth_outputs(self, tiny_run):
        root, config = tiny_run
        videos, vocab = load_corpus(root / "corpus")
        assert len(videos) == 4
        assert (root / "corpus" / "config.txt").exists()
        assert len(vocab.gesture_keys) == config.n_gestures

    def test_synth_rerun_identical_directory_hash(self, tmp_path):
        config = _tiny_config()
        run_synth(config, tmp_path / "one")
        run_synth(config, tmp_path / "two")
        assert directory_hash(tmp_path / "one") == directory_hash(tmp_path / "two")

    def test_extract_shapes_and_stability(self, tiny_run, tmp_path):
        root, config = tiny_run
        videos, _ = load_corpus(root / "corpus")
        for video in videos:
            feats = read_features(root / "feats" / f"{video.video_id}.bin")
            assert feats.shape == (video.frame_count, config.dim)
        run_extract(config, root / "corpus", root / "pre" / "checkpoint.bin", tmp_path / "again")
        for video in videos:
            a = read_features(root / "feats" / f"{video.video_id}.bin")
            b = read_features(tmp_path / "again" / f"{video.video_id}.bin")
            np.testing.assert_array_equal(a, b)

    def test_random_init_checkpoint_accepted(self, tiny_run, tmp_path):
        root, config = tiny_run
        out = run_extract(config, root / "corpus", root / "rand" / "checkpoint.bin", tmp_path / "rf")
        assert sorted(p.name for p in out.glob("*.bin"))

    def test_train_eval_reports(self, tiny_run):
        root, config = tiny_run
        rows = read_report_csv(root / "eval" / "scores.csv")
        splits = [r["split"] for r in rows]
        assert splits == ["fold0", "fold1", "mean"]  # 2 users -> 2 folds
        assert all(r["task"] == "synthetic" for r in rows)
        assert (root / "eval" / "fold0_per_class.csv").exists()
        for row in rows:
            for col in ("acc", "edit", "f1_10", "f1_25", "f1_50"):
                assert 0.0 <= float(row[col]) <= 100.0

    def test_prediction_files_match_vocabulary(self, tiny_run):
        root, _ = tiny_run
        videos, vocab = load_corpus(root / "corpus")
        predictions = sorted((root / "eval").glob("pred_*.txt"))
        assert predictions
        for path in predictions:
            labels = path.read_text().splitlines()
            assert labels and all(label in vocab.keys for label in labels)
            vid = path.stem.removeprefix("pred_")
            assert len(labels) == next(v for v in videos if v.video_id == vid).frame_count


class TestEndToEndDeterminism:
    def test_full_pipeline_rerun_is_bit_identical(self, tmp_path):
        config = _tiny_config()
        hashes = []
        for name in ("a", "b"):
            root = tmp_path / name
            run_synth(config, root / "corpus")
            run_pretrain(config, root / "corpus", root / "pre")
            run_extract(config, root / "corpus", root / "pre" / "checkpoint.bin", root / "feats")
            run_train_eval(config, root / "corpus", root / "feats", root / "eval")
            hashes.append(directory_hash(root))
        assert hashes[0] == hashes[1]


class TestCliCommands:
    def test_synth_and_report_round_trip(self, tiny_run, tmp_path, capsys):
        root, _ = tiny_run
        assert main(["report", "--runs", str(root / "eval"), "--out", str(tmp_path / "rep")]) == 0
        assert (tmp_path / "rep" / "report.csv").exists()
        assert (tmp_path / "rep" / "metrics_boxplots.png").exists()
        rows = (tmp_path / "rep" / "report.csv").read_text().splitlines()
        assert rows[0] == "run,split,task,acc,edit,f1_10,f1_25,f1_50"
        assert len(rows) == 4

    def test_cli_override_flags(self, tmp_path):
        out = tmp_path / "corpus"
        argv = ["synth", "--out", str(out), "--seed", "3"]
        for key, value in TINY.items():
            argv += [f"--{key}", str(value)]
        assert main(argv) == 0
        videos, _ = load_corpus(out)
        assert len(videos) == TINY["n_videos"]

    def test_bad_parameter_exits_2(self, tmp_path):
        argv = ["synth", "--out", str(tmp_path / "x"), "--n_gestures", "1"]
        assert main(argv) == 2

    def test_unknown_override_exits_2(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path / "x"), "--bogus", "1"]) == 2

    def test_empty_zero_shot_filter_exits_2(self, tiny_run, tmp_path):
        root, _ = tiny_run
        argv = ["pretrain", "--corpus", str(root / "corpus"), "--out", str(tmp_path / "p"),
                "--seed", "7", "--allowed_gestures", "G99"]
        assert main(argv) == 2

    def test_shape_mismatch_exits_4(self, tiny_run, tmp_path):
        root, _ = tiny_run
        other = _tiny_config(grid=6)
        run_synth(other, tmp_path / "corpus6")
        argv = ["extract", "--corpus", str(tmp_path / "corpus6"),
                "--checkpoint", str(root / "pre" / "checkpoint.bin"),
                "--out", str(tmp_path / "f")]
        assert main(argv) == 4

    def test_divergence_exits_3(self, tiny_run, tmp_path):
        root, _ = tiny_run
        argv = ["pretrain", "--corpus", str(root / "corpus"), "--out", str(tmp_path / "p"),
                "--seed", "7", "--pretrain_lr", "1e150", "--pretrain_epochs", "2"]
        for key in ("strides", "dim", "hidden", "heads", "batch_size"):
            argv += [f"--{key}", str(TINY[key])]
        assert main(argv) == 3

    def test_missing_seed_is_an_error(self, tiny_run, tmp_path):
        root, _ = tiny_run
        with pytest.raises(SystemExit):
            main(["pretrain", "--corpus", str(root / "corpus"), "--out", str(tmp_path / "p")])

    def test_random_init_flag(self, tiny_run, tmp_path):
        root, _ = tiny_run
        argv = ["pretrain", "--corpus", str(root / "corpus"), "--out", str(tmp_path / "r"),
                "--seed", "7", "--random-init", "--dim", "16", "--hidden", "16", "--heads", "2",
                "--grid", "8"]
        assert main(argv) == 0
        assert (tmp_path / "r" / "checkpoint.bin").exists()


class TestCrossTaskComposition:
    def test_checkpoint_from_one_corpus_evaluates_another(self, tiny_run, tmp_path):
        # encoders pre-trained on corpus A extract features for corpus B,
        # which then trains and evaluates its own recognizer
        root, config = tiny_run
        other = _tiny_config(seed=21)
        run_synth(other, tmp_path / "corpusB")
        run_extract(other, tmp_path / "corpusB", root / "pre" / "checkpoint.bin", tmp_path / "featsB")
        scores = run_train_eval(other, tmp_path / "corpusB", tmp_path / "featsB",
                                tmp_path / "evalB", task="cross-task")
        rows = read_report_csv(scores)
        assert rows and all(r["task"] == "cross-task" for r in rows)
