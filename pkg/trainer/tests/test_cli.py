"""The icl-trainer command line: exit codes, outputs, and the export path.

Everything runs ``icl_trainer.cli.main`` in-process on the toy scenario with
deliberately tiny models; the benchmark side of each handshake still goes
through the real ``iclbench`` executable.
"""

from __future__ import annotations

import pytest

from icl_trainer.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from icl_trainer.training import load_checkpoint

TINY_FLAGS = (
    "--layers", "1", "--heads", "2", "--embed-dim", "16",
    "--t-train", "4", "--batch", "4", "--lr", "1e-3",
    "--iterations", "30", "--curriculum-period", "5",
    "--eval-prompts", "64",
)


def _run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def ckpt(toy, tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "toy.pt"
    code = _run(
        "train", "--scenario", "toy", "--scenario-config", toy.toml,
        *TINY_FLAGS, "--seed", "1", "--out", path,
    )
    assert code == EXIT_OK
    return path


class TestTrain:
    def test_writes_a_loadable_checkpoint(self, ckpt):
        model, cfg, raw = load_checkpoint(ckpt)
        assert cfg.scenario.id == "toy"
        assert (cfg.layers, cfg.embed_dim, cfg.T_train) == (1, 16, 4)
        assert "eval_loss" in raw and raw["eval_loss"] > 0

    def test_prints_the_full_configuration(self, toy, tmp_path, capsys):
        out = tmp_path / "m.pt"
        assert _run(
            "train", "--scenario", "toy", "--scenario-config", toy.toml,
            *TINY_FLAGS, "--iterations", "5", "--out", out,
        ) == EXIT_OK
        text = capsys.readouterr().out
        for line in ("layers = 1", "T_train = 4", "lr = 0.001", "seed = 0"):
            assert line in text
        assert "final training loss" in text

    def test_unknown_grid_id_is_a_config_error(self, tmp_path, capsys):
        code = _run("train", "--scenario", "nope", *TINY_FLAGS,
                    "--out", tmp_path / "m.pt")
        assert code == EXIT_CONFIG
        assert "TOML" in capsys.readouterr().err

    def test_bad_hyperparameters_are_config_errors(self, toy, tmp_path):
        assert _run(
            "train", "--scenario", "toy", "--scenario-config", toy.toml,
            *TINY_FLAGS, "--lr", "0", "--out", tmp_path / "m.pt",
        ) == EXIT_CONFIG

    def test_missing_out_is_a_usage_error(self, toy):
        assert _run(
            "train", "--scenario", "toy", "--scenario-config", toy.toml,
        ) == EXIT_CONFIG

    def test_divergence_maps_to_the_data_exit_code(self, toy, tmp_path, capsys):
        code = _run(
            "train", "--scenario", "toy", "--scenario-config", toy.toml,
            *TINY_FLAGS, "--lr", "1e12", "--iterations", "20",
            "--out", tmp_path / "m.pt",
        )
        assert code == EXIT_DATA
        err = capsys.readouterr().err
        assert "error:" in err and "iteration" in err
        assert not (tmp_path / "m.pt").exists()  # no checkpoint on divergence


class TestInfo:
    def test_prints_config_and_losses(self, ckpt, capsys):
        assert _run("info", "--checkpoint", ckpt) == EXIT_OK
        text = capsys.readouterr().out
        for line in ("layers = 1", "embed_dim = 16", "final_loss =", "eval_loss ="):
            assert line in text

    def test_missing_file_is_a_config_error(self, tmp_path):
        assert _run("info", "--checkpoint", tmp_path / "none.pt") == EXIT_CONFIG


class TestExport:
    def test_records_pass_benchmark_validation(self, ckpt, toy, bench, tmp_path, capsys):
        out = tmp_path / "records-ICL-toy.tsv"
        assert _run(
            "export", "--checkpoint", ckpt, "--streams", toy.streams, "--out", out,
        ) == EXIT_OK
        assert "wrote" in capsys.readouterr().out
        body = [
            line.split("\t")
            for line in out.read_text().splitlines()
            if not line.startswith("#")
        ]
        assert {row[0] for row in body} == {"ICL"}
        assert {int(row[3]) for row in body} == set(range(1, 7))
        proc = bench("ingest-validate", "--records", out, "--scenarios", toy.toml)
        assert proc.returncode == 0, proc.stderr
        assert "mismatches=0" in proc.stdout

    def test_scenario_not_in_streams_is_a_data_error(self, ckpt, toy, tmp_path):
        assert _run(
            "export", "--checkpoint", ckpt, "--streams", toy.streams,
            "--scenario", "other", "--out", tmp_path / "r.tsv",
        ) == EXIT_DATA

    def test_missing_stream_file_is_a_config_error(self, ckpt, tmp_path):
        assert _run(
            "export", "--checkpoint", ckpt, "--streams", tmp_path / "no.tsv",
            "--out", tmp_path / "r.tsv",
        ) == EXIT_CONFIG

    def test_requesting_absent_replications_is_a_data_error(self, ckpt, toy, tmp_path):
        assert _run(
            "export", "--checkpoint", ckpt, "--streams", toy.streams,
            "--reps", "9", "--out", tmp_path / "r.tsv",
        ) == EXIT_DATA


class TestMoments:
    def test_prints_the_five_moments(self, toy, capsys):
        assert _run(
            "moments", "--scenario", "toy", "--scenario-config", toy.toml,
            "--n", "5000",
        ) == EXIT_OK
        text = capsys.readouterr().out
        for name in ("E[x]", "E[y]", "E[x^2]", "E[y^2]", "E[xy]"):
            assert name in text

    def test_agrees_with_its_own_toy_streams(self, toy, capsys):
        code = _run(
            "moments", "--scenario", "toy", "--scenario-config", toy.toml,
            "--n", "5000", "--streams", toy.streams,
        )
        assert code == EXIT_OK
        assert "max |z|" in capsys.readouterr().out


class TestUsage:
    def test_no_command_prints_usage(self, capsys):
        assert _run() == EXIT_CONFIG
        assert "usage:" in capsys.readouterr().err

    def test_help_exits_cleanly(self):
        assert _run("--help") == EXIT_OK
