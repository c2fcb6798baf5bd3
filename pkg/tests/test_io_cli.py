import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mirtmis.cli import build_parser, main, resolve
from mirtmis.errors import ConfigError, InvalidArgumentError
from mirtmis.experiments import RunConfig
from mirtmis.io import (
    emit_plot_data,
    fmt,
    git_blob_hash,
    parse_config,
    read_plot_data,
    read_responses,
    write_responses,
)


class TestFormats:
    def test_fmt(self):
        assert fmt(0.1) == "0.1"
        assert fmt(1 / 3) == "0.333333333"
        assert fmt(-12345.6789012) == "-12345.6789"
        assert fmt(None) == "NA" and fmt(float("nan")) == "NA"

    def test_plot_round_trip(self, tmp_path):
        gen = np.random.default_rng(0)
        rows = gen.normal(scale=100.0, size=(20, 3))
        path = tmp_path / "s.csv"
        emit_plot_data(rows, ["a", "b", "c"], path)
        header, back = read_plot_data(path)
        assert header == ["a", "b", "c"]
        expected = [[float(format(v, ".9g")) for v in r] for r in rows]
        assert back == expected
        assert_allclose(np.array(back), rows, rtol=1e-8)

    def test_empty_scatter(self, tmp_path):
        path = tmp_path / "e.csv"
        emit_plot_data([], ["x", "y"], path)
        assert path.read_text() == "x,y\n"

    def test_row_width_checked(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            emit_plot_data([[1.0]], ["x", "y"], tmp_path / "bad.csv")

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            emit_plot_data([[1.0]], ["x"], tmp_path / "missing" / "f.csv")

    def test_responses(self, tmp_path):
        Y = np.array([[1, 0, 1], [0, 0, 1]], dtype=np.uint8)
        path = tmp_path / "r.csv"
        write_responses(Y, path)
        assert path.read_text() == "1,0,1\n0,0,1\n"
        assert np.array_equal(read_responses(path), Y)
        path.write_text("1,0\n2,1\n")
        with pytest.raises(InvalidArgumentError):
            read_responses(path)
        path.write_text("1,0\n1\n")
        with pytest.raises(InvalidArgumentError):
            read_responses(path)

    def test_git_blob_hash(self):
        # `git hash-object` of an empty file and of "hello\n"
        assert git_blob_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
        assert git_blob_hash(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


class TestConfig:
    def test_parse(self):
        text = "# comment\nseed = 7\n\nn-big = 1000  # inline\nout=results\n"
        assert parse_config(text) == {"seed": "7", "n_big": "1000", "out": "results"}
        with pytest.raises(ConfigError):
            parse_config("no equals sign")

    def test_flags_override_file(self, tmp_path):
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text("seed = 7\nN = 500\nK = 3\ndesign = variance\n")
        cfg, _ = resolve(["generate", "--config", str(cfg_path), "--seed", "9"])
        assert cfg.seed == 9 and cfg.N == 500 and cfg.K == 3

    def test_presets(self):
        desk = RunConfig(subcommand="variance", design="variance")
        assert (desk.N_big, desk.expectation_samples, desk.n, desk.R) == (200_000, 20_000, 2000, 200)
        paper = RunConfig(subcommand="variance", design="variance", preset="paper")
        assert (paper.N_big, paper.n, paper.R) == (1_000_000, 10_000, 30_000)
        assert RunConfig(subcommand="bias").N == 100_000

    def test_validation(self):
        with pytest.raises(ConfigError, match="K must be 2 or 3"):
            RunConfig(subcommand="variance", design="variance", K=4)
        assert RunConfig(subcommand="variance", design="variance", K=3).K == 3
        with pytest.raises(ConfigError):
            RunConfig(subcommand="fit")
        with pytest.raises(ConfigError):
            RunConfig.from_mapping({"subcommand": "bias", "colour": "red"})
        with pytest.raises(ConfigError):
            RunConfig.from_mapping({"subcommand": "bias", "N": "many"})
        with pytest.raises(ConfigError):
            RunConfig(subcommand="variance", R=1)

    def test_parser_lists_subcommands(self):
        text = build_parser().format_help()
        for name in ("generate", "fit", "skills", "bias", "variance"):
            assert name in text


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        assert main(["variance", "--design", "variance", "--k", "4", "--out", str(tmp_path / "o")]) == 2
        assert "K must be 2 or 3" in capsys.readouterr().err
        assert main(["generate", "--config", str(tmp_path / "nope.cfg")]) == 2

    def test_io_error(self, tmp_path):
        assert main(["fit", "--responses", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 4

    def test_numerical_error(self, tmp_path, capsys):
        path = tmp_path / "r.csv"
        write_responses(np.array([[1, 0], [1, 1], [1, 0]]), path)
        assert main(["fit", "--responses", str(path), "--out", str(tmp_path / "o")]) == 3
        assert "[fit]" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_success_pipeline(self, tmp_path):
        gen_dir, fit_dir, sk_dir = tmp_path / "g", tmp_path / "f", tmp_path / "s"
        assert main(["generate", "--design", "variance", "--n-learners", "3000", "--seed", "4",
                     "--out", str(gen_dir)]) == 0
        for name in ("bank.json", "responses.csv", "skills_true.csv", "manifest.json"):
            assert (gen_dir / name).is_file()
        manifest = json.loads((gen_dir / "manifest.json").read_text())
        assert manifest["seed"] == 4
        assert manifest["files"]["bank.json"] == git_blob_hash((gen_dir / "bank.json").read_bytes())
        assert main(["fit", "--responses", str(gen_dir / "responses.csv"), "--bank", str(gen_dir / "bank.json"),
                     "--quad-points", "11", "--out", str(fit_dir)]) == 0
        fit = json.loads((fit_dir / "fit.json").read_text())
        assert len(fit["items"]) == 50 and fit["converged"]
        assert main(["skills", "--responses", str(gen_dir / "responses.csv"), "--fit", str(fit_dir / "fit.json"),
                     "--out", str(sk_dir)]) == 0
        header, rows = read_plot_data(sk_dir / "skills.csv")
        assert header == ["gamma1", "gamma2"] and len(rows) == 3000
