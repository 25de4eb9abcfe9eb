import os

import pytest

from bayescp.config import ConfigError, RunConfig, parse_config_text, resolve_config, write_files_atomic


def test_defaults():
    cfg = RunConfig()
    assert (cfg.alpha, cfg.beta, cfg.sigma_upper, cfg.slope_sd, cfg.sharpness) == (4.0, 2.0, "auto", 0.1, 20.0)
    assert (cfg.samples, cfg.chains, cfg.warmup) == (800, 4, 500)
    assert cfg.sigma_upper_value is None


def test_parse_text():
    text = "# run\nalpha = 5\nsigma-upper = 1.5  # fixed\nlikelihood = Cauchy\n\nsamples=100\n"
    assert parse_config_text(text) == {"alpha": 5.0, "sigma_upper": "1.5", "likelihood": "Cauchy",
                                       "samples": 100}


@pytest.mark.parametrize("text", ["alpha 5", "colour = red", "samples = many"])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("alpha = 6\nbeta = 3\nlikelihood = cauchy\nsigma_upper = 2\n", encoding="utf-8")
    cfg = resolve_config(path, {"alpha": 7.0, "beta": None, "seed": 4})
    assert cfg.alpha == 7.0 and cfg.beta == 3.0 and cfg.seed == 4
    assert cfg.likelihood == "cauchy"
    assert cfg.sigma_upper_value == 2.0


def test_bad_values():
    with pytest.raises(ConfigError):
        RunConfig(sigma_upper="lots")
    with pytest.raises(ValueError):
        RunConfig(likelihood="laplace")


def test_atomic_write(tmp_path):
    out = tmp_path / "o"
    write_files_atomic(out, {"a.txt": "1\n", "b.txt": "2\n"})
    assert (out / "a.txt").read_text() == "1\n"
    assert sorted(os.listdir(out)) == ["a.txt", "b.txt"]


def test_atomic_write_leaves_nothing_on_failure(tmp_path):
    class Boom:
        def __str__(self):
            raise RuntimeError("boom")

    out = tmp_path / "o"
    with pytest.raises(TypeError):
        write_files_atomic(out, {"a.txt": "1\n", "b.txt": Boom()})
    assert os.listdir(out) == []
