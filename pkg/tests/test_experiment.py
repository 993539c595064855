import dataclasses

import numpy as np
import pytest

from pixeldyn import cli
from pixeldyn import experiment as X
from pixeldyn.evaluation import read_pgm
from pixeldyn.experiment import ConfigError, ExperimentConfig
from pixeldyn.trainer import OptimizerConfig

TINY_INI = """
[experiment]
kind = pendulum
mode = {mode}
n_frames = 60
pca_k = 10
output = {out}

[model]
encoder_dims = 10,6,2

[optimizer]
max_iters = 30
"""


def tiny_config(tmp_path, mode="joint"):
    return ExperimentConfig.from_ini(TINY_INI.format(mode=mode, out=tmp_path / "run"))


def test_defaults_match_architectures():
    p = X.default_config("pendulum")
    assert p.encoder_dims == (50, 25, 12, 6, 2) and p.predictor_dims == (6, 4, 2)
    assert p.n_frames == 400 and p.pca_k == 50 and p.order == 2
    t = X.default_config("tile")
    assert t.encoder_dims == (50, 25, 12, 8, 2) and t.predictor_dims == (8, 5, 2)
    assert t.n_frames == 601
    p.validate()
    t.validate()


@pytest.mark.parametrize("kind", ["pendulum", "tile"])
def test_ini_roundtrip(kind):
    cfg = X.default_config(kind)
    cfg.optimizer = OptimizerConfig(max_iters=17, full_bfgs=True)
    back = ExperimentConfig.from_ini(cfg.to_ini())
    assert back == cfg
    assert back.to_ini() == cfg.to_ini()


@pytest.mark.parametrize(
    "section, line, key",
    [
        ("model", "encoder_dims = 40,25,12,6,2", "model.encoder_dims"),
        ("model", "predictor_dims = 5,4,2", "model.predictor_dims"),
        ("model", "predictor_dims = 6,4,3", "model.predictor_dims"),
        ("model", "feature_activation = relu", "model.feature_activation"),
        ("model", "width = 3", "model.width"),
        ("experiment", "mode = both", "experiment.mode"),
        ("experiment", "n_frames = many", "experiment.n_frames"),
        ("simulator", "rod_lenght = 3", "simulator.rod_lenght"),
        ("optimizer", "c1 = 0.95", "optimizer"),
    ],
)
def test_config_errors_name_the_key(section, line, key):
    if section == "experiment":
        text = f"[experiment]\nkind = pendulum\n{line}\n"
    else:
        text = f"[experiment]\nkind = pendulum\n[{section}]\n{line}\n"
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_ini(text)
    assert info.value.key == key


def test_malformed_ini_is_a_config_error():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_ini("[experiment]\n[experiment]\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_ini("kind = pendulum\n")


def test_tile_needs_tile_params():
    cfg = X.default_config("tile")
    cfg.simulator = X.PendulumParams()
    with pytest.raises(ConfigError):
        cfg.validate()


@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("tiny")
    cfg = tiny_config(tmp)
    ds = X.simulate(cfg)
    return cfg, ds, X.train(cfg, ds), X.train(cfg, ds)


def test_train_is_deterministic(tiny_runs):
    _, _, a, b = tiny_runs
    assert X.bundle_to_bytes(a) == X.bundle_to_bytes(b)


def test_bundle_roundtrip(tiny_runs, tmp_path):
    cfg, ds, bundle, _ = tiny_runs
    path = tmp_path / "b.pxbn"
    X.save_bundle(bundle, path)
    raw = path.read_bytes()
    assert raw[:5] == b"PXBN1"
    back = X.load_bundle(path)
    assert X.bundle_to_bytes(back) == raw
    assert back.config == cfg
    assert np.array_equal(back.autoencoder.flatten(), bundle.autoencoder.flatten())
    assert np.array_equal(back.predictor.flatten(), bundle.predictor.flatten())
    assert back.report.costs == bundle.report.costs
    with pytest.raises(ValueError):
        X.bundle_from_bytes(b"NOPE!" + raw[5:])


def test_training_uses_train_split_pca(tiny_runs):
    _, ds, bundle, _ = tiny_runs
    assert np.allclose(bundle.dataset.pca.mean, ds.frames[:ds.split_index].mean(axis=0))
    assert bundle.report.costs[-1] <= bundle.report.costs[0]
    assert set(bundle.metrics) == {"train_V_P", "train_V_R", "validation_V_P", "validation_V_R"}


def test_evaluate_writes_artifacts(tiny_runs, tmp_path):
    _, ds, bundle, _ = tiny_runs
    ev = X.evaluate(bundle, ds, 4, tmp_path)
    assert ev.fit.shape == (5,) and ev.naive[0] == 100.0
    lines = (tmp_path / "fit.csv").read_text().splitlines()
    assert lines[0] == "horizon,fit_percent" and len(lines) == 6
    assert (tmp_path / "table.csv").read_text().startswith("model,V_P,V_R\njoint,")
    strips = sorted(tmp_path.glob("strip_t*.pgm"))
    assert len(strips) == 2
    assert read_pgm(strips[0]).shape == (102, 9 * 51)
    assert read_pgm(tmp_path / "feature_grid.pgm").shape == (9 * 51, 9 * 51)
    assert 0.0 <= ev.annulus <= 1.0


def test_separate_report_has_two_stages(tmp_path):
    cfg = tiny_config(tmp_path, mode="separate")
    bundle = X.train(cfg, X.simulate(cfg))
    assert len(bundle.report.stages) == 2
    trace = tmp_path / "costs.csv"
    X.write_cost_trace(bundle.report, trace)
    stages = {line.split(",")[0] for line in trace.read_text().splitlines()[1:]}
    assert stages == {"1", "2"}


def test_cli_pipeline(tmp_path, capsys):
    ini = tmp_path / "tiny.ini"
    ini.write_text(TINY_INI.format(mode="joint", out=tmp_path / "run"))
    assert cli.main(["simulate", "--config", str(ini)]) == 0
    assert (tmp_path / "run" / "dataset.pxdy").exists()
    assert cli.main(["train", "--config", str(ini)]) == 0
    bundle = tmp_path / "run" / "bundle.pxbn"
    assert bundle.exists() and (tmp_path / "run" / "bundle_costs.csv").exists()
    assert cli.main(["evaluate", "--in", str(bundle), "--max-horizon", "3"]) == 0
    assert (tmp_path / "run" / "eval" / "fit.csv").exists()
    assert cli.main(["render-grid", "--in", str(bundle), "--out", str(tmp_path / "g")]) == 0
    assert (tmp_path / "g" / "features.csv").exists()
    out = capsys.readouterr().out
    assert "annulus ratio" in out


def test_cli_reports_config_errors(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[experiment]\nkind = pendulum\n[model]\norder = 3\n")
    assert cli.main(["simulate", "--config", str(ini)]) == 2
    assert "model.predictor_dims" in capsys.readouterr().err


def test_run_comparison_layout(tmp_path):
    cfg = tiny_config(tmp_path)
    cmp = X.run_comparison(cfg, tmp_path / "cmp", max_horizon=3)
    root = tmp_path / "cmp"
    for mode in ("joint", "separate"):
        assert (root / mode / "bundle.pxbn").exists()
        assert (root / mode / "eval" / "fit.csv").exists()
        assert cmp.bundles[mode].config.mode == mode
    table = (root / "table.csv").read_text().splitlines()
    assert table[0] == "model,V_P,V_R" and [r.split(",")[0] for r in table[1:]] == ["joint", "separate"]
    curves = (root / "fit_curves.csv").read_text().splitlines()
    assert curves[0] == "horizon,joint,separate,naive" and len(curves) == 5
    assert cmp.naive[0] == 100.0


def test_run_comparison_is_independent_of_output_dir(tmp_path):
    cfg = tiny_config(tmp_path)
    X.run_comparison(cfg, tmp_path / "a", max_horizon=3)
    X.run_comparison(cfg, tmp_path / "b", max_horizon=3)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_stored_metrics_reproduce_bit_exactly(tiny_runs, tmp_path):
    _, _, bundle, _ = tiny_runs
    X.save_bundle(bundle, tmp_path / "b.pxbn")
    back = X.load_bundle(tmp_path / "b.pxbn")
    assert X.training_metrics(back.autoencoder, back.predictor, back.dataset) == back.metrics


def test_simulate_defaults_summary(tmp_path, capsys):
    assert cli.main(["simulate", "--kind", "tile", "--out", str(tmp_path / "t.pxdy")]) == 0
    assert "N=601 M=2601 d_u=2" in capsys.readouterr().out
