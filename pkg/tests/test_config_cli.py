import numpy as np
import pytest

from mfassim import cli, pipeline
from mfassim.config import RunConfig, dump_config, load_config, parse_config, with_section
from mfassim.fields import read_field
from mfassim.koch import ConfigError
from mfassim.nn import TrainingError
from mfassim.sindy import SindyModel, write_model

SMALL = """
[model]
d_z = 8
hidden = 16, 16
gan_hidden = 8
attn_hidden = 8
shift_hidden = 16
amp_hidden = 8
[train]
epochs1 = 3
epochs2 = 2
epochs3 = 3
epochs4 = 2
[sindy]
t_final = 1.0
"""


def test_defaults_round_trip_through_text():
    cfg = RunConfig()
    assert parse_config(dump_config(cfg)) == cfg


def test_parse_values_and_comments():
    cfg = parse_config("[synth]\nharmonics = 3:0.1:lock, 5:0.2:free  # two\n[model]\nhidden = 32, 16\n")
    assert cfg.synth.harmonics == ((3, 0.1, True), (5, 0.2, False))
    assert cfg.model.hidden == (32, 16)


@pytest.mark.parametrize("text, needle", [
    ("[koch]\nbogus = 1\n", "unknown key"),
    ("[nowhere]\na = 1\n", "unknown section"),
    ("[model]\nk_c = 60\n", "k_c"),
    ("[model]\np = 200\n", "model.p"),
    ("[train]\nlr1 = -1\n", "train.lr1"),
    ("[synth]\nharmonics = 3:0.1:maybe\n", "harmonics"),
    ("[koch]\nm_x = many\n", "m_x"),
])
def test_config_errors_name_the_field(text, needle):
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert needle in str(e.value)


def test_workdir_env_override(monkeypatch, tmp_path):
    monkeypatch.setenv("C2R_WORKDIR", str(tmp_path))
    assert RunConfig().workdir == tmp_path
    assert load_config is not None


def test_exit_code_missing_prerequisite(tmp_path, capsys):
    assert cli.main(["eval", "--out", str(tmp_path)]) == 3
    assert "missing prerequisite" in capsys.readouterr().err


def test_exit_code_config_error(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[koch]\ngamma = 0.5\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert cli.main(["simulate", "--config", str(tmp_path / "absent.ini")]) == 2


def test_exit_code_numerical_failure(tmp_path, monkeypatch):
    def boom(cfg, stage):
        raise TrainingError("stage 1 loss is not finite at epoch 0")
    monkeypatch.setattr(pipeline, "train", boom)
    assert cli.main(["train", "--stage", "1", "--out", str(tmp_path)]) == 4


def test_config_command_prints_effective_values(capsys):
    assert cli.main(["config", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    cfg = parse_config(out)
    assert cfg.train.seed == 7 and cfg.synth.seed == 7


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    wd = tmp_path_factory.mktemp("run")
    ini = wd / "small.ini"
    ini.write_text(SMALL)
    base = ["--config", str(ini), "--out", str(wd)]
    for cmd in (["simulate"], ["synth"], ["train", "--stage", "all"], ["eval"]):
        assert cli.main(cmd + base) == 0, cmd
    return wd, base


def test_small_pipeline_outputs(small_run):
    wd, _ = small_run
    for name in ("sim.fld", "real.fld", "lf.ckpt", "gan.ckpt", "hf.ckpt", "metrics.txt", "spectrum.csv",
                 "stage1_curve.csv", "recon_full.fld"):
        assert (wd / name).exists(), name
    sim = read_field(wd / "sim.fld")
    assert sim.data.shape == (100, 250)
    assert sim.data.min() == 0.0 and sim.data.max() == 1.0
    spec = np.loadtxt(wd / "spectrum.csv", delimiter=",", skiprows=1, ndmin=2)
    assert len(spec) >= 51


def test_stage_order_is_enforced(tmp_path):
    ini = tmp_path / "s.ini"
    ini.write_text(SMALL)
    assert cli.main(["train", "--stage", "3", "--config", str(ini), "--out", str(tmp_path)]) == 3


def test_plots_write_png_and_csv(small_run):
    wd, base = small_run
    out = wd / "figs"
    out.mkdir()
    assert cli.main(["plot", "--kind", "spectrum", "--out", str(out / "spec"), str(wd / "real.fld")]) == 0
    assert (out / "spec.png").read_bytes()[:4] == b"\x89PNG"
    assert np.loadtxt(out / "spec.csv", delimiter=",").shape == (51, 2)
    assert cli.main(["plot", "--kind", "heatmap", "--out", str(out / "heat"), str(wd / "real.fld")]) == 0
    assert np.loadtxt(out / "heat.csv", delimiter=",").shape == (100, 250)
    assert cli.main(["plot", "--kind", "curves", "--out", str(out / "curves"), str(wd / "stage1_curve.csv")]) == 0
    assert (out / "curves.png").exists()


def test_correct_with_direct_model(tmp_path):
    ini = tmp_path / "s.ini"
    ini.write_text(SMALL)
    write_model(tmp_path / "h.txt", SindyModel(("1", "u"), np.array([0.5, -0.5]), 1e-3, 0.0, "direct_missing"))
    args = ["--config", str(ini), "--out", str(tmp_path)]
    assert cli.main(["correct", "--gamma", "0", "--model", str(tmp_path / "h.txt")] + args) == 0
    a, b = read_field(tmp_path / "corrected.fld"), read_field(tmp_path / "uncorrected.fld")
    assert np.array_equal(a.data, b.data)
    assert cli.main(["correct", "--model", str(tmp_path / "nope.txt")] + args) == 3


def test_with_section_replaces_one_field():
    cfg = with_section(RunConfig(), "train", epochs1=7)
    assert cfg.train.epochs1 == 7 and cfg.train.epochs2 == RunConfig().train.epochs2
