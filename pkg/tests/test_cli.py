import numpy as np
import pytest

from gatlab import cli
from gatlab import dataset as ds
from gatlab.models import VariantConfig, load_checkpoint, params_from_arrays, save_checkpoint

TINY = ["--epochs", "2", "--m-train", "300", "--m-test", "200"]


@pytest.fixture(autouse=True)
def _out_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env_out"))


class TestGenData:
    def test_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "d.csv"
        assert cli.main(["gen-data", "--experiment", "I", "--seed", "7", "--m", "500", "--out", str(out)]) == 0
        data = ds.load(out)
        assert len(data) == 500
        assert data.x.max() <= np.pi / 2
        assert "500 samples" in capsys.readouterr().out

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            cli.main(["gen-data", "--experiment", "II", "--seed", "3", "--m", "50", "--out", str(p)])
        assert a.read_bytes() == b.read_bytes()

    def test_zero_samples_rejected(self, tmp_path):
        assert cli.main(["gen-data", "--m", "0", "--out", str(tmp_path / "x.csv")]) == cli.EXIT_VALIDATION
        assert not (tmp_path / "x.csv").exists()

    def test_bad_experiment(self):
        assert cli.main(["gen-data", "--experiment", "III", "--m", "5"]) == cli.EXIT_VALIDATION

    def test_default_location_from_env(self, tmp_path):
        assert cli.main(["gen-data", "--m", "5"]) == 0
        assert (tmp_path / "env_out" / "data_I_seed0.csv").is_file()

    def test_unwritable_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert cli.main(["gen-data", "--m", "5", "--out", str(blocker / "sub" / "d.csv")]) == cli.EXIT_IO


class TestArguments:
    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["train", "--bogus"])
        assert exc.value.code == cli.EXIT_VALIDATION

    @pytest.mark.parametrize("cmd", ["gen-data", "train", "sweep", "grad-check", "analyze-signs", "report"])
    def test_help_lists_flags(self, cmd, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main([cmd, "--help"])
        assert exc.value.code == 0
        assert "--" in capsys.readouterr().out

    def test_unknown_variant(self, tmp_path):
        rc = cli.main(["train", "--variant", "gat", "--out-dir", str(tmp_path), *TINY])
        assert rc == cli.EXIT_VALIDATION

    def test_latent_dimension_conflict(self, tmp_path, capsys):
        rc = cli.main(["train", "--variant", "gat-theta-n", "--experiment", "II", "--dprime", "1",
                       "--out-dir", str(tmp_path / "o"), *TINY])
        assert rc == cli.EXIT_VALIDATION
        assert "d'=2" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_bad_train_config(self, tmp_path):
        assert cli.main(["train", "--lr", "0", "--out-dir", str(tmp_path), *TINY]) == cli.EXIT_VALIDATION


class TestConfigFile:
    def test_values_and_override(self, tmp_path):
        conf = tmp_path / "run.cfg"
        conf.write_text("# tiny run\nexperiment = II\nvariant = gat-theta-n-plus\nepochs = 1\n"
                        "m_train = 200\nm_test = 100\nseed = 4\n")
        out = tmp_path / "o"
        assert cli.main(["train", "--config", str(conf), "--seed", "5", "--out-dir", str(out)]) == 0
        _, cfg, seed = load_checkpoint(out / "gat-theta-n-plus_seed5.ckpt")
        assert (cfg.variant, cfg.d_prime, seed) == ("gat-theta-n-plus", 2, 5)

    def test_unknown_key(self, tmp_path):
        conf = tmp_path / "run.cfg"
        conf.write_text("momentum = 0.9\n")
        assert cli.main(["train", "--config", str(conf)]) == cli.EXIT_VALIDATION

    def test_missing_file(self, tmp_path):
        assert cli.main(["train", "--config", str(tmp_path / "nope.cfg")]) == cli.EXIT_IO


class TestTrainAndSweep:
    def test_train_outputs(self, tmp_path, capsys):
        out = tmp_path / "o"
        rc = cli.main(["train", "--variant", "gatv2", "--experiment", "II", "--audit", "--out-dir", str(out), *TINY])
        assert rc == 0
        assert "TPR=" in capsys.readouterr().out
        for suffix in (".ckpt", "_hist.csv", "_hist.svg", "_loss.csv", "_loss.svg", "_audit.csv"):
            assert (out / f"gatv2_seed0{suffix}").is_file()
        assert (out / "run_gatv2_seed0.csv").is_file()

    def test_train_is_idempotent(self, tmp_path):
        ckpt = tmp_path / "gat-theta-r_seed0.ckpt"
        snapshots = []
        for _ in range(2):
            cli.main(["train", "--variant", "gat-theta-r", "--out-dir", str(tmp_path), *TINY])
            snapshots.append(ckpt.read_bytes())
        assert snapshots[0] == snapshots[1]

    def test_sweep_and_report(self, tmp_path, capsys):
        out = tmp_path / "s"
        rc = cli.main(["sweep", "--variant", "gatv2", "--variant", "gat-theta-n-plus", "--experiment", "II",
                       "--seeds", "2", "--out-dir", str(out), *TINY])
        assert rc == 0
        for name in ("sweep_gatv2.csv", "sweep_gat-theta-n-plus.csv", "boxplots.svg", "robustness.svg",
                     "gatv2_seed1.ckpt"):
            assert (out / name).is_file()
        capsys.readouterr()
        redraw = tmp_path / "r"
        assert cli.main(["report", "--sweep-dir", str(out), "--out", str(redraw)]) == 0
        assert (redraw / "boxplots.svg").is_file()
        assert "gat-theta-n-plus" in capsys.readouterr().out

    def test_report_missing_dir(self, tmp_path):
        assert cli.main(["report", "--sweep-dir", str(tmp_path / "none")]) == cli.EXIT_IO


class TestGradCheckAndSigns:
    def test_grad_check_passes(self, capsys):
        assert cli.main(["grad-check", "--trials", "9"]) == 0
        assert "theta_r" in capsys.readouterr().out

    def test_grad_check_tolerance_breach(self):
        assert cli.main(["grad-check", "--trials", "3", "--tol", "1e-20"]) == cli.EXIT_TOLERANCE

    def test_analyze_signs_all_positive(self, tmp_path, capsys):
        cfg = VariantConfig("gatv2", d_prime=2)
        params = params_from_arrays(dict(a=[0.5, 0.5], theta_l=[[0.1, 1.0], [0.2, 0.5]],
                                         theta_r=[[0.3, 0.2], [0.1, 0.4]], b=[0.0, 0.0],
                                         w_phi=[1.0, 1.0], b_phi=0.0))
        save_checkpoint(params, cfg, tmp_path / "p.ckpt")
        cli.main(["gen-data", "--experiment", "II", "--m", "100", "--out", str(tmp_path / "d.csv")])
        capsys.readouterr()
        rc = cli.main(["analyze-signs", "--checkpoint", str(tmp_path / "p.ckpt"), "--data", str(tmp_path / "d.csv")])
        assert rc == 0
        assert "fraction_dead = 1.0000" in capsys.readouterr().out

    def test_missing_checkpoint(self, tmp_path):
        rc = cli.main(["analyze-signs", "--checkpoint", str(tmp_path / "nope"), "--data", str(tmp_path / "nope")])
        assert rc == cli.EXIT_IO

    def test_corrupt_data_file(self, tmp_path):
        cfg = VariantConfig("gatv2")
        save_checkpoint(params_from_arrays(dict(a=[1.0], theta_l=[[0, 1.0]], theta_r=[[0, 0.0]], b=[0.0])),
                        cfg, tmp_path / "p.ckpt")
        (tmp_path / "d.csv").write_text("m,x_0,x_1,x_2,r_index,y_0\n0,zz,1,2,1,0.5\n")
        rc = cli.main(["analyze-signs", "--checkpoint", str(tmp_path / "p.ckpt"), "--data", str(tmp_path / "d.csv")])
        assert rc == cli.EXIT_IO
