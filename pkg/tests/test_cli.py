import pytest

from metaoco.cli import main

TINY_REG = ["regression", "--d", "2", "--n", "4", "--T", "6",
            "--r", "0.0", "--runs", "2", "--gamma", "fixed"]


def summary_methods(out: str) -> list[str]:
    lines = [l for l in out.splitlines() if l and not l.startswith("#")]
    return [l.split()[0] for l in lines[1:]]


def test_regression_prints_summary(capsys):
    assert main(TINY_REG) == 0
    out = capsys.readouterr().out
    assert summary_methods(out) == ["I-OGA", "mean-OPMS"]
    assert "r=0" in out


def test_learned_gamma_adds_opms_arm(capsys):
    args = ["regression", "--d", "2", "--n", "4", "--T", "5", "--r", "0.0",
            "--runs", "1", "--gamma", "learned", "--gamma-grid", "0.5,1.0"]
    assert main(args) == 0
    assert summary_methods(capsys.readouterr().out) == ["I-OGA", "mean-OPMS", "OPMS"]


def test_classification_runs(capsys):
    args = ["classification", "--d", "2", "--n", "6", "--T", "5", "--r", "1.0",
            "--runs", "1", "--flip-frac", "0.2", "--gamma", "fixed"]
    assert main(args) == 0
    assert "mean-OPMS" in capsys.readouterr().out


def test_ewa_modes_run(capsys):
    args = ["ewa-eta", "--M", "3", "--n", "4", "--T", "5", "--runs", "1",
            "--support", "0,1"]
    assert main(args) == 0
    assert summary_methods(capsys.readouterr().out) == ["I-EWA", "OGMS-eta", "OPMS-eta"]
    args = ["ewa-prior", "--M", "3", "--n", "4", "--T", "5", "--runs", "1"]
    assert main(args) == 0
    assert summary_methods(capsys.readouterr().out) == ["I-EWA", "OPMS-prior"]


def test_out_writes_csv_and_figure(tmp_path, capsys):
    out = tmp_path / "report.csv"
    assert main(TINY_REG + ["--out", str(out)]) == 0
    lines = out.read_text(encoding="ascii").splitlines()
    assert lines[0] == "method,r,seed,task,mse,cumloss"
    assert len(lines) == 1 + 2 * 2 * 6  # methods x runs x T
    assert (tmp_path / "report.png").exists()
    err = capsys.readouterr().err
    assert "report.csv" in err and "report.png" in err


def test_no_plot_skips_figure(tmp_path):
    out = tmp_path / "report.csv"
    assert main(TINY_REG + ["--out", str(out), "--no-plot"]) == 0
    assert out.exists()
    assert not (tmp_path / "report.png").exists()


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(TINY_REG + ["--out", str(a), "--no-plot"])
    main(TINY_REG + ["--out", str(b), "--no-plot"])
    assert a.read_bytes() == b.read_bytes()


def test_config_file_layering(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small smoke run\nT=9\ngamma=fixed\nd=2\nn=4\nruns=1\nr=0.0\n")
    out = tmp_path / "layered.csv"
    # the explicit flag beats the file's T=9; everything else comes from it
    args = ["regression", "--config", str(cfg), "--T", "5",
            "--out", str(out), "--no-plot"]
    assert main(args) == 0
    lines = out.read_text(encoding="ascii").splitlines()
    assert len(lines) == 1 + 2 * 1 * 5


def test_unknown_config_key_is_a_usage_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus=1\n")
    with pytest.raises(SystemExit) as err:
        main(["regression", "--config", str(cfg)])
    assert err.value.code == 2


def test_bad_flags_are_usage_errors():
    for args in (["regression", "--bogus"],
                 ["regression", "--gamma", "nope"],
                 ["regression", "--gamma", "fixed", "--gamma-grid", "1.0",
                  "--d", "2", "--n", "4", "--T", "2", "--runs", "1"],
                 ["regression", "--r", "zero"],
                 []):
        with pytest.raises(SystemExit) as err:
            main(args)
        assert err.value.code == 2


def test_verify_subcommand_passes(capsys):
    assert main(["verify"]) == 0
    assert "ok" in capsys.readouterr().out.lower()
