import subprocess
import sys

import pytest

from dyspnea.cli import main
from dyspnea.features import FEATURE_NAMES


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("synth", "--preset", "normal", "--seed", 1, "--duration-s", 600, "--subject-id", "n1",
               "--no-timestamp", "-o", d / "n1.csv", "--truth", d / "n1_truth.csv") == 0
    assert run("synth", "--preset", "exertion", "--seed", 2, "--duration-s", 600, "--subject-id", "e1",
               "--imu", "--no-timestamp", "-o", d / "e1.csv") == 0
    assert run("synth", "--preset", "covid-like", "--seed", 3, "--duration-s", 5400, "--subject-id", "c1",
               "--no-timestamp", "-o", d / "c1.csv") == 0
    for name in ("n1", "e1", "c1"):
        assert run("features", d / f"{name}.csv", "--no-timestamp", "-o", d / f"f_{name}.csv") == 0
    assert run("select", d / "f_e1.csv", "--no-timestamp", "-o", d / "s_e1.csv", "--report", d / "sel_e1.txt") == 0
    (d / "labels.csv").write_text("subject_id,epoch_index,class,borg\nn1,*,0,0.5\ne1,*,1,6\n")
    assert run("train", d / "f_n1.csv", d / "s_e1.csv", "--labels", d / "labels.csv", "--k", 20,
               "-o", d / "model.json") == 0
    return d


def test_feature_file_schema(workdir):
    lines = [ln for ln in (workdir / "f_n1.csv").read_text().splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    assert len(header) == 51 + 5
    assert header[5:] == list(FEATURE_NAMES)
    assert all(len(ln.split(",")) == 56 for ln in lines[1:])


def test_select_picks_breathing_channel(workdir):
    text = (workdir / "sel_e1.txt").read_text()
    assert "chosen_channel=resp" in text
    assert {"acc_x", "acc_y", "acc_z"} <= {ln.split(",")[2] for ln in (workdir / "f_e1.csv").read_text().splitlines()[1:]}
    assert {ln.split(",")[2] for ln in (workdir / "s_e1.csv").read_text().splitlines()[1:]} == {"resp"}


def test_compare_with_itself_is_zero(workdir, capsys):
    assert run("compare", workdir / "f_n1.csv", workdir / "f_n1.csv", "--no-timestamp") == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert len(rows) == 9
    assert all(float(r.split()[1]) == 0.0 for r in rows)


def test_score_hourly_rows_span_recording(workdir, capsys):
    out = workdir / "scores"
    assert run("score", workdir / "c1.csv", "--model", workdir / "model.json", "--out-dir", out, "--no-timestamp") == 0
    assert "dyspnea_fraction=1.0" in capsys.readouterr().out
    hourly = (out / "c1_hourly.csv").read_text().splitlines()
    assert hourly[0] == "hour,mean_d_obj,n_epochs"
    assert [ln.split(",")[0] for ln in hourly[1:]] == ["0", "1"]
    assert sum(int(ln.split(",")[2]) for ln in hourly[1:]) == 179


def test_classify_and_report(workdir, capsys):
    assert run("classify", workdir / "f_n1.csv", "--model", workdir / "model.json", "--no-timestamp") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].endswith("class,vote_fraction,d_obj")
    assert all(ln.split(",")[5] == "0" for ln in lines[1:])
    out = workdir / "scores"
    assert run("score", workdir / "n1.csv", "--model", workdir / "model.json", "--out-dir", out, "--no-timestamp") == 0
    capsys.readouterr()
    rep = workdir / "report.txt"
    assert run("report", out / "c1_epochs.csv", out / "n1_epochs.csv", "--groups", "covid", "healthy_normal",
               "--no-timestamp", "-o", rep) == 0
    text = rep.read_text()
    assert "c1,covid,179," in text and "n1,healthy_normal,19," in text
    assert "covid,0,1,0" in text  # distribution rows
    # degenerate groups (every score identical) are reported, not fatal
    assert "Welch t-test" in text


def test_outputs_are_byte_identical(workdir, tmp_path):
    runs = []
    for i in (1, 2):
        d = tmp_path / f"run{i}"
        d.mkdir()
        assert run("synth", "--preset", "covid-like", "--seed", 9, "--duration-s", 300, "--no-timestamp",
                   "-o", d / "r.csv") == 0
        assert run("preprocess", d / "r.csv", "--no-timestamp", "-o", d / "p.csv") == 0
        assert run("features", d / "r.csv", "--no-timestamp", "-o", d / "f.csv") == 0
        assert run("select", d / "f.csv", "--no-timestamp", "-o", d / "s.csv", "--report", d / "sel.txt") == 0
        assert run("compare", d / "f.csv", workdir / "f_n1.csv", "--no-timestamp", "-o", d / "kl.txt") == 0
        assert run("classify", d / "f.csv", "--model", workdir / "model.json", "--no-timestamp",
                   "-o", d / "c.csv") == 0
        assert run("score", d / "r.csv", "--model", workdir / "model.json", "--no-timestamp",
                   "--out-dir", d, "--prefix", "x") == 0
        assert run("report", d / "x_epochs.csv", "--no-timestamp", "-o", d / "rep.txt") == 0
        runs.append(d)
    names = sorted(p.name for p in runs[0].iterdir())
    assert len(names) == 11
    for name in names:
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes(), name


def test_timestamp_header(tmp_path):
    assert run("synth", "--mean-br", 14, "--duration-s", 60, "-o", tmp_path / "r.csv") == 0
    assert (tmp_path / "r.csv").read_text().startswith("# generated: ")


def test_config_precedence(workdir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# shorter epochs\npreprocess.epoch_s=30\npreprocess.slide_s=30\n")

    def n_rows(*extra):
        out = tmp_path / "f.csv"
        assert run("features", workdir / "n1.csv", "--no-timestamp", "-o", out, *extra) == 0
        return len(out.read_text().splitlines()) - 1

    default = n_rows()
    from_file = n_rows("--config", cfg)
    flag_wins = n_rows("--config", cfg, "--slide-s", 15)
    assert default == 19
    assert from_file == 20
    assert flag_wins == 39


def test_exit_codes(workdir, tmp_path, capsys):
    assert run("score", workdir / "c1.csv", "--model", tmp_path / "missing.json", "--out-dir", tmp_path) == 3
    assert run("features", workdir / "n1.csv", "-o", tmp_path / "x.csv", "--epoch-s", 10, "--slide-s", 30) == 4
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("quality.no_such_key=1\n")
    assert run("features", workdir / "n1.csv", "-o", tmp_path / "x.csv", "--config", bad_cfg) == 4
    (tmp_path / "labels.csv").write_text("zzz,*,1,-\n")
    assert run("train", workdir / "f_n1.csv", "--labels", tmp_path / "labels.csv", "-o", tmp_path / "m.json") == 3
    with pytest.raises(SystemExit) as info:
        run("features", "--no-such-flag")
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        run("frobnicate")
    assert info.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dyspnea", "synth", "--preset", "normal", "--duration-s", "60",
                           "--no-timestamp", "-o", str(tmp_path / "r.csv")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "r.csv").read_text().startswith("rate_hz=20.0")
