import csv
import filecmp

import pytest

from pantograph_sde.cli import build_config, fmt, main, read_config

LINEAR = """\
problem = linear
a = -2
b = 0.5
c = 0.5
d = 0.5
q = 0.5
theta = 0.5
seed = 7
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def test_analyze(tmp_path, capsys):
    cfg = _write(tmp_path, LINEAR)
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "analyze.csv")
    assert rows[0] == ["alpha", "ms_stable", "as_stable", "as_rate", "flags"]
    alpha, ms, as_, rate, flags = rows[1]
    assert float(alpha) == pytest.approx(-1.584962500721156, abs=1e-12)
    assert (ms, as_) == ("true", "true")
    assert float(rate) == pytest.approx(-0.2924812503605781, abs=1e-12)
    assert "ms_stable   True" in capsys.readouterr().out


def test_analyze_other_q(tmp_path):
    cfg = _write(tmp_path, LINEAR.replace("q = 0.5", "q = 0.25"))
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path)]) == 0
    row = _rows(tmp_path / "analyze.csv")[1]
    assert row[2] == "false" and row[3] == ""


@pytest.mark.parametrize("text", [
    LINEAR.replace("q = 0.5\n", ""),
    LINEAR + "bogus = 1\n",
    LINEAR + "[nonsense]\nT = 1\n",
    LINEAR.replace("q = 0.5", "q = 1.5"),
    LINEAR.replace("theta = 0.5", "theta = 2"),
    LINEAR + "[simulate]\nT = 1\nh = 0.1\npaths = 0\n",
    LINEAR.replace("seed = 7\n", "") + "[simulate]\nT = 1\nh = 0.1\n",
    LINEAR + "[convergence]\nh = 0.25, 0.125\n",
    LINEAR + "[consistency]\nh = 0.25, 0.125, 0.0625\npaths = 3\n",
])
def test_config_errors_exit_2(tmp_path, text):
    cfg = _write(tmp_path, text)
    command = "analyze"
    for c in ("simulate", "convergence", "consistency"):
        if f"[{c}]" in text:
            command = c
    assert main([command, "--config", cfg, "--out", str(tmp_path)]) == 2


def test_missing_config_file(tmp_path):
    assert main(["analyze", "--config", str(tmp_path / "nope.ini")]) == 2


def test_simulate_is_reproducible(tmp_path):
    cfg = _write(tmp_path, LINEAR + "[simulate]\nT = 2\nh = 0.0625\npaths = 40\nchunk = 16\n")
    outs = []
    for run, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        out = tmp_path / run
        assert main(["simulate", "--config", cfg, "--out", str(out), "--workers", workers]) == 0
        outs.append(out / "mean_square.csv")
    assert filecmp.cmp(outs[0], outs[1], shallow=False)
    # only the echoed worker count may differ
    a = [l for l in outs[0].read_text().splitlines() if "workers" not in l]
    c = [l for l in outs[2].read_text().splitlines() if "workers" not in l]
    assert a == c
    rows = _rows(outs[0])
    assert rows[0] == ["time", "mean_square", "stderr"] and len(rows) == 34
    assert float(rows[1][1]) == 1.0


def test_simulate_paths(tmp_path):
    cfg = _write(tmp_path, LINEAR + "[simulate]\nT = 1\nh = 0.125\npaths = 3\noutput = paths\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
    files = sorted(p.name for p in tmp_path.glob("path_*.csv"))
    assert files == ["path_00000.csv", "path_00001.csv", "path_00002.csv"]
    rows = _rows(tmp_path / "path_00001.csv")
    assert rows[0] == ["time", "x1"] and rows[1] == ["0", "1"]


def test_convergence_csv(tmp_path, capsys):
    cfg = _write(tmp_path, LINEAR + "[convergence]\nT = 1\nN = 8, 16, 32, 64\npaths = 100\n"
                                    "fine_factor = 4\n")
    assert main(["convergence", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "convergence.csv")
    assert rows[0] == ["h", "rms_error", "stderr"] and len(rows) == 5
    assert [float(r[0]) for r in rows[1:]] == [0.125, 0.0625, 0.03125, 0.015625]
    assert all(float(r[1]) > 0 for r in rows[1:])
    assert "strong order: slope" in capsys.readouterr().out


def test_consistency_csv(tmp_path):
    cfg = _write(tmp_path, LINEAR + "[consistency]\nh = 0.25, 0.125, 0.0625\npaths = 40\n"
                                    "fine_factor = 4\n")
    assert main(["consistency", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / "consistency_mean.csv")) == 4
    assert _rows(tmp_path / "consistency_rms.csv")[0] == ["h", "rms_defect", "stderr",
                                                          "max_over_n"]


def test_stability_fit_csv(tmp_path):
    cfg = _write(tmp_path, LINEAR + "[stability-fit]\nT = 20\nh = 0.05\npaths = 20\n"
                                    "samples = 10\n")
    assert main(["stability-fit", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "stability_fit.csv")
    assert rows[0] == ["t", "mean_square", "stderr"] and len(rows) >= 9


def test_numerical_failure_exit_3(tmp_path):
    text = LINEAR.replace("a = -2", "a = -40") + "[simulate]\nT = 1\nh = 0.1\npaths = 2\n"
    assert main(["simulate", "--config", _write(tmp_path, text), "--out", str(tmp_path)]) == 3


def test_self_test():
    assert main(["self-test"]) == 0


def test_config_layering():
    sections = read_config(LINEAR + "T = 3\n[simulate]\nT = 5\nh = 0.5\n")
    assert build_config("simulate", sections)["T"] == 5.0
    assert build_config("analyze", sections)["T"] == 3.0
    assert fmt(0.1) == "0.10000000000000001" and fmt(True) == "true" and fmt(3) == "3"
