import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rtjump import __version__
from rtjump.cli import main
from rtjump.config import ConfigError, parse_config
from rtjump.estimators import fingerprint
from rtjump.io import fmt, write_csv, write_json
from rtjump.kernel import KernelSpec


def _ini(tmp_path, text):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return str(p)


# -- configuration ------------------------------------------------------------------------

def test_beta_outside_range_names_admissible_interval():
    with pytest.raises(ConfigError, match=r"admissible range \(0, 1\)"):
        parse_config(overrides={"kernel.beta": "1.5"})


def test_minimal_config_fills_defaults(tmp_path):
    rc = parse_config(_ini(tmp_path, "[kernel]\nd = 2\nbeta = 0.5\nfamily = pure\n"))
    spec = rc.kernel()
    assert spec.a1 == pytest.approx(KernelSpec.pure(2, 0.5).a1)
    assert rc["process.eta"] is None and rc["process.seed"] == 0
    assert rc.provenance["kernel.d"] == "file" and rc.provenance["process.seed"] == "default"


def test_inline_comments_are_stripped(tmp_path):
    rc = parse_config(_ini(tmp_path, "[kernel]\nfamily = pure   ; a comment\nbeta = 0.3 # another\n"))
    assert rc["kernel.family"] == "pure"
    assert rc["kernel.beta"] == 0.3


def test_flag_overrides_file(tmp_path):
    rc = parse_config(_ini(tmp_path, "[process]\nseed = 3\n"), {"process.seed": "9"})
    assert rc["process.seed"] == 9 and rc.provenance["process.seed"] == "flag"


@pytest.mark.parametrize("text", ["[kernel]\nbogus = 1\n", "[nosuch]\nx = 1\n", "[kernel]\nd = 2.5\n",
                                  "not an ini file", "[process]\nk0 = 1,0\n", "[kernel]\nfamily = wrong\n"])
def test_bad_files_are_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        parse_config(_ini(tmp_path, text))


@pytest.mark.parametrize("key, value", [("experiment.paths", "0"), ("kernel.d", "0"), ("process.eta", "-1"),
                                        ("process.t_max", "0"), ("experiment.eps_list", "0.5,2"),
                                        ("run.workers", "0"), ("kernel.a1", "-2"), ("kernel.family", "mollified"),
                                        ("kernel.family", "peaked")])
def test_bad_values_are_rejected(key, value):
    with pytest.raises(ConfigError):
        parse_config(overrides={key: value})


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/run.ini")


def test_k0_follows_dimension():
    assert parse_config(overrides={"kernel.d": "3"}).k0() == (0.0, 0.0, 0.0, 1.0)
    assert parse_config(overrides={"process.k0": "uniform"}).k0() is None
    assert parse_config(overrides={"process.k0": "3,0,4"}).k0() == (0.6, 0.0, 0.8)


def test_families_build():
    rc = parse_config(overrides={"kernel.family": "s+s", "kernel.f1": "0.2"})
    assert rc.kernel().family == "smooth_plus_singular"
    rc = parse_config(overrides={"kernel.family": "mollified", "kernel.n_mollify": "10"})
    assert rc.kernel().bounded
    rc = parse_config(overrides={"kernel.family": "peaked", "kernel.epsilon": "0.5"})
    assert rc.kernel().epsilon == 0.5


def test_semantic_config_excludes_run_section():
    a = parse_config(overrides={"run.workers": "1", "run.out": "x"})
    b = parse_config(overrides={"run.workers": "4", "run.out": "y"})
    assert fingerprint(a.semantic()) == fingerprint(b.semantic())


# -- io ---------------------------------------------------------------------------------

@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips(x):
    assert float(fmt(x)) == x


def test_fmt_special_values():
    assert fmt(math.nan) == "nan" and fmt(-math.inf) == "-inf"
    assert fmt(True) == "1" and fmt(np.int64(3)) == "3" and fmt(np.float32(0.5)) == "0.5"


def test_writers(tmp_path):
    p = write_csv(tmp_path / "a" / "x.csv", ["a", "b"], [[1, 0.1], [2, math.nan]])
    assert open(p).read() == "a,b\n1,0.1\n2,nan\n"
    q = write_json(tmp_path / "x.json", {"b": np.float64(1.5), "a": [np.int64(1), math.inf], "c": np.bool_(True)})
    assert json.load(open(q)) == {"a": [1, "inf"], "b": 1.5, "c": True}


# -- command line -----------------------------------------------------------------------

def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_spectrum_row_identity(tmp_path):
    assert main(["spectrum", "--d", "2", "--beta", "0.5", "--nmax", "32", "--out", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "spectrum.csv")
    assert len(rows) == 33
    assert float(rows[1]["mu_n"]) == pytest.approx(1.0, rel=1e-10)
    assert float(rows[0]["mu_n"]) == 0.0 and float(rows[0]["R_n"]) == 0.0
    summary = json.load(open(tmp_path / "spectrum.json"))
    assert summary["version"] == __version__ and len(summary["config_fingerprint"]) == 64
    assert summary["provenance"]["kernel.beta"] == "flag"
    assert summary["provenance"]["process.eta"] == "auto"


def test_simulate_zero_paths_is_config_error(tmp_path, capsys):
    assert main(["simulate", "--paths", "0", "--out", str(tmp_path)]) == 2
    assert "experiment.paths" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path):
    assert main(["moments", "--beta", "1.5", "--out", str(tmp_path)]) == 2
    assert main(["invariant", "--k0", "uniform", "--paths", "10", "--out", str(tmp_path)]) == 2


def test_simulate_outputs(tmp_path):
    assert main(["simulate", "--paths", "3", "--eta", "0.01", "--t-max", "0.5", "--out", str(tmp_path)]) == 0
    paths = _read_csv(tmp_path / "paths.csv")
    pos = _read_csv(tmp_path / "positions.csv")
    assert {r["path_id"] for r in paths} == {"0", "1", "2"}
    assert len(pos) == 3 * 3  # grid {0, 0.25, 0.5}
    for r in paths:
        k = np.array([float(r[f"k{j}"]) for j in range(3)])
        assert abs(k @ k - 1) < 1e-12


def test_experiment_failure_exit_code(tmp_path):
    # stopping the epsilon sequence at 0.4 leaves a large finite-epsilon bias
    assert main(["diffusion", "--paths", "400", "--eps", "0.4", "--lags", "0.5", "--out", str(tmp_path)]) == 1
    assert json.load(open(tmp_path / "diffusion.json"))["pass"] is False


@pytest.mark.parametrize("cmd", [["moments", "--paths", "400", "--t-grid", "0.5,1"],
                                 ["peaked", "--paths", "200", "--peaked-eps", "0.5,0.25"],
                                 ["validate", "--paths", "1000", "--seed", "7"]])
def test_outputs_identical_across_worker_counts(tmp_path, cmd):
    a, b = tmp_path / "a", tmp_path / "b"
    ra = main(cmd + ["--workers", "1", "--out", str(a)])
    rb = main(cmd + ["--workers", "2", "--out", str(b)])
    assert ra == rb == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir()) and files
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
