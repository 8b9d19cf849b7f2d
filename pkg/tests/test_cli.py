"""End-to-end command-line checks on small synthetic inputs."""

import datetime as dt
import struct

import numpy as np
import pytest

from lharg import ModelParams, simulate_paths, stationary_state
from lharg.cli import PATHSET_MAGIC, PATHSET_VERSION, main
from lharg.io import DatedSeries, load_params, write_option_chain, write_series
from lharg.options import OptionChain

from test_pricing import make_quote


@pytest.fixture(scope="module")
def small_model():
    # a light HARG so CLI fits stay fast
    return ModelParams(variant="HARG", theta=1.149e-5, delta=1.358, d=0.0,
                       beta_d=3.959e4, beta_w=2.451e4, beta_m=1.012e4,
                       alpha_d=0.0, alpha_w=0.0, alpha_m=0.0,
                       gamma_lev=0.0, lam=2.005, r=1e-4)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory, small_model):
    root = tmp_path_factory.mktemp("cli_data")
    paths = simulate_paths(small_model, stationary_state(small_model),
                           1500, 1, seed=99, burn_in=500)
    rv, y = paths.rv_paths[0], paths.y_paths[0]
    dates = [dt.date(2000, 1, 3) + dt.timedelta(days=i) for i in range(1500)]
    write_series(root / "rv.csv", DatedSeries(dates, rv), "rv")
    write_series(root / "returns.csv", DatedSeries(dates, y), "log_return")

    qd = dates[-1]
    quotes = tuple(
        make_quote(m, tau, "call" if m >= 1 else "put", qdate=qd, mid=20.0,
                   market_iv=0.2)
        for tau in (40, 130) for m in (0.9, 1.0, 1.1)
    )
    write_option_chain(root / "chain.csv", OptionChain(quotes))
    return root


def test_estimate_then_downstream(data_dir, small_model):
    fit_path = data_dir / "fit.txt"
    row_path = data_dir / "row.csv"
    code = main(["estimate", "--rv", str(data_dir / "rv.csv"),
                 "--returns", str(data_dir / "returns.csv"),
                 "--variant", "HARG", "--rate", "1e-4",
                 "--out", str(fit_path), "--csv", str(row_path)])
    assert code == 0
    params, extras = load_params(fit_path)
    assert params.variant == "HARG"
    assert extras["converged"] == 1.0
    header = row_path.read_text().splitlines()[0]
    assert header.startswith("lambda,theta,delta,beta_d")

    code = main(["cumulants", "--params", str(fit_path), "--measure", "P",
                 "--horizons", "22,63",
                 "--out", str(data_dir / "cumulants.csv")])
    assert code == 0
    lines = (data_dir / "cumulants.csv").read_text().splitlines()
    assert len(lines) == 3

    code = main(["price", "--params", str(fit_path), "--nu1", "-2500",
                 "--chain", str(data_dir / "chain.csv"),
                 "--rv", str(data_dir / "rv.csv"),
                 "--returns", str(data_dir / "returns.csv"),
                 "--out", str(data_dir / "priced.csv")])
    assert code == 0

    code = main(["evaluate", "--results", str(data_dir / "priced.csv"),
                 "--out", str(data_dir / "panels.csv")])
    assert code == 0
    assert (data_dir / "panels.csv").read_text().count("\n") >= 2


def test_simulate_with_dump(data_dir, small_model, tmp_path):
    from lharg.io import save_params
    fit = tmp_path / "p.txt"
    save_params(fit, small_model)
    out = tmp_path / "summary.csv"
    dump = tmp_path / "paths.bin"
    code = main(["simulate", "--params", str(fit), "--days", "12",
                 "--paths", "64", "--seed", "3", "--out", str(out),
                 "--dump", str(dump)])
    assert code == 0
    raw = dump.read_bytes()
    magic, version, n, horizon = struct.unpack_from("<4sIII", raw)
    assert magic == PATHSET_MAGIC
    assert version == PATHSET_VERSION
    assert (n, horizon) == (64, 12)
    assert len(raw) == 16 + 2 * 8 * 64 * 12
    rv = np.frombuffer(raw, dtype="<f8", count=64 * 12, offset=16)
    assert np.all(rv >= 0.0)


def test_exit_codes(data_dir, tmp_path, small_model):
    # missing file -> validation (2)
    assert main(["estimate", "--rv", str(tmp_path / "nope.csv"),
                 "--returns", str(data_dir / "returns.csv"),
                 "--variant", "HARG",
                 "--out", str(tmp_path / "x.txt"),
                 "--csv", str(tmp_path / "x.csv")]) == 2
    # infeasible calibration target -> 4
    from lharg.io import save_params
    fit = tmp_path / "p.txt"
    save_params(fit, small_model)
    assert main(["calibrate", "--params", str(fit), "--target-iv", "0.69",
                 "--out", str(tmp_path / "nu1.txt")]) == 4
    # Q simulation without premia -> validation (2)
    assert main(["simulate", "--params", str(fit), "--days", "5",
                 "--paths", "8", "--measure", "Q",
                 "--out", str(tmp_path / "s.csv")]) == 2


def test_mgf_check_smoke(data_dir, tmp_path, small_model):
    from lharg.io import save_params
    fit = tmp_path / "p.txt"
    save_params(fit, small_model, extras={"nu1": -2500.0})
    out = tmp_path / "check.csv"
    code = main(["mgf-check", "--params", str(fit), "--paths", "20000",
                 "--seed", "1", "--out", str(out)])
    assert code == 0
    text = out.read_text()
    assert "dev_se" in text.splitlines()[0]
    worst = max(float(line.rsplit(",", 1)[1])
                for line in text.splitlines()[1:])
    assert worst < 5.0
