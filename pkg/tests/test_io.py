"""CSV loaders, serialization round trips, config parsing, option filter."""

import datetime as dt

import numpy as np
import pytest

from lharg import ValidationError
from lharg.io import (
    Config,
    DatedSeries,
    load_config,
    load_option_chain,
    load_params,
    load_returns,
    load_rv_series,
    save_params,
    write_option_chain,
    write_series,
)
from lharg.options import (
    FilterThresholds,
    OptionChain,
    OptionQuote,
    filter_options,
)

from test_pricing import make_quote


class TestSeriesLoading:
    def test_well_formed(self, tmp_path):
        path = tmp_path / "rv.csv"
        path.write_text("date,rv\n2004-01-05,1.1e-4\n2004-01-06,9e-5\n"
                        "2004-01-07,1.3e-4\n")
        series = load_rv_series(path)
        assert len(series) == 3
        assert series.dates[0] == dt.date(2004, 1, 5)
        assert series.values[2] == 1.3e-4

    def test_out_of_order_rows_sorted(self, tmp_path):
        path = tmp_path / "rv.csv"
        path.write_text("date,rv\n2004-01-07,3e-4\n2004-01-05,1e-4\n")
        series = load_rv_series(path)
        assert series.dates == [dt.date(2004, 1, 5), dt.date(2004, 1, 7)]

    def test_negative_rv_cites_line(self, tmp_path):
        path = tmp_path / "rv.csv"
        rows = [f"2004-01-{d:02d},1e-4" for d in range(1, 10)]
        rows[6] = "2004-01-07,-1e-5"
        path.write_text("date,rv\n" + "\n".join(rows) + "\n")
        with pytest.raises(ValidationError, match=":8:"):
            load_rv_series(path)   # header is line 1, bad row is line 8

    def test_duplicate_dates_rejected(self, tmp_path):
        path = tmp_path / "rv.csv"
        path.write_text("date,rv\n2004-01-05,1e-4\n2004-01-05,2e-4\n")
        with pytest.raises(ValidationError, match="duplicate"):
            load_rv_series(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "rv.csv"
        path.write_text("day,variance\n2004-01-05,1e-4\n")
        with pytest.raises(ValidationError, match="header"):
            load_rv_series(path)

    def test_returns_allow_negative(self, tmp_path):
        path = tmp_path / "ret.csv"
        path.write_text("date,log_return\n2004-01-05,-0.01\n")
        series = load_returns(path)
        assert series.values[0] == -0.01

    def test_round_trip_full_precision(self, tmp_path):
        rng = np.random.default_rng(3)
        dates = [dt.date(2004, 1, 1) + dt.timedelta(days=i) for i in range(50)]
        values = rng.gamma(2.0, 5e-5, 50)
        path = tmp_path / "rv.csv"
        write_series(path, DatedSeries(dates, values), "rv")
        back = load_rv_series(path)
        assert back.dates == dates
        assert np.array_equal(back.values, values)

    def test_rescale_option(self, tmp_path):
        path = tmp_path / "rv.csv"
        path.write_text("date,rv\n2004-01-05,1e-4\n2004-01-06,3e-4\n")
        series = load_rv_series(path, rescale_to=4e-4)
        assert abs(series.values.mean() - 4e-4) < 1e-18


class TestChainLoading:
    def test_round_trip(self, tmp_path):
        chain = OptionChain((make_quote(0.9, 63, "put", market_iv=0.22),
                             make_quote(1.05, 126, "call", market_iv=0.18)))
        path = tmp_path / "chain.csv"
        write_option_chain(path, chain)
        back = load_option_chain(path)
        assert len(back) == 2
        for a, b in zip(chain, back):
            assert a == b

    def test_missing_iv_computed(self, tmp_path):
        path = tmp_path / "chain.csv"
        path.write_text(
            "quote_date,expiry_date,strike,type,mid_price,underlying,rate\n"
            "2004-06-09,2004-09-09,1000.0,call,25.0,1000.0,1e-4\n")
        chain = load_option_chain(path)
        q = chain.quotes[0]
        assert q.market_iv is not None
        # invert manually: tau=92 days, annualized with sqrt(252)
        from lharg.pricing import bs_price
        daily = q.market_iv / np.sqrt(252.0)
        assert abs(bs_price(1000.0, 1000.0, 1e-4, daily, 92.0, "call")
                   - 25.0) < 1e-8

    def test_expiry_before_quote_rejected(self, tmp_path):
        path = tmp_path / "chain.csv"
        path.write_text(
            "quote_date,expiry_date,strike,type,mid_price,underlying,rate\n"
            "2004-06-09,2004-06-01,1000.0,call,25.0,1000.0,1e-4\n")
        with pytest.raises(ValidationError, match=":2:"):
            load_option_chain(path)

    def test_bad_type_cites_line(self, tmp_path):
        path = tmp_path / "chain.csv"
        path.write_text(
            "quote_date,expiry_date,strike,type,mid_price,underlying,rate\n"
            "2004-06-09,2004-09-09,1000.0,straddle,25.0,1000.0,1e-4\n")
        with pytest.raises(ValidationError, match=":2:"):
            load_option_chain(path)


class TestParamsFile:
    def test_round_trip(self, tmp_path, zmlharg):
        path = tmp_path / "params.txt"
        save_params(path, zmlharg, extras={"nu1": -3375.0, "loglik": -25172.0})
        params, extras = load_params(path)
        assert params == zmlharg
        assert extras["nu1"] == -3375.0

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "params.txt"
        path.write_text("variant = HARG\ntheta = 1e-5\n")
        with pytest.raises(ValidationError, match="missing"):
            load_params(path)


class TestConfig:
    def test_parse_with_comments(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# pipeline configuration\n"
            "variant = P-LHARG\n"
            "seed = 7          # reproducibility\n"
            "target_iv = 0.21\n"
            "cos_n_terms = 1024\n"
            "\n")
        cfg = load_config(path)
        assert cfg.variant == "P-LHARG"
        assert cfg.seed == 7
        assert cfg.target_iv == 0.21
        assert cfg.cos_n_terms == 1024
        assert cfg.min_price == 0.05   # untouched default

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("volatility = high\n")
        with pytest.raises(ValidationError, match="unknown key"):
            load_config(path)

    def test_thresholds_view(self):
        cfg = Config(min_moneyness=0.85)
        t = cfg.thresholds()
        assert t.min_moneyness == 0.85
        assert t.max_iv == 0.70


class TestFilterOptions:
    def test_short_maturity_excluded(self):
        chain = OptionChain((make_quote(1.05, 5, "call", market_iv=0.2),))
        report = filter_options(chain)
        assert len(report.chain) == 0
        assert report.rejections["maturity"] == 1

    def test_deep_call_excluded(self):
        chain = OptionChain((make_quote(1.25, 63, "call", market_iv=0.2),))
        report = filter_options(chain)
        assert report.rejections["moneyness"] == 1

    def test_atm_call_retained(self):
        chain = OptionChain((make_quote(1.0, 30, "call", mid=5.0,
                                        market_iv=0.2),))
        report = filter_options(chain)
        assert len(report.chain) == 1

    def test_atm_put_is_itm_by_convention(self):
        chain = OptionChain((make_quote(1.0, 30, "put", mid=5.0,
                                        market_iv=0.2),))
        report = filter_options(chain)
        assert report.rejections["otm"] == 1

    def test_iv_and_price_rules(self):
        chain = OptionChain((
            make_quote(1.05, 63, "call", mid=5.0, market_iv=0.75),
            make_quote(1.05, 63, "call", mid=0.01, market_iv=0.2),
        ))
        report = filter_options(chain)
        assert report.rejections["implied_vol"] == 1
        assert report.rejections["price"] == 1

    def test_idempotent(self):
        rng = np.random.default_rng(8)
        quotes = []
        for _ in range(200):
            m = rng.uniform(0.6, 1.4)
            kind = "call" if rng.uniform() < 0.5 else "put"
            quotes.append(make_quote(m, int(rng.integers(2, 500)), kind,
                                     mid=float(rng.uniform(0.01, 50)),
                                     market_iv=float(rng.uniform(0.05, 0.9))))
        chain = OptionChain(tuple(quotes))
        once = filter_options(chain)
        twice = filter_options(once.chain)
        assert twice.chain.quotes == once.chain.quotes
        assert sum(twice.rejections.values()) == 0

    def test_counts_conserve_total(self):
        rng = np.random.default_rng(9)
        quotes = []
        for _ in range(500):
            m = rng.uniform(0.5, 1.5)
            kind = "call" if rng.uniform() < 0.5 else "put"
            quotes.append(make_quote(m, int(rng.integers(2, 600)), kind,
                                     mid=float(rng.uniform(0.001, 50)),
                                     market_iv=float(rng.uniform(0.05, 1.0))))
        chain = OptionChain(tuple(quotes))
        report = filter_options(chain)
        assert len(report.chain) + sum(report.rejections.values()) == 500
        assert report.n_input == 500

    def test_custom_thresholds(self):
        chain = OptionChain((make_quote(1.05, 8, "call", market_iv=0.2),))
        loose = FilterThresholds(min_maturity_days=5)
        assert len(filter_options(chain, loose).chain) == 1
