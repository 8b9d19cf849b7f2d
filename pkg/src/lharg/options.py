"""Option quote containers and the standard OTM sample filter."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

from .errors import ValidationError

OPTION_TYPES = ("call", "put")

# first-failing-rule attribution order
FILTER_RULES = ("maturity", "implied_vol", "price", "otm", "moneyness")


@dataclass(frozen=True)
class OptionQuote:
    """One market option record."""

    quote_date: dt.date
    expiry_date: dt.date
    maturity_days: int
    strike: float
    option_type: str     # "call" | "put"
    mid_price: float
    underlying: float
    rate: float          # daily decimal risk-free rate
    market_iv: float | None = None   # annualized decimal vol

    def __post_init__(self):
        if self.option_type not in OPTION_TYPES:
            raise ValidationError(f"option type must be call or put, "
                                  f"got {self.option_type!r}")
        if self.maturity_days <= 0:
            raise ValidationError("maturity must be positive")
        if self.strike <= 0.0 or self.underlying <= 0.0:
            raise ValidationError("strike and underlying must be positive")
        if self.mid_price < 0.0:
            raise ValidationError("mid price must be nonnegative")

    @property
    def moneyness(self) -> float:
        """Strike over spot, m = K/S."""
        return self.strike / self.underlying

    @property
    def is_otm(self) -> bool:
        # ATM boundary m = 1 is assigned to the call side
        if self.option_type == "call":
            return self.moneyness >= 1.0
        return self.moneyness < 1.0


@dataclass(frozen=True)
class OptionChain:
    """An immutable collection of quotes."""

    quotes: tuple[OptionQuote, ...]

    def __post_init__(self):
        object.__setattr__(self, "quotes", tuple(self.quotes))

    def __len__(self):
        return len(self.quotes)

    def __iter__(self):
        return iter(self.quotes)


@dataclass(frozen=True)
class FilterThresholds:
    """Sample-selection thresholds; defaults follow the usual OTM screen."""

    min_maturity_days: int = 10
    max_maturity_days: int = 365
    max_iv: float = 0.70
    min_price: float = 0.05
    min_moneyness: float = 0.8
    max_moneyness: float = 1.2

    def __post_init__(self):
        if min(self.min_maturity_days, self.max_maturity_days) <= 0 \
                or min(self.max_iv, self.min_price, self.min_moneyness,
                       self.max_moneyness) <= 0:
            raise ValidationError("filter thresholds must be positive")


@dataclass
class FilterReport:
    """Retained chain plus per-rule rejection counts (first failing rule)."""

    chain: OptionChain
    rejections: dict = field(default_factory=dict)
    n_input: int = 0


def _first_failure(q: OptionQuote, t: FilterThresholds) -> str | None:
    if not (t.min_maturity_days <= q.maturity_days <= t.max_maturity_days):
        return "maturity"
    if q.market_iv is not None and q.market_iv > t.max_iv:
        return "implied_vol"
    if q.mid_price < t.min_price:
        return "price"
    if not q.is_otm:
        return "otm"
    if not (t.min_moneyness <= q.moneyness <= t.max_moneyness):
        return "moneyness"
    return None


def filter_options(chain: OptionChain,
                   thresholds: FilterThresholds | None = None) -> FilterReport:
    """Keep quotes passing all five screening rules.

    Rules: maturity inside [10, 365] days, implied vol at most 70%, price
    at least 5 cents, out-of-the-money only (ATM calls included), and
    moneyness inside [0.8, 1.2].  Each rejected quote is attributed to the
    first rule it fails, in that order, so the counts plus the retained
    size always add up to the input size.
    """
    t = thresholds or FilterThresholds()
    kept, counts = [], dict.fromkeys(FILTER_RULES, 0)
    for q in chain:
        rule = _first_failure(q, t)
        if rule is None:
            kept.append(q)
        else:
            counts[rule] += 1
    return FilterReport(chain=OptionChain(tuple(kept)), rejections=counts,
                        n_input=len(chain))
