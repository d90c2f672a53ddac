"""``key = value`` scenario files.

Example::

    # worked example
    principal = 500000
    rate_percent = 15
    guarantee_percent = 10
    collateral_coefficient = 1
    collateral_basis = principal_net_plus_interest
    default_prob_percent = 10
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from vekselfund.deal import CollateralBasis, LoanTerms, required_collateral
from vekselfund.money import Money, Rate, Share, parse_decimal
from vekselfund.portfolio import SectorTier
from vekselfund.simulator import CollateralRecovery, SimConfig

_RATIO_RE = re.compile(r"^(-?\d+)/(\d+)$")


class ConfigError(ValueError):
    pass


def parse_ratio_or_percent(text: str) -> Fraction:
    """``"12.5"`` is a percent (<= 4 decimals); ``"3/23"`` is an exact ratio of one."""
    text = text.strip()
    m = _RATIO_RE.match(text)
    if m:
        num, den = int(m.group(1)), int(m.group(2))
        if den == 0:
            raise ValueError(f"zero denominator in {text!r}")
        return Fraction(num, den)
    return parse_decimal(text, max_places=4) / 100


def parse_share(text: str) -> Share:
    return Share(parse_ratio_or_percent(text))


def parse_rate(text: str) -> Rate:
    return Rate(parse_ratio_or_percent(text))


@dataclass(frozen=True)
class ScenarioConfig:
    terms: LoanTerms
    default_prob: Share = Share(0)
    recovery: str = "zero"
    collateral_value: Money | None = None
    recovery_fraction: Share = Share(1)
    trials: int = 100
    n_loans: int = 10_000
    seed: int = 0
    tier: SectorTier | None = None

    @property
    def sim_recovery(self) -> CollateralRecovery | None:
        if self.recovery == "zero":
            return None
        value = self.collateral_value if self.collateral_value is not None else required_collateral(self.terms)
        return CollateralRecovery(value, self.recovery_fraction)

    def sim_config(self, seed: int | None = None) -> SimConfig:
        return SimConfig(
            terms=self.terms,
            default_prob=self.default_prob,
            n_loans=self.n_loans,
            recovery=self.sim_recovery,
            trials=self.trials,
            seed=self.seed if seed is None else seed,
        )


_REQUIRED = ("principal", "rate_percent", "guarantee_percent")
_KNOWN = _REQUIRED + (
    "collateral_coefficient",
    "collateral_basis",
    "sector",
    "default_prob_percent",
    "default_prob",
    "recovery",
    "collateral_value",
    "recovery_percent",
    "trials",
    "n_loans",
    "seed",
    "tier_discount_percent",
    "tier_margin_percent",
)


def read_pairs(text: str) -> dict[str, tuple[int, str]]:
    pairs: dict[str, tuple[int, str]] = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {no}: expected 'key = value'")
        if key not in _KNOWN:
            raise ConfigError(f"line {no}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {no}: duplicate key {key!r}")
        pairs[key] = (no, value)
    return pairs


def _positive_int(value: str, key: str, upper: int | None = None) -> int:
    if not value.isdigit():
        raise ValueError(f"{key} must be a non-negative integer")
    n = int(value)
    if upper is not None and n >= upper:
        raise ValueError(f"{key} must be below {upper}")
    return n


def parse_config(text: str) -> ScenarioConfig:
    pairs = read_pairs(text)
    for key in _REQUIRED:
        if key not in pairs:
            raise ConfigError(f"missing required key {key!r}")
    if "default_prob" in pairs and "default_prob_percent" in pairs:
        raise ConfigError("give default_prob or default_prob_percent, not both")

    current = ""

    def get(key: str, default: str | None = None) -> str | None:
        nonlocal current
        current = key
        return pairs[key][1] if key in pairs else default

    try:
        basis_text = get("collateral_basis", CollateralBasis.PRINCIPAL_NET_PLUS_INTEREST.value)
        try:
            basis = CollateralBasis(basis_text)
        except ValueError:
            choices = ", ".join(b.value for b in CollateralBasis)
            raise ValueError(f"expected one of {choices}") from None
        principal = Money.rubles(get("principal"))
        rate = Rate.percent(get("rate_percent"))
        guarantee = Share.percent(get("guarantee_percent"))
        coefficient = parse_decimal(get("collateral_coefficient", "1"), max_places=4)
        sector = get("sector", "general")
        current = ""
        terms = LoanTerms(principal, rate, guarantee, coefficient, basis, sector)
        if "default_prob" in pairs:
            default_prob = parse_share(get("default_prob"))
        else:
            default_prob = Share.percent(get("default_prob_percent", "0"))
        recovery = get("recovery", "zero")
        if recovery not in ("zero", "collateral"):
            raise ValueError("expected 'zero' or 'collateral'")
        collateral = get("collateral_value")
        tier = None
        if "tier_discount_percent" in pairs:
            tier = SectorTier(
                sector=terms.sector,
                rate_discount=Rate.percent(get("tier_discount_percent")),
                safety_margin=Share.percent(get("tier_margin_percent", "0")),
            )
        cfg = ScenarioConfig(
            terms=terms,
            default_prob=default_prob,
            recovery=recovery,
            collateral_value=Money.rubles(collateral) if collateral is not None else None,
            recovery_fraction=Share.percent(get("recovery_percent", "100")),
            trials=_positive_int(get("trials", "100"), "trials"),
            n_loans=_positive_int(get("n_loans", "10000"), "n_loans"),
            seed=_positive_int(get("seed", "0"), "seed", 1 << 64),
            tier=tier,
        )
        current = ""
        cfg.sim_config()
    except ValueError as exc:
        if current in pairs:
            raise ConfigError(f"line {pairs[current][0]}, {current}: {exc}") from None
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)
