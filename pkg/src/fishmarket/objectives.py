"""Policymaker reward composition and per-step economic metrics.

Fairness indices (Jain, Gini, Atkinson), the stock-sustainability term,
valuation obfuscation, and the waste / leftover-budget fractions that
summarise how far an allocation sits from the market-clearing outcome.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ObjectiveWeights:
    """Weights of the policymaker's reward components.

    harvester_welfare, buyer_welfare, sustainability and fairness weigh
    additive objectives; intervention penalises the absolute gap between
    the chosen prices and the reference (equilibrium) prices.
    """

    harvester_welfare: float = 1.0
    buyer_welfare: float = 1.0
    sustainability: float = 1.0
    fairness: float = 1.0
    intervention: float = 0.0

    def __post_init__(self):
        for name in (
            "harvester_welfare",
            "buyer_welfare",
            "sustainability",
            "fairness",
            "intervention",
        ):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"weight {name} must be finite and >= 0")


@dataclass
class ObfuscationSpec:
    """How buyer valuations are degraded before the policymaker sees them.

    kind is one of "identity", "bins" (snap to the midpoint of one of
    num_bins equal-width bins of [0, 1]) or "uniform_noise" (add a draw
    from (0, noise_width)).
    """

    kind: str = "identity"
    num_bins: int = 10
    noise_width: float = 0.1

    def __post_init__(self):
        if self.kind not in ("identity", "bins", "uniform_noise"):
            raise ValueError(f"unknown obfuscation kind {self.kind!r}")
        if self.num_bins < 1:
            raise ValueError("num_bins must be >= 1")
        if self.noise_width <= 0:
            raise ValueError("noise_width must be positive")


@dataclass
class FairnessIndex:
    """Which inequality index the reward and the metrics use."""

    kind: str = "jain"
    epsilon: float = 1.0  # Atkinson inequality-aversion parameter

    def __post_init__(self):
        if self.kind not in ("jain", "gini", "atkinson"):
            raise ValueError(f"unknown fairness index {self.kind!r}")
        if self.kind == "atkinson" and self.epsilon != 1.0:
            raise ValueError("only the epsilon=1 Atkinson index is supported")


class UndefinedMetric(ValueError):
    """Raised when a metric has no value (e.g. an all-zero input vector)."""


def jain(values: np.ndarray) -> float:
    """Jain fairness index: (sum x)^2 / (n sum x^2), 1 iff all equal."""
    x = np.asarray(values, dtype=float)
    denom = x.size * float(np.sum(x * x))
    if denom == 0.0:
        raise UndefinedMetric("Jain index undefined for an all-zero vector")
    return float(np.sum(x)) ** 2 / denom


def gini(values: np.ndarray) -> float:
    """Gini coefficient via mean absolute pairwise difference; 0 iff all equal."""
    x = np.asarray(values, dtype=float)
    total = float(np.sum(x))
    if total == 0.0:
        raise UndefinedMetric("Gini coefficient undefined for an all-zero vector")
    diffs = np.abs(x[:, None] - x[None, :]).sum()
    return float(diffs) / (2.0 * x.size * total)


def atkinson(values: np.ndarray) -> float:
    """Atkinson index at inequality aversion 1: one minus geometric over
    arithmetic mean.  Any zero entry collapses the geometric mean, giving 1."""
    x = np.asarray(values, dtype=float)
    mean = float(np.mean(x))
    if mean == 0.0:
        raise UndefinedMetric("Atkinson index undefined for an all-zero vector")
    if np.any(x == 0.0):
        return 1.0
    geo = float(np.exp(np.mean(np.log(x))))
    return 1.0 - geo / mean


def fairness_score(values: np.ndarray, index: FairnessIndex) -> float:
    """Higher-is-fairer score of a payoff vector under the chosen index.

    Jain already points that way; Gini and Atkinson measure inequality,
    so they enter as one minus the index.  An all-zero vector counts as
    perfectly equal (score 1).
    """
    x = np.asarray(values, dtype=float)
    if x.size and not np.any(x):
        return 1.0
    if index.kind == "jain":
        return jain(x)
    if index.kind == "gini":
        return 1.0 - gini(x)
    return 1.0 - atkinson(x)


def sustainability_term(stocks: np.ndarray, equilibrium_stocks: np.ndarray) -> float:
    """Most negative deviation of any stock from its equilibrium level (<= 0)."""
    s = np.asarray(stocks, dtype=float)
    eq = np.asarray(equilibrium_stocks, dtype=float)
    if s.shape != eq.shape:
        raise ValueError("stocks and equilibrium_stocks must have the same shape")
    return float(np.minimum(s - eq, 0.0).min())


def obfuscate(
    valuations: np.ndarray, spec: ObfuscationSpec, rng: np.random.Generator
) -> np.ndarray:
    """Degrade a matrix of valuations in [0, 1] per the obfuscation spec.

    Binning snaps each value to its bin midpoint (bins are [i/k, (i+1)/k)
    with the last bin closed, so 1.0 lands in the top bin).  Uniform noise
    may push values above 1; they are returned unclamped.
    """
    v = np.asarray(valuations, dtype=float)
    if spec.kind == "identity":
        return v.copy()
    if spec.kind == "bins":
        k = spec.num_bins
        idx = np.minimum(np.floor(v * k).astype(int), k - 1)
        return (idx + 0.5) / k
    return v + rng.uniform(0.0, spec.noise_width, size=v.shape)


def wasted_fraction(allocation: np.ndarray, supplies: np.ndarray) -> float:
    """Fraction of the total supply left unsold by the allocation."""
    x = np.asarray(allocation, dtype=float)
    e = np.asarray(supplies, dtype=float)
    total = float(np.sum(e))
    if total <= 0.0:
        raise UndefinedMetric("wasted fraction undefined with zero total supply")
    sold = float(np.sum(x))
    return (total - sold) / total


def leftover_budget_fraction(
    allocation: np.ndarray, prices: np.ndarray, budgets: np.ndarray
) -> float:
    """Fraction of the total buyer budget left unspent by the allocation."""
    x = np.asarray(allocation, dtype=float)
    p = np.asarray(prices, dtype=float)
    b = np.asarray(budgets, dtype=float)
    total = float(np.sum(b))
    if total <= 0.0:
        raise ValueError("total budget must be positive")
    spent = float(np.sum(x @ p))
    return (total - spent) / total


def policymaker_reward(
    harvester_revenues: np.ndarray,
    buyer_utilities: np.ndarray,
    stocks: np.ndarray,
    equilibrium_stocks: np.ndarray,
    weights: ObjectiveWeights,
    fairness: FairnessIndex,
    prices: np.ndarray,
    baseline_prices: np.ndarray | None = None,
) -> float:
    """Weighted sum of the policymaker's objectives for one step.

    Mean harvester revenue, mean buyer utility, the sustainability term,
    a fairness score (mean of the index over harvester revenues, clamped
    at zero, and over buyer utilities), minus the intervention weight
    times the summed absolute gap to the baseline prices.
    """
    w = weights
    total = 0.0
    if w.harvester_welfare:
        total += w.harvester_welfare * float(np.mean(harvester_revenues))
    if w.buyer_welfare:
        total += w.buyer_welfare * float(np.mean(buyer_utilities))
    if w.sustainability:
        total += w.sustainability * sustainability_term(stocks, equilibrium_stocks)
    if w.fairness:
        clamped = np.maximum(np.asarray(harvester_revenues, dtype=float), 0.0)
        fair = 0.5 * (
            fairness_score(clamped, fairness)
            + fairness_score(np.asarray(buyer_utilities, dtype=float), fairness)
        )
        total += w.fairness * fair
    if w.intervention:
        if baseline_prices is None:
            raise ValueError(
                "intervention weight is positive but no baseline prices were given"
            )
        gap = np.abs(np.asarray(prices, float) - np.asarray(baseline_prices, float))
        total -= w.intervention * float(np.sum(gap))
    return total
