"""Bio-economic dynamics of a multi-resource common fishery.

Stock-dependent catchability converts effort into harvest, individual
harvests are effort-proportional shares of the total, and escapement
regrows through a Ricker-style spawner-recruit map.  All functions are
pure and operate on plain floats / numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class ResourceParams:
    """Static parameters of one resource population."""

    equilibrium_stock: float
    growth_rate: float = 1.0
    initial_stock: float | None = None  # defaults to equilibrium_stock

    def __post_init__(self):
        if self.equilibrium_stock <= 0:
            raise ValueError("equilibrium_stock must be positive")
        if self.growth_rate <= 0:
            raise ValueError("growth_rate must be positive")
        if self.initial_stock is None:
            self.initial_stock = self.equilibrium_stock
        if self.initial_stock < 0:
            raise ValueError("initial_stock must be non-negative")


@dataclass
class ResourceState:
    """Current stock levels, one entry per resource."""

    stocks: np.ndarray
    time_step: int = 0

    def __post_init__(self):
        self.stocks = np.asarray(self.stocks, dtype=float)
        if np.any(self.stocks < 0):
            raise ValueError("stocks must be non-negative")


@dataclass
class HarvesterParams:
    """One harvester's per-resource skill levels and per-step cost."""

    skills: np.ndarray
    cost_per_step: float = 0.0

    def __post_init__(self):
        self.skills = np.asarray(self.skills, dtype=float)
        if np.any(self.skills < 0) or np.any(self.skills > 1):
            raise ValueError("skills must lie in [0, 1]")
        if self.cost_per_step < 0:
            raise ValueError("cost_per_step must be non-negative")


@dataclass
class HarvestOutcome:
    """Result of one harvesting step.

    individual_harvest and effective_efforts are (harvesters x resources);
    total_harvest and total_efforts are per-resource vectors.
    """

    individual_harvest: np.ndarray
    total_harvest: np.ndarray
    effective_efforts: np.ndarray
    total_efforts: np.ndarray


def catchability(stock: float, params: ResourceParams) -> float:
    """Fraction of one effort unit converted to harvest at this stock level.

    Linear in the stock up to twice the equilibrium level, then saturates
    at 1.  Monotone non-decreasing in the stock.
    """
    cap = 2.0 * params.equilibrium_stock
    if stock <= cap:
        return stock / cap
    return 1.0


def total_harvest(total_effort: float, stock: float, params: ResourceParams) -> float:
    """Total amount harvested from one resource; never exceeds the stock."""
    h = catchability(stock, params) * total_effort
    return h if h <= stock else stock


def spawner_recruit(escapement: float, params: ResourceParams) -> float:
    """Next-period stock grown from the post-harvest escapement.

    Fixed point at the equilibrium stock: mapping the equilibrium level
    returns it exactly, and zero escapement stays zero.
    """
    return escapement * math.exp(
        params.growth_rate * (1.0 - escapement / params.equilibrium_stock)
    )


def step(
    state: ResourceState,
    efforts: np.ndarray,
    harvesters: list[HarvesterParams],
    resources: list[ResourceParams],
) -> tuple[ResourceState, HarvestOutcome]:
    """Advance the fishery by one step under a matrix of exerted efforts.

    efforts is (harvesters x resources).  Effective effort is effort
    scaled by skill; each harvester's catch is its share of the total
    effective effort applied to that resource (zero when nobody fishes
    it).  Escapement regrows through the spawner-recruit map.
    """
    efforts = np.asarray(efforts, dtype=float)
    n, r = len(harvesters), len(resources)
    if efforts.shape != (n, r) or state.stocks.shape != (r,):
        raise ValueError(
            f"dimension mismatch: efforts {efforts.shape}, "
            f"{n} harvesters, {r} resources, stocks {state.stocks.shape}"
        )

    skills = np.stack([h.skills for h in harvesters])
    eff = efforts * skills
    totals = eff.sum(axis=0)

    caught = np.empty(r)
    shares = np.zeros((n, r))
    next_stocks = np.empty(r)
    for j, res in enumerate(resources):
        s = state.stocks[j]
        caught[j] = total_harvest(totals[j], s, res)
        if totals[j] > 0.0:
            shares[:, j] = eff[:, j] / totals[j] * caught[j]
        escapement = max(s - caught[j], 0.0)  # guard round-off
        next_stocks[j] = spawner_recruit(escapement, res)

    outcome = HarvestOutcome(
        individual_harvest=shares,
        total_harvest=caught,
        effective_efforts=eff,
        total_efforts=totals,
    )
    return ResourceState(stocks=next_stocks, time_step=state.time_step + 1), outcome


def revenue(
    prices: np.ndarray,
    outcome: HarvestOutcome,
    harvesters: list[HarvesterParams],
) -> np.ndarray:
    """Per-harvester money earned this step: price-weighted catch minus cost.

    The per-step cost is charged once per harvester, not once per resource.
    """
    prices = np.asarray(prices, dtype=float)
    costs = np.array([h.cost_per_step for h in harvesters])
    return outcome.individual_harvest @ prices - costs


def equilibrium_stock(
    scarcity: float, n_harvesters: int, growth_rate: float, max_effort: float
) -> float:
    """Equilibrium stock level scaled so scarcity tunes problem difficulty.

    At scarcity 1 the resource survives all harvesters exerting maximum
    effort indefinitely; below 1 overharvesting can deplete it.
    """
    eg = math.exp(growth_rate)
    k = (eg * max_effort) / (2.0 * (eg - 1.0))
    return scarcity * k * n_harvesters


def is_depleted(state: ResourceState, threshold: float) -> bool:
    """True iff any stock fell strictly below the depletion threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return bool(np.any(state.stocks < threshold))
