"""Linear Fisher market core.

Equilibrium prices and allocations come from proportional-response bid
dynamics (bids updated proportional to each good's utility contribution;
prices are bid column sums), which converge on linear markets without
step-size tuning.  A dense textbook simplex with Bland's anti-cycling
rule handles the budget-constrained welfare-maximising allocation at
externally given prices; problem sizes here are tiny, so no sparse
machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITERATIONS = 100_000


class SolverFailure(RuntimeError):
    """Equilibrium bid dynamics failed to converge within the iteration cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class InfeasibleProgram(RuntimeError):
    """The linear program has no feasible point."""


class UnboundedProgram(RuntimeError):
    """The linear program's objective is unbounded above."""


@dataclass
class MarketInstance:
    """One time-step's market: buyer budgets, valuations and good supplies."""

    budgets: np.ndarray       # (buyers,)
    valuations: np.ndarray    # (buyers, goods)
    supplies: np.ndarray      # (goods,)

    def __post_init__(self):
        self.budgets = np.asarray(self.budgets, dtype=float)
        self.valuations = np.asarray(self.valuations, dtype=float)
        self.supplies = np.asarray(self.supplies, dtype=float)
        if self.valuations.shape != (self.budgets.size, self.supplies.size):
            raise ValueError("valuations must be (buyers x goods)")
        if np.any(self.budgets <= 0):
            raise ValueError("budgets must be positive")
        if np.any(self.valuations < 0) or np.any(self.supplies < 0):
            raise ValueError("valuations and supplies must be non-negative")


@dataclass
class MarketOutcome:
    """Prices, allocation and the buyer utilities they induce."""

    prices: np.ndarray        # (goods,)
    allocation: np.ndarray    # (buyers, goods)
    buyer_utilities: np.ndarray  # (buyers,)


def eg_objective(allocation: np.ndarray, instance: MarketInstance) -> float:
    """Budget-weighted log-utility objective of the equilibrium program.

    Returns -inf when any buyer ends up with zero utility (outside the
    objective's domain) rather than raising.
    """
    x = np.asarray(allocation, dtype=float)
    utilities = np.sum(instance.valuations * x, axis=1)
    if np.any(utilities <= 0.0):
        return -math.inf
    return float(np.dot(instance.budgets, np.log(utilities)))


def _pr_chunk(
    vals: np.ndarray, budgets: np.ndarray, bids: np.ndarray, iterations: int
) -> tuple[np.ndarray, float]:
    """Run proportional-response bid updates; returns bids and last change."""
    change = math.inf
    scale = budgets[:, None]
    for _ in range(iterations):
        prices = bids.sum(axis=0)
        with np.errstate(invalid="ignore"):
            shares = np.where(prices > 0.0, bids / prices, 0.0)
        gains = vals * shares
        new_bids = gains / gains.sum(axis=1, keepdims=True) * scale
        change = float(np.max(np.abs(new_bids - bids)))
        bids = new_bids
        if change == 0.0:
            break
    return bids, change


def _support_flows(
    edges: list[tuple[int, int]], requirements: np.ndarray, n_nodes: int
) -> np.ndarray | None:
    """Non-negative edge flows meeting each node's requirement, or None.

    Peels degree-1 nodes, which solves forests exactly; residual cyclic
    parts fall back to a feasibility LP.
    """
    adjacency: list[set[int]] = [set() for _ in range(n_nodes)]
    ends = []
    for idx, (u, v) in enumerate(edges):
        adjacency[u].add(idx)
        adjacency[v].add(idx)
        ends.append((u, v))

    req = requirements.astype(float).copy()
    flows = np.zeros(len(edges))
    alive = set(range(len(edges)))
    queue = [u for u in range(n_nodes) if len(adjacency[u]) == 1]
    while queue:
        u = queue.pop()
        if len(adjacency[u]) != 1:
            continue
        idx = next(iter(adjacency[u]))
        a, b = ends[idx]
        other = b if a == u else a
        flows[idx] = req[u]
        req[u] = 0.0
        req[other] -= flows[idx]
        adjacency[u].discard(idx)
        adjacency[other].discard(idx)
        alive.discard(idx)
        if len(adjacency[other]) == 1:
            queue.append(other)

    if alive:
        live = sorted(alive)
        cols = {e: j for j, e in enumerate(live)}
        rows = sorted({ends[e][0] for e in live} | {ends[e][1] for e in live})
        a_eq = np.zeros((len(rows), len(live)))
        for e in live:
            u, v = ends[e]
            a_eq[rows.index(u), cols[e]] = 1.0
            a_eq[rows.index(v), cols[e]] = 1.0
        rhs = req[rows]
        stacked = np.vstack([a_eq, -a_eq])
        bound = np.concatenate([rhs, -rhs])
        try:
            sol, _ = lp_solve(np.zeros(len(live)), stacked, bound)
        except (InfeasibleProgram, UnboundedProgram):
            return None
        for e, j in cols.items():
            flows[e] = sol[j]

    if np.any(flows < -1e-9):
        return None
    return np.maximum(flows, 0.0)


def _support_from_prices(
    vals: np.ndarray, prices: np.ndarray, tie_ratio: float
) -> np.ndarray | None:
    """Active buyer-good pairs implied by a price vector.

    A pair is active when its value-per-money is within `tie_ratio`
    (relative) of the buyer's best.  Goods left uncovered adopt their
    relatively closest buyer so every good can clear.
    """
    if np.any(prices <= 0.0) or not np.all(np.isfinite(prices)):
        return None
    ratios = vals / prices
    best = ratios.max(axis=1)
    support = ratios >= best[:, None] * (1.0 - tie_ratio)
    uncovered = ~support.any(axis=0)
    if np.any(uncovered):
        closeness = ratios / best[:, None]
        for g in np.flatnonzero(uncovered):
            support[int(np.argmax(closeness[:, g])), g] = True
    return support


def _solve_support(
    vals: np.ndarray, budgets: np.ndarray, support: np.ndarray
) -> tuple[np.ndarray, np.ndarray] | None:
    """Exact equilibrium candidate for a guessed active-pair graph.

    Prices follow from equal value-per-money along spanning trees of the
    bipartite support plus money conservation per connected component;
    the spending flow is then recovered on the graph.  Returns (prices,
    allocation) in the unit-supply economy, or None when the guess does
    not admit a non-negative spending flow.
    """
    n_buyers, n_goods = vals.shape
    if not np.all(support.sum(axis=0) > 0) or not np.all(support.sum(axis=1) > 0):
        return None

    # Bipartite nodes: buyers 0..B-1, goods B..B+G-1.
    n_nodes = n_buyers + n_goods
    edges = [(b, n_buyers + g) for b, g in zip(*np.nonzero(support))]
    neighbours: list[list[int]] = [[] for _ in range(n_nodes)]
    for b, gn in edges:
        neighbours[b].append(gn)
        neighbours[gn].append(b)

    log_vals = np.where(support, np.log(np.where(support, vals, 1.0)), 0.0)
    potential = np.zeros(n_nodes)  # log price (goods) / log multiplier (buyers)
    component = np.full(n_nodes, -1, dtype=int)
    n_components = 0
    for start in range(n_nodes):
        if component[start] >= 0:
            continue
        component[start] = n_components
        stack = [start]
        while stack:
            u = stack.pop()
            for v in neighbours[u]:
                if component[v] < 0:
                    component[v] = n_components
                    b, gn = (u, v) if u < n_buyers else (v, u)
                    # value = multiplier * price along every active pair
                    potential[v] = log_vals[b, gn - n_buyers] - potential[u]
                    stack.append(v)
        n_components += 1

    log_p = potential[n_buyers:]
    good_component = component[n_buyers:]
    buyer_component = component[:n_buyers]
    new_prices = np.zeros(n_goods)
    for comp in range(n_components):
        goods_in = good_component == comp
        raw = np.exp(log_p[goods_in] - log_p[goods_in].max())
        scale = budgets[buyer_component == comp].sum() / raw.sum()
        new_prices[goods_in] = raw * scale

    requirements = np.concatenate([budgets, new_prices])
    flows = _support_flows(edges, requirements, n_nodes)
    if flows is None:
        return None

    spending = np.zeros((n_buyers, n_goods))
    for (b, gn), f in zip(edges, flows):
        spending[b, gn - n_buyers] = f
    allocation = spending / new_prices
    return new_prices, allocation


_SMOOTHING_LEVELS = (0.03, 1e-3, 3e-5, 1e-6)


def _newton_prices(
    vals: np.ndarray, budgets: np.ndarray, prices: np.ndarray
) -> np.ndarray:
    """Refine unit-supply prices by Newton descent on the smoothed dual.

    Equilibrium prices minimise total price plus budget-weighted log best
    value-per-money.  Replacing that max by a softmax of width mu gives a
    smooth convex function of the log prices, annealed down to mu ~ 1e-6;
    each level takes a few damped Newton steps in `goods` dimensions.
    """
    with np.errstate(divide="ignore"):
        log_vals = np.where(
            vals > 0.0, np.log(np.where(vals > 0.0, vals, 1.0)), -np.inf
        )
    q = np.log(prices)
    budget_total = budgets.sum()

    def value_and_weights(q: np.ndarray, mu: float):
        z = (log_vals - q) / mu
        zmax = z.max(axis=1, keepdims=True)
        ez = np.exp(z - zmax)
        sez = ez.sum(axis=1, keepdims=True)
        value = float(np.exp(q).sum() + budgets @ (mu * (zmax + np.log(sez))).ravel())
        return value, ez / sez

    for mu in _SMOOTHING_LEVELS:
        # Interim levels only warm-start the next; only the last is tight.
        target = budget_total * (1e-11 if mu == _SMOOTHING_LEVELS[-1] else 0.03 * mu)
        for _ in range(40):
            value, weights = value_and_weights(q, mu)
            money_in = budgets @ weights
            grad = np.exp(q) - money_in
            if np.max(np.abs(grad)) <= target:
                break
            hess = np.diag(np.exp(q) + money_in / mu)
            hess -= (weights * budgets[:, None]).T @ weights / mu
            try:
                direction = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                direction = grad / np.abs(np.diag(hess)).max()
            step = 1.0
            for _ in range(40):
                trial = q - step * direction
                trial_value, _ = value_and_weights(trial, mu)
                if trial_value <= value - 1e-4 * step * float(grad @ direction):
                    q = trial
                    break
                step *= 0.5
            else:
                break
    return np.exp(q)


def _forest_variants(support: np.ndarray, cap: int = 96):
    """Yield the support and acyclic variants of it.

    A consistent equilibrium support is generically a forest; when the
    guessed graph has cycles (near-tied values), yield every way of
    breaking each independent cycle by removing one of its edges.
    """
    yield support
    n_buyers, n_goods = support.shape
    n_nodes = n_buyers + n_goods
    edges = [(b, n_buyers + g) for b, g in zip(*np.nonzero(support))]

    parent = list(range(n_nodes))

    def find(u: int) -> int:
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    tree: list[list[tuple[int, int]]] = [[] for _ in range(n_nodes)]
    extra = []
    for idx, (u, v) in enumerate(edges):
        ru, rv = find(u), find(v)
        if ru == rv:
            extra.append(idx)
        else:
            parent[ru] = rv
            tree[u].append((v, idx))
            tree[v].append((u, idx))
    if not extra:
        return

    def tree_path(src: int, dst: int) -> list[int]:
        back: dict[int, tuple[int, int]] = {src: (-1, -1)}
        stack = [src]
        while stack:
            u = stack.pop()
            if u == dst:
                break
            for v, idx in tree[u]:
                if v not in back:
                    back[v] = (u, idx)
                    stack.append(v)
        path = []
        u = dst
        while u != src:
            u, idx = back[u]
            path.append(idx)
        return path

    cycles = []
    for idx in extra:
        u, v = edges[idx]
        cycles.append([idx] + tree_path(u, v))

    import itertools

    produced = 0
    seen = set()
    for removal in itertools.product(*cycles):
        dropped = frozenset(removal)
        if dropped in seen:
            continue
        seen.add(dropped)
        variant = support.copy()
        for idx in dropped:
            b, gn = edges[idx]
            variant[b, gn - n_buyers] = False
        yield variant
        produced += 1
        if produced >= cap:
            return


def solve_equilibrium(
    instance: MarketInstance,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> MarketOutcome:
    """Compute competitive-equilibrium prices and allocation.

    Zero-supply and nowhere-valued goods are removed up front and
    reported with price 0; buyers left valuing nothing get empty bundles
    (their budget stays unspent).  Proportional-response bid dynamics
    drive towards the fixed point; periodically the active buyer-good
    support is extracted and solved exactly, and the first candidate
    whose clearance / budget / value-per-money residuals all fall below
    `tolerance` is returned.  Budgets are exhausted and priced goods
    clear exactly by construction at the fixed point.
    """
    n_buyers, n_goods = instance.valuations.shape
    prices = np.zeros(n_goods)
    allocation = np.zeros((n_buyers, n_goods))

    good_mask = (instance.supplies > 0.0) & (instance.valuations.sum(axis=0) > 0.0)
    if not np.any(good_mask):
        return MarketOutcome(prices, allocation, np.zeros(n_buyers))

    supplies = instance.supplies[good_mask]
    # Scale to unit supplies: value of owning a whole good.
    scaled_vals = instance.valuations[:, good_mask] * supplies
    buyer_mask = scaled_vals.sum(axis=1) > 0.0
    vals = scaled_vals[buyer_mask]
    budgets = instance.budgets[buyer_mask]
    rows = np.flatnonzero(buyer_mask)
    cols = np.flatnonzero(good_mask)

    def assemble(unit_prices: np.ndarray, unit_alloc: np.ndarray) -> MarketOutcome:
        full_prices = prices.copy()
        full_alloc = allocation.copy()
        full_alloc[np.ix_(rows, cols)] = unit_alloc * supplies
        full_prices[cols] = unit_prices / supplies
        utilities = np.sum(instance.valuations * full_alloc, axis=1)
        return MarketOutcome(full_prices, full_alloc, utilities)

    def accepted(outcome: MarketOutcome) -> bool:
        res = equilibrium_residuals(instance, outcome)
        return max(res["clearance"], res["budget"], res["bang_per_buck"]) <= tolerance

    def polish_from(
        unit_prices: np.ndarray, tie_ladder: tuple[float, ...]
    ) -> MarketOutcome | None:
        tried = set()
        for tie_ratio in tie_ladder:
            support = _support_from_prices(vals, unit_prices, tie_ratio)
            if support is None:
                return None
            key = support.tobytes()
            if key in tried:
                continue
            tried.add(key)
            for variant in _forest_variants(support):
                candidate = _solve_support(vals, budgets, variant)
                if candidate is not None:
                    outcome = assemble(*candidate)
                    if accepted(outcome):
                        return outcome
        return None

    bids = vals / vals.sum(axis=1, keepdims=True) * budgets[:, None]
    iterations = 0
    checkpoint = 32
    change = math.inf
    while iterations < max_iterations:
        chunk = min(checkpoint, max_iterations) - iterations
        bids, change = _pr_chunk(vals, budgets, bids, chunk)
        iterations += chunk
        outcome = polish_from(bids.sum(axis=0), (1e-2, 1e-4))
        if outcome is not None:
            return outcome
        # Bid dynamics crawl on near-tied values: pin the prices down with
        # the smoothed-dual refinement, then re-extract the support.
        refined = _newton_prices(vals, budgets, bids.sum(axis=0))
        outcome = polish_from(refined, (1e-6, 1e-4, 1e-2))
        if outcome is not None:
            return outcome
        if change <= tolerance or change == 0.0:
            good_prices = bids.sum(axis=0)
            with np.errstate(invalid="ignore"):
                shares = np.where(good_prices > 0.0, bids / good_prices, 0.0)
            outcome = assemble(good_prices, shares)
            if accepted(outcome):
                return outcome
        checkpoint *= 2
    raise SolverFailure("equilibrium bid dynamics did not converge", change)


def equilibrium_residuals(
    instance: MarketInstance, outcome: MarketOutcome, share_tolerance: float = 1e-7
) -> dict[str, float]:
    """Standalone equilibrium checks: worst clearance, budget and
    bang-per-buck residuals of an outcome for this instance.

    Bang-per-buck is checked on every allocation entry above
    `share_tolerance`: a purchased good's value-per-money must be within
    the residual of the buyer's best available ratio.
    """
    p = outcome.prices
    x = outcome.allocation
    pos = p > 0.0

    clearance = 0.0
    if np.any(pos):
        clearance = float(
            np.max(np.abs(x[:, pos].sum(axis=0) - instance.supplies[pos]))
        )

    spend = x @ p
    # Buyers valuing nothing on sale keep their budget by design.
    active = np.zeros(instance.budgets.size, dtype=bool)
    sellable = instance.supplies > 0.0
    if np.any(sellable):
        active = instance.valuations[:, sellable].sum(axis=1) > 0.0
    budget = float(np.max(np.abs(np.where(active, spend - instance.budgets, 0.0))))

    bang = 0.0
    if np.any(pos):
        with np.errstate(divide="ignore"):
            ratios = np.where(pos, instance.valuations / np.where(pos, p, 1.0), 0.0)
        best = ratios.max(axis=1)
        bought = x > share_tolerance
        defect = np.where(bought & pos, best[:, None] - ratios, 0.0)
        bang = float(defect.max()) if defect.size else 0.0

    consistency = float(
        np.max(np.abs(np.sum(instance.valuations * x, axis=1) - outcome.buyer_utilities))
    )
    return {
        "clearance": clearance,
        "budget": budget,
        "bang_per_buck": bang,
        "utility_consistency": consistency,
    }


def lp_solve(
    objective: np.ndarray, constraints: np.ndarray, bounds: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Maximise objective . x subject to constraints @ x <= bounds, x >= 0.

    Dense two-phase simplex with Bland's smallest-index pivoting.
    Returns the primal solution and the constraint duals.  Raises
    InfeasibleProgram / UnboundedProgram on those outcomes.
    """
    c = np.asarray(objective, dtype=float)
    a = np.atleast_2d(np.asarray(constraints, dtype=float))
    b = np.asarray(bounds, dtype=float)
    m, n = a.shape
    if c.size != n or b.size != m:
        raise ValueError("inconsistent LP dimensions")

    eps = 1e-9
    # Tableau columns: n structural, m slack, (phase-1 artificials), rhs.
    need_artificial = b < -eps
    n_art = int(np.count_nonzero(need_artificial))
    width = n + m + n_art + 1
    t = np.zeros((m, width))
    t[:, :n] = a
    t[:, n:n + m] = np.eye(m)
    t[:, -1] = b

    art_col = {}
    next_art = n + m
    for i in np.flatnonzero(need_artificial):
        t[i] *= -1.0  # make rhs non-negative; slack coefficient flips to -1
        t[i, next_art] = 1.0
        art_col[i] = next_art
        next_art += 1

    basis = np.array(
        [art_col.get(i, n + i) for i in range(m)], dtype=int
    )

    def run_simplex(costs: np.ndarray) -> None:
        while True:
            # Reduced costs under the current basis; artificials never re-enter.
            basic_costs = costs[basis]
            reduced = costs[: n + m].copy()
            if np.any(basic_costs):
                reduced -= basic_costs @ t[:, : n + m]
            entering = -1
            for j in range(n + m):
                if reduced[j] > eps and j not in basis:
                    entering = j
                    break
            if entering < 0:
                return
            col = t[:, entering]
            rows = np.flatnonzero(col > eps)
            if rows.size == 0:
                raise UnboundedProgram("objective unbounded above")
            ratios = t[rows, -1] / col[rows]
            best = ratios.min()
            # Bland tie-break: smallest basic-variable index among minimisers.
            candidates = rows[ratios <= best + eps]
            leave_row = candidates[np.argmin(basis[candidates])]
            pivot = t[leave_row, entering]
            t[leave_row] /= pivot
            for i in range(m):
                if i != leave_row and abs(t[i, entering]) > 0.0:
                    t[i] -= t[i, entering] * t[leave_row]
            basis[leave_row] = entering

    if n_art:
        phase1 = np.zeros(width)
        phase1[n + m:width - 1] = -1.0
        run_simplex(phase1)
        art_level = sum(
            t[i, -1] for i in range(m) if basis[i] >= n + m
        )
        if art_level > 1e-7:
            raise InfeasibleProgram("no feasible point")
        # Pivot any degenerate artificials out of the basis.
        for i in range(m):
            if basis[i] >= n + m:
                pivots = np.flatnonzero(np.abs(t[i, : n + m]) > eps)
                if pivots.size:
                    j = int(pivots[0])
                    t[i] /= t[i, j]
                    for k in range(m):
                        if k != i and abs(t[k, j]) > 0.0:
                            t[k] -= t[k, j] * t[i]
                    basis[i] = j

    full_costs = np.zeros(width)
    full_costs[:n] = c
    run_simplex(full_costs)

    x = np.zeros(n)
    for i, var in enumerate(basis):
        if var < n:
            x[var] = t[i, -1]

    # Constraint duals: the slack columns' z-row values (the sign a flipped
    # row puts on its slack cancels against the flipped dual).
    basic_costs = full_costs[basis]
    duals = basic_costs @ t[:, n:n + m]
    return x, duals


def allocate_at_prices(instance: MarketInstance, prices: np.ndarray) -> MarketOutcome:
    """Welfare-maximising allocation at externally fixed prices.

    Maximises total buyer utility subject to each buyer's budget at these
    prices and to the good supplies.  Free goods go wherever they raise
    welfare most; ties resolve by the simplex pivot order.
    """
    prices = np.asarray(prices, dtype=float)
    n_buyers, n_goods = instance.valuations.shape
    if prices.shape != (n_goods,):
        raise ValueError("prices must have one entry per good")
    if np.any(prices < 0):
        raise ValueError("prices must be non-negative")

    n_vars = n_buyers * n_goods
    c = instance.valuations.reshape(n_vars)
    a = np.zeros((n_buyers + n_goods, n_vars))
    for b in range(n_buyers):
        a[b, b * n_goods:(b + 1) * n_goods] = prices
    for g in range(n_goods):
        a[n_buyers + g, g::n_goods] = 1.0
    bounds = np.concatenate([instance.budgets, instance.supplies])

    x, _ = lp_solve(c, a, bounds)
    allocation = x.reshape(n_buyers, n_goods)
    utilities = np.sum(instance.valuations * allocation, axis=1)
    return MarketOutcome(prices.copy(), allocation, utilities)
