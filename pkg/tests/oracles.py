"""Independent brute-force references used by the test suite only."""

import numpy as np


def grid_dispatch(b1, b2, qmax, demand, step=1e-3):
    """Exhaustive minimum of sum_i b1_i x_i + b2_i x_i^2 on a quantity grid.

    Every producer's allocation is restricted to multiples of ``step`` and
    the combinations summing to ``demand`` (itself grid-aligned) are searched
    exhaustively via stage-wise tabulation. Returns (x array, objective).
    """
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    qmax = np.asarray(qmax, dtype=float)
    levels = int(round(demand / step))
    assert abs(levels * step - demand) < step * 1e-6, "demand must sit on the grid"
    size = levels + 1
    best = np.full(size, np.inf)
    best[0] = 0.0
    choices = []
    for i in range(len(b1)):
        k_max = min(int(np.floor(qmax[i] / step + 1e-9)), levels)
        xs = np.arange(k_max + 1) * step
        costs = b1[i] * xs + b2[i] * xs * xs
        new = np.full(size, np.inf)
        arg = np.zeros(size, dtype=int)
        for k in range(k_max + 1):
            cand = best[: size - k] + costs[k]
            better = cand < new[k:]
            new[k:][better] = cand[better]
            arg[k:][better] = k
        best = new
        choices.append(arg)
    assert np.isfinite(best[levels]), "demand not reachable on the grid"
    x = np.zeros(len(b1))
    level = levels
    for i in range(len(b1) - 1, -1, -1):
        k = choices[i][level]
        x[i] = k * step
        level -= k
    return x, float(best[levels])


def dispatch_objective(b1, b2, x):
    x = np.asarray(x, dtype=float)
    return float(np.sum(np.asarray(b1) * x + np.asarray(b2) * x * x))


def random_dispatch_instance(rng, n=None, step=1e-3):
    """Feasible instance with cost coefficients in the producer-table range.

    Capacities and demand are snapped to the oracle's grid so the exhaustive
    grid search can represent the boundary allocations exactly.
    """
    if n is None:
        n = int(rng.integers(2, 7))
    b1 = rng.uniform(0.5, 0.9, size=n) * rng.uniform(1.0, 2.0, size=n)
    b2 = rng.uniform(0.25, 1.0, size=n) * rng.uniform(1.0, 2.0, size=n)
    qmax = np.round(rng.uniform(0.3, 0.7, size=n) / step) * step
    raw = rng.uniform(0.05, 0.95) * qmax.sum()
    demand = round(raw / step) * step
    return b1, b2, qmax, demand


def value_iteration(rewards, transitions, gamma, sweeps=5000):
    """Exact greedy policy of a small deterministic MDP.

    rewards[(s, a)] and transitions[(s, a)] are dicts over state-action pairs.
    """
    states = sorted({s for s, _ in rewards})
    actions = sorted({a for _, a in rewards})
    values = {s: 0.0 for s in states}
    for _ in range(sweeps):
        values = {s: max(rewards[(s, a)] + gamma * values[transitions[(s, a)]]
                         for a in actions) for s in states}
    return [int(np.argmax([rewards[(s, a)] + gamma * values[transitions[(s, a)]]
                           for a in actions])) for s in states]
