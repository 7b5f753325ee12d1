"""Independent oracles used by the tests.

The spectral oracles cover 3-node programs with a uniform target.

With a uniform target the chain is doubly stochastic.  Writing the flow
i -> j as f_ij = P[j, i], every such chain on 3 nodes is f = S + c·σ with S
symmetric (S_ij = S_ji ≥ 0, row sums ≤ 1) and σ the antisymmetric unit
circulation 0 -> 1 -> 2 -> 0.  The REMC objective only sees S; c only has to
make every flow on a missing edge vanish and every other flow non-negative.
"""

import itertools

import numpy as np

PAIRS = ((0, 1), (1, 2), (0, 2))
SIGMA = {(0, 1): 1, (1, 2): 1, (2, 0): 1, (1, 0): -1, (2, 1): -1, (0, 2): -1}
J3 = np.full((3, 3), 1.0 / 3.0)


def grid_chains(edges, step=0.01, symmetric=False):
    """Yield (S grid as (m, 3, 3) symmetric flow matrices, feasible mask)."""
    axes = []
    for i, j in PAIRS:
        if (i, j) in edges or (j, i) in edges:
            axes.append(np.round(np.arange(0, 1 + 1e-9, step), 10))
        else:
            axes.append(np.zeros(1))
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    s01, s12, s02 = G.T
    ok = (s01 + s02 <= 1 + 1e-12) & (s01 + s12 <= 1 + 1e-12) & (s12 + s02 <= 1 + 1e-12)
    lo = np.full(len(G), -np.inf)
    hi = np.full(len(G), np.inf)
    for (i, j), s in zip(PAIRS, (s01, s12, s02)):
        sg = SIGMA[(i, j)]
        fwd, back = (i, j) in edges, (j, i) in edges
        # f_ij = s + sg*c, f_ji = s - sg*c
        for present, sign in ((fwd, sg), (back, -sg)):
            if present:  # s + sign*c >= 0
                if sign > 0:
                    lo = np.maximum(lo, -s)
                else:
                    hi = np.minimum(hi, s)
            else:  # s + sign*c == 0
                c0 = -s * sign
                lo = np.maximum(lo, c0)
                hi = np.minimum(hi, c0)
    if symmetric:
        lo = np.maximum(lo, 0.0)
        hi = np.minimum(hi, 0.0)
    ok &= lo <= hi + 1e-12
    S = np.zeros((len(G), 3, 3))
    for (i, j), s in zip(PAIRS, (s01, s12, s02)):
        S[:, i, j] = S[:, j, i] = s
    S[:, np.arange(3), np.arange(3)] = 1 - S.sum(axis=2)
    return S[ok]


def grid_optimum(kind, edges, step=0.01):
    """Best objective over the grid for kind in {remc, reversible, symmetric_uniform, fmmc}."""
    edges = set(edges)
    if kind == "remc":
        S = grid_chains(edges, step)
        vals = np.linalg.eigvalsh(S - 2 * J3)[:, -1]
    elif kind in ("reversible", "symmetric_uniform"):
        S = grid_chains(edges, step, symmetric=True)
        vals = np.linalg.eigvalsh(S - 2 * J3)[:, -1]
    elif kind == "fmmc":
        S = grid_chains(edges, step, symmetric=True)
        vals = np.abs(np.linalg.eigvalsh(S - J3)).max(axis=1)
    else:
        raise ValueError(kind)
    return float(vals.min())


def strongly_connected_3node_topologies():
    from hemap.graph import check_strong_connectivity

    pairs = [(i, j) for i in range(3) for j in range(3) if i != j]
    out = []
    for bits in itertools.product([0, 1], repeat=6):
        edges = [p for p, b in zip(pairs, bits) if b]
        A = np.zeros((3, 3), dtype=bool)
        for i, j in edges:
            A[i, j] = True
        if check_strong_connectivity(A):
            out.append(edges)
    return out


def series_normal_cdf(x: float, digits: int = 40) -> float:
    """Φ(x) from the everywhere-convergent series ½ + φ(x) Σ x^(2n+1)/(2n+1)!!, in high precision."""
    import mpmath

    with mpmath.workdps(digits):
        x = mpmath.mpf(x)
        term = x
        total = x
        n = 0
        while abs(term) > mpmath.mpf(10) ** (-digits):
            n += 1
            term = term * x * x / (2 * n + 1)
            total += term
        phi = mpmath.exp(-x * x / 2) / mpmath.sqrt(2 * mpmath.pi)
        return float(mpmath.mpf(0.5) + phi * total)


def monte_carlo_half_spaces(p_ref, normal, mean, cov, d_buffer, samples, rng):
    """Gaussian mass behind the plane through p_ref and beyond the buffer plane."""
    x = rng.multivariate_normal(mean, cov, size=samples)
    s = (x - p_ref) @ normal
    return float(np.mean(s <= 0)), float(np.mean(s >= d_buffer))
