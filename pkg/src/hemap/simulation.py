"""Trajectory sampling, empirical time averages and the time-average variance study.

Randomness: every entry point takes a seed (int, ``SeedSequence`` or
``Generator``).  Multi-trial routines split an integer seed into one child
``SeedSequence`` per trial with ``SeedSequence(seed).spawn(m)``, so trial ``i``
sees the same stream regardless of how many trials run or in which order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import check_stochastic
from .metrics import time_average_trace

SeedLike = int | np.random.SeedSequence | np.random.Generator | None


@dataclass(frozen=True)
class Trajectory:
    regions: np.ndarray
    seed: object = None

    def __post_init__(self):
        regions = np.asarray(self.regions, dtype=int)
        if regions.ndim != 1 or regions.size < 1:
            raise ValueError("a trajectory needs at least one region")
        object.__setattr__(self, "regions", regions)

    def __len__(self) -> int:
        return self.regions.size


@dataclass(frozen=True)
class VarianceStudy:
    per_step_mle: np.ndarray
    per_step_clt: np.ndarray
    trials: int
    expected_dev: np.ndarray

    @property
    def steps(self) -> np.ndarray:
        return np.arange(1, self.per_step_mle.size + 1)

    def loglog_slope(self, k_min: int = 100, k_max: int | None = None) -> float:
        """Least-squares slope of log(mle) against log(k) over ``[k_min, k_max]``."""
        k = self.steps
        k_max = k_max or int(k[-1])
        sel = (k >= k_min) & (k <= k_max) & (self.per_step_mle > 0)
        return float(np.polyfit(np.log(k[sel]), np.log(self.per_step_mle[sel]), 1)[0])


def spawn_seeds(seed: SeedLike, count: int) -> list[np.random.SeedSequence]:
    """Independent child seed sequences, one per trial."""
    if isinstance(seed, np.random.Generator):
        seq = seed.bit_generator.seed_seq
    elif isinstance(seed, np.random.SeedSequence):
        seq = seed
    else:
        seq = np.random.SeedSequence(seed)
    return seq.spawn(count)


def _cumulative_columns(P: np.ndarray) -> np.ndarray:
    C = np.cumsum(P, axis=0)
    C[-1, :] = 1.0  # guard against round-off leaving the last bin short
    return C


def _step_many(C: np.ndarray, current: np.ndarray, u: np.ndarray) -> np.ndarray:
    # index of the first cumulative entry exceeding u, column by column
    return (C[:, current] <= u[None, :]).sum(axis=0)


def sample_trajectory(P: np.ndarray, r0: int, K: int, seed: SeedLike = None) -> Trajectory:
    """``K`` regions starting at ``r0``; region ``k+1`` is drawn from column ``r[k]`` of ``P``."""
    P = check_stochastic(P)
    if K < 1:
        raise ValueError("K must be at least 1")
    if not 0 <= r0 < P.shape[0]:
        raise ValueError(f"start region {r0} out of range")
    rng = np.random.default_rng(seed)
    C = _cumulative_columns(P)
    u = rng.random(K - 1)
    out = np.empty(K, dtype=int)
    out[0] = r0
    for k in range(K - 1):
        out[k + 1] = int(np.searchsorted(C[:, out[k]], u[k], side="right"))
    return Trajectory(out, seed)


def sample_trajectories(P: np.ndarray, r0: int, K: int, m: int, seed: SeedLike = None) -> np.ndarray:
    """``m`` independent trajectories as an (m, K) array, trial ``i`` on the ``i``-th spawned stream."""
    P = check_stochastic(P)
    C = _cumulative_columns(P)
    U = np.stack([np.random.default_rng(s).random(K - 1) for s in spawn_seeds(seed, m)]) \
        if K > 1 else np.zeros((m, 0))
    out = np.empty((m, K), dtype=int)
    out[:, 0] = r0
    for k in range(K - 1):
        out[:, k + 1] = _step_many(C, out[:, k], U[:, k])
    return out


def empirical_time_average(t: Trajectory | np.ndarray, n: int | None = None) -> np.ndarray:
    """Visit frequencies: entry ``i`` is (visits to i) / K."""
    regions = t.regions if isinstance(t, Trajectory) else np.asarray(t, dtype=int)
    if regions.size == 0:
        raise ValueError("empty trajectory")
    n = n if n is not None else int(regions.max()) + 1
    return np.bincount(regions, minlength=n) / regions.size


def running_time_averages(trajs: np.ndarray, n: int) -> np.ndarray:
    """Running visit frequencies for each trajectory: shape (m, K, n)."""
    m, K = trajs.shape
    onehot = np.zeros((m, K, n))
    onehot[np.arange(m)[:, None], np.arange(K)[None, :], trajs] = 1.0
    return np.cumsum(onehot, axis=1) / np.arange(1, K + 1)[None, :, None]


def clt_variance(rho_bar: np.ndarray, K: int) -> np.ndarray:
    """``(1/k) Σ ρ̄_i (1 - ρ̄_i)`` for k = 1..K."""
    rho_bar = np.asarray(rho_bar, dtype=float)
    return float(np.sum(rho_bar * (1 - rho_bar))) / np.arange(1, K + 1)


def variance_study(P: np.ndarray, rho_bar: np.ndarray, r0: int, K: int, m: int,
                   seed: SeedLike = None) -> VarianceStudy:
    """Trace of the time-average covariance, estimated from ``m`` trajectories.

    The mean ``E[ρ̂_k]`` is exact: ``(1/k) Σ_{j<k} P^j e_{r0}``.  The estimate at
    step k is ``(1/m) Σ ‖ρ̂_k - E[ρ̂_k]‖²`` over trials.
    """
    if m < 2:
        raise ValueError("variance study needs at least two trials")
    P = check_stochastic(P)
    n = P.shape[0]
    rho0 = np.zeros(n)
    rho0[r0] = 1.0
    _, expected = time_average_trace(P, rho0, K)
    trajs = sample_trajectories(P, r0, K, m, seed)
    sq = np.zeros(K)
    # accumulate over trials in chunks to bound memory at (chunk, K, n)
    for start in range(0, m, 100):
        avgs = running_time_averages(trajs[start:start + 100], n)
        sq += np.sum((avgs - expected[None]) ** 2, axis=(0, 2))
    rho_bar = np.asarray(rho_bar, dtype=float)
    return VarianceStudy(
        per_step_mle=sq / m,
        per_step_clt=clt_variance(rho_bar, K),
        trials=m,
        expected_dev=np.linalg.norm(expected - rho_bar[None], axis=1),
    )


def trace_rows(P: np.ndarray, rho0: np.ndarray, K: int) -> list[dict]:
    """Per-step expected distribution ``P^k ρ0`` and running average, for re-plotting simplex traces."""
    dists, avgs = time_average_trace(check_stochastic(P), rho0, K)
    rows = []
    for k in range(K):
        row = {"k": k}
        row.update({f"dist_{i}": float(v) for i, v in enumerate(dists[k])})
        row.update({f"avg_{i}": float(v) for i, v in enumerate(avgs[k])})
        rows.append(row)
    return rows
