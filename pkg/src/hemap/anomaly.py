"""Recursive Bayesian anomaly detection against a reference point cloud.

Every observed point is matched to its Mahalanobis-nearest reference point
and scored by two signed distances to that point's tangent plane:

    c0 = nᵀ(p_ref - p) / σ_n             σ_n = √(nᵀ Σ n)
    c1 = c0 + d_buffer / σ_n

Reference normals point away from the structure into free space, so the
structure occupies Ω0 = {x : nᵀ(x - p_ref) ≤ 0} and anomalies occupy
Ω1 = {x : nᵀ(x - p_ref) ≥ d_buffer}.  With x ~ N(p, Σ) the exact masses are
l0 = Φ(c0) and l1 = Φ(-c1).  (A literal ``c0 - d_buffer/σ_n`` would measure
the slab behind the wall instead of beyond the buffer.)

Per reference point the scores of all observations matched into its k-NN
neighbourhood are pooled as ``z = Σc / √n`` and the belief in H0 ("this part
of the structure is as modeled") is updated with L0 = Φ(z0), L1 = Φ(-z1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial import cKDTree
from scipy.special import log_ndtr, ndtr

D_BUFFER = 0.035
PRIOR_H0 = 0.8
K_NN = 5


def normal_cdf(x):
    """Standard normal cdf Φ (absolute error far below 1e-7)."""
    return ndtr(x)


def _check_spd(C: np.ndarray, what: str) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"{what} must be square")
    if not np.allclose(C, C.T, atol=1e-12, rtol=1e-9):
        raise ValueError(f"{what} must be symmetric")
    if np.linalg.eigvalsh(C)[0] <= 0:
        raise ValueError(f"{what} must be positive definite")
    return C


def _wrap(theta: float) -> float:
    """Wrap to (-π, π]."""
    t = math.remainder(theta, 2 * math.pi)
    return math.pi if t == -math.pi else t


@dataclass(frozen=True)
class PlanarPose:
    mean: np.ndarray
    covariance: np.ndarray = field(default_factory=lambda: np.eye(3) * 1e-12)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(3).copy()
        mean[2] = _wrap(mean[2])
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", _check_spd(self.covariance, "pose covariance"))

    @property
    def position(self) -> np.ndarray:
        return self.mean[:2]

    @property
    def heading(self) -> float:
        return float(self.mean[2])


@dataclass(frozen=True)
class ObservedPoint:
    position: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(-1))
        object.__setattr__(self, "covariance", _check_spd(self.covariance, "point covariance"))


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def propagate_point(pose: PlanarPose, local_point, local_cov) -> ObservedPoint:
    """First-order propagation of pose and sensor noise into the world frame."""
    local = np.asarray(local_point, dtype=float).reshape(2)
    local_cov = _check_spd(local_cov, "local covariance")
    th = pose.heading
    R = rotation(th)
    dR = np.array([[-math.sin(th), -math.cos(th)], [math.cos(th), -math.sin(th)]])
    J = np.hstack([np.eye(2), (dR @ local)[:, None]])
    cov = J @ pose.covariance @ J.T + R @ local_cov @ R.T
    cov = 0.5 * (cov + cov.T)
    return ObservedPoint(R @ local + pose.position, cov)


# -- reference model ------------------------------------------------------------

class ReferenceCloud:
    """Reference points with unit normals, region labels and k-NN lists.

    ``knn[i]`` lists the ``k_nn`` nearest reference points of ``i`` (itself
    first), which is the neighbourhood whose matched observations update ``i``.
    """

    def __init__(self, points, normals, region_of, k_nn: int = K_NN):
        self.points = np.asarray(points, dtype=float)
        self.normals = np.asarray(normals, dtype=float)
        self.region_of = np.asarray(region_of, dtype=int)
        if self.points.ndim != 2 or self.points.shape[0] == 0:
            raise ValueError("reference cloud needs a nonempty (N, d) point array")
        if self.normals.shape != self.points.shape or self.region_of.shape != (len(self.points),):
            raise ValueError("points, normals and regions must have matching lengths")
        lengths = np.linalg.norm(self.normals, axis=1)
        if np.max(np.abs(lengths - 1.0)) > 1e-9:
            raise ValueError("reference normals must be unit length")
        if np.any(self.region_of < 0):
            raise ValueError("region indices must be non-negative")
        if k_nn < 1:
            raise ValueError("k_nn must be at least 1")
        self.tree = cKDTree(self.points)
        self.k_nn = min(k_nn, len(self.points))
        _, idx = self.tree.query(self.points, k=self.k_nn)
        self.knn = np.asarray(idx, dtype=int).reshape(len(self.points), self.k_nn)

    def __len__(self) -> int:
        return len(self.points)

    def to_document(self) -> dict:
        return {"points": self.points.tolist(), "normals": self.normals.tolist(),
                "regions": self.region_of.tolist()}

    @classmethod
    def from_document(cls, doc: dict, k_nn: int = K_NN) -> "ReferenceCloud":
        return cls(doc["points"], doc["normals"], doc["regions"], k_nn)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_document()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, k_nn: int = K_NN) -> "ReferenceCloud":
        return cls.from_document(json.loads(Path(path).read_text(encoding="utf-8")), k_nn)


def _mahalanobis_sq(diff: np.ndarray, cov: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", diff, np.linalg.solve(cov, diff.T).T)


def nearest_reference(cloud: ReferenceCloud, obs: ObservedPoint) -> int:
    """Index of the Mahalanobis-nearest reference point (lowest index on ties).

    Exact: with covariance eigenvalues in [a, b] the Mahalanobis minimizer lies
    within Euclidean radius √(b/a) times the Euclidean-nearest distance, so only
    that ball is searched.
    """
    evals = np.linalg.eigvalsh(obs.covariance)
    d0, _ = cloud.tree.query(obs.position)
    radius = d0 * math.sqrt(evals[-1] / evals[0]) * (1 + 1e-9) + 1e-12
    cand = np.sort(np.asarray(cloud.tree.query_ball_point(obs.position, radius), dtype=int))
    q = _mahalanobis_sq(cloud.points[cand] - obs.position, obs.covariance)
    return int(cand[np.argmin(q)])


def point_likelihoods(cloud: ReferenceCloud, obs: ObservedPoint, d_buffer: float = D_BUFFER,
                      ref: int | None = None) -> tuple[float, float, float, float]:
    """(c0, c1, l0, l1) of one observation against its nearest reference plane."""
    if d_buffer < 0:
        raise ValueError("d_buffer must be non-negative")
    ref = nearest_reference(cloud, obs) if ref is None else ref
    n = cloud.normals[ref]
    var = float(n @ obs.covariance @ n)
    if var <= 0:
        raise ValueError("degenerate projected covariance nᵀΣn <= 0")
    sigma = math.sqrt(var)
    c0 = float(n @ (cloud.points[ref] - obs.position)) / sigma
    c1 = c0 + d_buffer / sigma
    return c0, c1, float(normal_cdf(c0)), float(normal_cdf(-c1))


# -- beliefs -------------------------------------------------------------------

def binary_entropy(p) -> np.ndarray:
    """``-p ln p - (1-p) ln(1-p)`` with 0 ln 0 = 0."""
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        hp = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
        hq = np.where(q > 0, -q * np.log(np.where(q > 0, q, 1.0)), 0.0)
    return hp + hq


@dataclass(frozen=True)
class AnomalyBelief:
    """Per-reference-point probability of H0; ``flagged`` lists points whose last update was undefined."""

    p_h0: np.ndarray
    flagged: tuple[int, ...] = ()

    def __post_init__(self):
        p = np.asarray(self.p_h0, dtype=float)
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise ValueError("beliefs must lie in [0, 1]")
        object.__setattr__(self, "p_h0", p)

    @classmethod
    def prior(cls, n: int, p_h0: float = PRIOR_H0) -> "AnomalyBelief":
        return cls(np.full(n, float(p_h0)))

    @property
    def p_h1(self) -> np.ndarray:
        return 1.0 - self.p_h0

    @property
    def entropy(self) -> np.ndarray:
        return binary_entropy(self.p_h0)


@dataclass(frozen=True)
class MatchedScores:
    """Observation scores, each attached to its nearest reference point."""

    ref: np.ndarray
    c0: np.ndarray
    c1: np.ndarray


def score_observations(cloud: ReferenceCloud, observations, d_buffer: float = D_BUFFER) -> MatchedScores:
    refs, c0s, c1s = [], [], []
    for obs in observations:
        j = nearest_reference(cloud, obs)
        c0, c1, _, _ = point_likelihoods(cloud, obs, d_buffer, ref=j)
        refs.append(j)
        c0s.append(c0)
        c1s.append(c1)
    return MatchedScores(np.asarray(refs, dtype=int), np.asarray(c0s), np.asarray(c1s))


def batch_update(cloud: ReferenceCloud, beliefs: AnomalyBelief, observations,
                 d_buffer: float = D_BUFFER, k_nn: int | None = None) -> AnomalyBelief:
    """One recursive Bayes step from a batch of observations.

    ``observations`` is an iterable of :class:`ObservedPoint` or precomputed
    :class:`MatchedScores`.  ``k_nn`` may not exceed the cloud's neighbour list
    length (default: use the full list).
    """
    k = cloud.k_nn if k_nn is None else int(k_nn)
    if k < 1:
        raise ValueError("k_nn must be at least 1")
    if k > cloud.k_nn:
        raise ValueError(f"cloud was built with k_nn={cloud.k_nn}; cannot use {k}")
    scores = observations if isinstance(observations, MatchedScores) \
        else score_observations(cloud, observations, d_buffer)
    N = len(cloud)
    S0 = np.bincount(scores.ref, weights=scores.c0, minlength=N)
    S1 = np.bincount(scores.ref, weights=scores.c1, minlength=N)
    cnt = np.bincount(scores.ref, minlength=N).astype(float)
    nb = cloud.knn[:, :k]
    n_i = cnt[nb].sum(axis=1)
    seen = n_i > 0
    p0 = beliefs.p_h0.copy()
    flagged = []
    if np.any(seen):
        root = np.sqrt(n_i[seen])
        z0 = S0[nb].sum(axis=1)[seen] / root
        z1 = S1[nb].sum(axis=1)[seen] / root
        # Bayes in log space: the likelihoods underflow long before the ratio does
        with np.errstate(divide="ignore"):
            a = log_ndtr(z0) + np.log(p0[seen])
            b = log_ndtr(-z1) + np.log(1.0 - p0[seen])
        top = np.maximum(a, b)
        ok = np.isfinite(top)
        post = np.empty_like(a)
        post[ok] = np.exp(a[ok] - top[ok]) / (np.exp(a[ok] - top[ok]) + np.exp(b[ok] - top[ok]))
        idx = np.flatnonzero(seen)
        p0[idx[ok]] = post[ok]
        flagged = idx[~ok].tolist()
    return AnomalyBelief(p0, tuple(flagged))


def information_measures(beliefs: AnomalyBelief, cloud: ReferenceCloud,
                         n_regions: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(μ_p per reference point, μ_r per region as the sum of member entropies)."""
    mu_p = beliefs.entropy
    n_regions = n_regions if n_regions is not None else int(cloud.region_of.max()) + 1
    mu_r = np.bincount(cloud.region_of, weights=mu_p, minlength=n_regions)
    return mu_p, mu_r


def extract_candidates(beliefs: AnomalyBelief, cloud: ReferenceCloud, threshold: float = 0.5,
                       link_distance: float = 0.5) -> list[np.ndarray]:
    """Centroids of single-linkage clusters of points with P(H1) ≥ threshold.

    Clusters are cut where the linkage distance exceeds ``link_distance`` and are
    returned in order of their lowest member index.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    idx = np.flatnonzero(beliefs.p_h1 >= threshold)
    if idx.size == 0:
        return []
    X = cloud.points[idx]
    if idx.size == 1:
        return [X[0].copy()]
    labels = fcluster(linkage(X, method="single"), t=link_distance, criterion="distance")
    order = []
    for lab in labels:
        if lab not in order:
            order.append(lab)
    return [X[labels == lab].mean(axis=0) for lab in order]


def belief_rows(beliefs: AnomalyBelief, cloud: ReferenceCloud) -> list[dict]:
    """Snapshot rows (index, x, y, p_h0, entropy) for map re-plotting."""
    H = beliefs.entropy
    return [{"index": i, "x": float(cloud.points[i, 0]), "y": float(cloud.points[i, 1]),
             "p_h0": float(beliefs.p_h0[i]), "entropy": float(H[i])} for i in range(len(cloud))]
