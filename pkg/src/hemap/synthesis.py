"""Convex synthesis of rapidly ergodic Markov chains.

All four programs minimize the largest eigenvalue of a symmetric matrix that
is affine in the transition matrix, over the transition polytope of a region
graph.  They are solved in the similarity coordinates ``Y = Π^{-1/2} P Π^{1/2}``
(``P̃``), where with ``s = √ρ`` the constraints become

    Y ≥ 0 on the support,  Y s = s,  Yᵀ s = s          (remc)
    Y = Yᵀ ≥ 0 on the two-way support,  Y s = s          (reversible, symmetric, fmmc)

Detailed balance is exactly ``Y = Yᵀ``, so reversible programs carry it by
construction.  Objectives (``S = s sᵀ``):

    remc        λmax(½(Y + Yᵀ) - 2S)
    reversible  λmax(Y - 2S)
    symmetric   λmax(Y - (2/n) 11ᵀ)   (uniform target)
    fmmc        ‖Y - S‖₂ = λmax(diag(Y - S, S - Y))

The default method minimizes the log-sum-exp smoothing ``μ log tr exp(M/μ)``
of λmax with accelerated projected gradient steps, decreasing μ until the
smoothing gap ``μ log m`` is below tolerance.  ``method="subgradient"`` runs
plain projected subgradient descent with ``c/√t`` steps.  Both start from the
Metropolis-Hastings chain and keep the best iterate, so the reported objective
never increases.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .graph import RegionGraph, as_distribution, metropolis_hastings, uniform

log = logging.getLogger(__name__)

KINDS = ("remc", "symmetric_uniform", "reversible", "fmmc")


class SynthesisError(RuntimeError):
    """The program is malformed or its constraint set cannot represent the target."""


@dataclass(frozen=True)
class SpectralProgram:
    kind: str
    graph: RegionGraph
    target: np.ndarray
    tolerance: float = 1e-6
    max_iterations: int = 50_000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SynthesisError(f"unknown program kind {self.kind!r}")
        if self.tolerance <= 0:
            raise SynthesisError("tolerance must be positive")
        target = as_distribution(self.target)
        if target.size != self.graph.n:
            raise SynthesisError("target length does not match graph")
        if np.any(target <= 0):
            raise SynthesisError(
                "target has zero entries; the similarity transform needs a strictly "
                "positive target (smooth it first)")
        if self.kind == "symmetric_uniform" and np.max(np.abs(target - 1.0 / target.size)) > 1e-12:
            raise SynthesisError("symmetric_uniform programs need the uniform target")
        object.__setattr__(self, "target", target)


@dataclass
class SolverResult:
    chain: np.ndarray
    objective: float
    iterations: int
    certified_gap: float | None
    converged: bool
    lower_bound: float | None = None
    history: np.ndarray | None = None


# -- feasible set in similarity coordinates -------------------------------------

class _Polytope:
    """Free entries of Y, the equality constraints ``G y = b`` and the metric weights."""

    def __init__(self, kind: str, graph: RegionGraph, s: np.ndarray):
        n = graph.n
        self.n = n
        self.symmetric = kind != "remc"
        support = graph.support()  # support[j, i]: i -> j
        if self.symmetric:
            two_way = support & support.T
            rows, cols = np.nonzero(np.triu(two_way))
            self.weights = np.where(rows == cols, 1.0, 2.0)
            G = np.zeros((n, rows.size))
            for e, (a, b) in enumerate(zip(rows, cols)):
                G[a, e] += s[b]
                if a != b:
                    G[b, e] += s[a]
            self.b = s.copy()
        else:
            rows, cols = np.nonzero(support)
            self.weights = np.ones(rows.size)
            G = np.zeros((2 * n, rows.size))
            for e, (a, b) in enumerate(zip(rows, cols)):
                G[a, e] += s[b]        # (Y s)_a
                G[n + b, e] += s[a]    # (Yᵀ s)_b
            self.b = np.concatenate([s, s])
        self.rows, self.cols, self.G = rows, cols, G
        self._dual = np.zeros(G.shape[0])

    def unpack(self, y: np.ndarray) -> np.ndarray:
        Y = np.zeros((self.n, self.n))
        Y[self.rows, self.cols] = y
        if self.symmetric:
            Y[self.cols, self.rows] = y
        return Y

    def pack(self, Z: np.ndarray) -> np.ndarray:
        """Coordinates of the Frobenius-nearest point of the (symmetrized) masked subspace."""
        if self.symmetric:
            return 0.5 * (Z[self.rows, self.cols] + Z[self.cols, self.rows])
        return Z[self.rows, self.cols].copy()

    def project(self, z: np.ndarray, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
        """Weighted Euclidean projection onto {y ≥ 0, G y = b}.

        Regularized semismooth Newton on the dual with exact line search; the
        primal point is ``y = max(0, z + Gᵀλ / w)``.  The dual is warm-started
        from the previous call, with a cold restart if that fails.
        """
        for start in (self._dual, np.zeros_like(self._dual)):
            lam, y = self._newton(z, start.copy(), tol, max_iter)
            if np.max(np.abs(self.G @ y - self.b)) <= 1e-9:
                self._dual = lam
                return y
        self._dual = np.zeros_like(self._dual)
        raise SynthesisError("projection onto the transition polytope stalled")

    def _newton(self, z, lam, tol, max_iter):
        G, b, w = self.G, self.b, self.weights
        Gw = G / w
        diag = np.arange(G.shape[0])
        u = z + Gw.T @ lam
        y = np.maximum(0.0, u)
        for _ in range(max_iter):
            grad = G @ y - b
            if np.max(np.abs(grad)) <= tol:
                break
            gnorm = math.sqrt(grad @ grad)
            active = u > 0
            H = Gw[:, active] @ G[:, active].T
            # shift keeps H invertible when some rows have no active entries
            H[diag, diag] += min(1e-2, gnorm)
            step = -np.linalg.solve(H, grad)
            a = Gw.T @ step
            u_full = u + a
            if gnorm < 1e-6 or np.array_equal(u_full > 0, active):
                # same linear piece (or close enough that longer steps only
                # chase roundoff): the Newton step is the exact minimizer
                t = 1.0
            else:
                t = _exact_step(u, a, w, b @ step)
            lam = lam + t * step
            u = u_full if t == 1.0 else u + t * a
            y = np.maximum(0.0, u)
        return lam, y

    def residual(self, y: np.ndarray) -> float:
        return float(max(np.max(np.abs(self.G @ y - self.b)), max(0.0, -y.min())))



def _exact_step(u: np.ndarray, a: np.ndarray, w: np.ndarray, bd: float) -> float:
    """Minimizer over t ≥ 0 of ``½ Σ w max(0, u + t a)² - t bd``.

    The derivative is nondecreasing and piecewise linear in ``t``; walk its
    breakpoints in order until it changes sign.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        bp = np.where(a != 0, -u / a, np.inf)
    cuts = np.unique(np.concatenate([[0.0], bp[(bp > 0) & np.isfinite(bp)], [np.inf]]))
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = lo + 1.0 if np.isinf(hi) else 0.5 * (lo + hi)
        on = (u + mid * a) > 0
        slope = np.dot(w[on], a[on] * a[on])
        offset = np.dot(w[on], a[on] * u[on]) - bd
        if slope <= 0:
            if offset >= 0:
                return lo
            continue
        root = -offset / slope
        if root <= lo:
            return lo
        if root <= hi:
            return root
    return 1.0

class _Objective:
    """λmax of the affine symmetric map for one program kind, with adjoint."""

    def __init__(self, kind: str, s: np.ndarray):
        self.kind = kind
        S = np.outer(s, s)
        self.S = S
        self.shift = S if kind == "fmmc" else 2.0 * S

    def matrix(self, Y: np.ndarray) -> np.ndarray:
        if self.kind == "fmmc":
            B = Y - self.S
            n = B.shape[0]
            M = np.zeros((2 * n, 2 * n))
            M[:n, :n] = B
            M[n:, n:] = -B
            return M
        return 0.5 * (Y + Y.T) - self.shift

    def adjoint(self, Z: np.ndarray) -> np.ndarray:
        if self.kind == "fmmc":
            n = Z.shape[0] // 2
            return Z[:n, :n] - Z[n:, n:]
        return Z

    def value(self, Y: np.ndarray) -> float:
        return float(np.linalg.eigvalsh(self.matrix(Y))[-1])

    def subgradient(self, Y: np.ndarray) -> tuple[float, np.ndarray]:
        vals, vecs = np.linalg.eigh(self.matrix(Y))
        v = vecs[:, -1]
        return float(vals[-1]), self.adjoint(np.outer(v, v))

    def smoothed(self, Y: np.ndarray, mu: float) -> tuple[float, float, np.ndarray]:
        """(smoothed value, exact λmax, gradient) at Y."""
        if self.kind == "fmmc":
            # spectrum of diag(B, -B) is ±eig(B); one n×n eigh suffices
            b_vals, vecs = np.linalg.eigh(Y - self.S)
            vals = np.concatenate([b_vals, -b_vals])
        else:
            vals, vecs = np.linalg.eigh(self.matrix(Y))
        top = vals.max()
        e = np.exp((vals - top) / mu)
        z = e.sum()
        p = e / z
        if self.kind == "fmmc":
            n = b_vals.size
            grad = (vecs * (p[:n] - p[n:])) @ vecs.T
        else:
            grad = (vecs * p) @ vecs.T
        return top + mu * math.log(z), float(top), grad


# -- solvers ----------------------------------------------------------------------

def _warm_start(program: SpectralProgram, poly: _Polytope, s: np.ndarray) -> np.ndarray:
    P0 = metropolis_hastings(program.graph, program.target)
    Y0 = P0 * s[None, :] / s[:, None]
    return poly.project(poly.pack(Y0))


def _cut_vectors(obj: _Objective, poly: _Polytope, y: np.ndarray, window: float) -> list[np.ndarray]:
    """Eigenvectors of ``M(y)`` within ``window`` of the top, plus normalized pairwise sums and differences."""
    vals, vecs = np.linalg.eigh(obj.matrix(poly.unpack(y)))
    V = vecs[:, vals >= vals[-1] - window]
    cuts = [V[:, k] for k in range(V.shape[1])]
    for a in range(V.shape[1]):
        for b in range(a + 1, V.shape[1]):
            cuts.append((V[:, a] + V[:, b]) / math.sqrt(2))
            cuts.append((V[:, a] - V[:, b]) / math.sqrt(2))
    return cuts


def _cut_lp(obj: _Objective, poly: _Polytope, cuts: list[np.ndarray]) -> tuple[float, np.ndarray] | None:
    """``min_{y in polytope} max_v vᵀ M(y) v`` over the given unit vectors.

    Since ``vᵀ M v ≤ λmax(M)`` this lower-bounds the optimum; the minimizer is
    returned too.
    """
    M0 = obj.matrix(np.zeros((poly.n, poly.n)))
    off = poly.rows != poly.cols
    A_ub, b_ub = [], []
    for v in cuts:
        C = obj.adjoint(np.outer(v, v))
        c = C[poly.rows, poly.cols].copy()
        if poly.symmetric:
            c[off] += C[poly.cols[off], poly.rows[off]]
        # vᵀM(y)v = c·y + vᵀM0v <= t
        A_ub.append(np.append(c, -1.0))
        b_ub.append(-float(v @ M0 @ v))
    m = poly.rows.size
    cost = np.zeros(m + 1)
    cost[-1] = 1.0
    A_eq = np.hstack([poly.G, np.zeros((poly.G.shape[0], 1))])
    res = linprog(cost, A_ub=np.array(A_ub), b_ub=np.array(b_ub), A_eq=A_eq, b_eq=poly.b,
                  bounds=[(0, None)] * m + [(None, None)], method="highs")
    if res.status != 0:
        return None
    return float(res.fun), np.maximum(res.x[:m], 0.0)


def _polish(obj, poly, y, val, window, tol, rounds=30):
    """Cutting-plane rounds started from the eigenspace at ``y``.

    Each round solves the cut LP, keeps its (projected) minimizer if it is
    better, and adds the cuts generated at that minimizer.  Returns the best
    point, its value and the last lower bound (None if the LP failed).
    """
    cuts = _cut_vectors(obj, poly, y, window)
    lb = None
    for _ in range(rounds):
        out = _cut_lp(obj, poly, cuts)
        if out is None:
            break
        lb, y_lp = out
        y_lp = poly.project(y_lp)
        val_lp = obj.value(poly.unpack(y_lp))
        if val_lp < val:
            val, y = val_lp, y_lp
        if val - lb <= tol:
            break
        cuts += _cut_vectors(obj, poly, y_lp, window)
    return y, val, lb


def _to_chain(Y: np.ndarray, s: np.ndarray) -> np.ndarray:
    P = Y * s[:, None] / s[None, :]
    P = np.maximum(P, 0.0)
    # remove projection round-off so columns sum to one to machine precision
    return P / P.sum(axis=0, keepdims=True)


def _smoothed_descent(obj, poly, y0, tol, max_iter, record, window=1e-3):
    """Accelerated projected gradient on the log-sum-exp smoothing with continuation."""
    dim = obj.matrix(poly.unpack(y0)).shape[0]
    log_m = math.log(dim)
    mu_final = max(tol / (2.0 * log_m), 1e-12)
    mu = max(0.05, mu_final)
    w = poly.weights

    y = y0.copy()
    best_y, best_val, lb = y.copy(), obj.value(poly.unpack(y)), None
    history = [best_val] if record else None
    it = 0
    L = 1.0 / mu
    converged = False
    while it < max_iter:
        # one continuation stage: FISTA with gradient-based restart
        x_prev = y.copy()
        v = y.copy()
        theta = 1.0
        stage_iters = 0
        while it < max_iter:
            fv, _, grad_Y = obj.smoothed(poly.unpack(v), mu)
            g = poly.pack(grad_Y)  # Riesz gradient in the weighted metric
            while True:
                x_new = poly.project(v - g / L)
                d = x_new - v
                f_new, top_new, _ = obj.smoothed(poly.unpack(x_new), mu)
                if f_new <= fv + np.dot(w * g, d) + 0.5 * L * np.dot(w, d * d) + 1e-15:
                    break
                L *= 2.0
            it += 1
            stage_iters += 1
            if top_new < best_val:
                best_val, best_y = top_new, x_new.copy()
            if record:
                history.append(best_val)
            step = x_new - x_prev
            if np.dot(v - x_new, step) > 0:  # momentum points uphill: restart
                theta = 1.0
                v = x_new.copy()
            else:
                theta_next = 0.5 * (1 + math.sqrt(1 + 4 * theta * theta))
                v = x_new + ((theta - 1) / theta_next) * step
                theta = theta_next
            x_prev = x_new
            L *= 0.9  # let the step grow back
            if math.sqrt(np.dot(w, step * step)) * L < mu * 3e-2 or stage_iters >= 400:
                break
        y = x_prev
        if mu < 0.05:
            # cutting-plane polish; the LP bound also certifies the gap
            best_y, best_val, lb = _polish(obj, poly, best_y, best_val, window, tol, rounds=5)
            if lb is not None and best_val - lb <= tol:
                converged = True
                break
        if mu <= mu_final * (1 + 1e-12):
            if stage_iters < 400:
                converged = True
            break
        mu = max(mu * 0.2, mu_final)
        L = max(L, 1.0 / mu)
    return best_y, best_val, it, converged, lb, history


def _subgradient_descent(obj, poly, y0, tol, max_iter, record, window=None, step_scale=0.5, patience=200):
    y = y0.copy()
    w = poly.weights
    best_val, best_y = obj.value(poly.unpack(y)), y.copy()
    history = [best_val] if record else None
    marker, marker_it = best_val, 0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        val, G = obj.subgradient(poly.unpack(y))
        g = poly.pack(G)
        gnorm = math.sqrt(np.dot(w, g * g))
        if gnorm == 0:
            converged = True
            break
        y = poly.project(y - (step_scale / math.sqrt(it)) * g / gnorm)
        cur = obj.value(poly.unpack(y))
        if cur < best_val:
            best_val, best_y = cur, y.copy()
        if record:
            history.append(best_val)
        if it - marker_it >= patience:
            if marker - best_val < tol:
                converged = True
                break
            marker, marker_it = best_val, it
    return best_y, best_val, it, converged, None, history


def minimize_lambda_max(program: SpectralProgram, method: str = "smoothed",
                        certify: bool = True, record_history: bool = False) -> SolverResult:
    """Solve one spectral program and return the best chain found."""
    s = np.sqrt(program.target)
    if program.kind == "symmetric_uniform":
        s = np.sqrt(uniform(program.graph.n))
    poly = _Polytope(program.kind, program.graph, s)
    obj = _Objective(program.kind, s)
    y0 = _warm_start(program, poly, s)
    if poly.residual(y0) > 1e-6:
        raise SynthesisError(f"cannot project onto the transition polytope (residual {poly.residual(y0):.3g})")
    if method == "smoothed":
        run = _smoothed_descent
    elif method == "subgradient":
        run = _subgradient_descent
    else:
        raise ValueError(f"unknown method {method!r}")
    window = max(1e-3, 100 * program.tolerance)
    y, val, iters, converged, lb, history = run(
        obj, poly, y0, program.tolerance, program.max_iterations, record_history, window=window)
    if certify and (lb is None or val - lb > program.tolerance):
        y, val, lb = _polish(obj, poly, y, val, window, program.tolerance)
    if not certify:
        lb = None
    elif lb is not None:
        lb = min(lb, val)  # LP round-off can push the bound a hair above the objective
    gap = None if lb is None else max(0.0, val - lb)
    if gap is not None and gap <= program.tolerance:
        converged = True
    if not converged:
        log.warning("%s solve stopped after %d iterations without meeting tolerance %g",
                    program.kind, iters, program.tolerance)
    chain = _to_chain(poly.unpack(y), s)
    return SolverResult(
        chain=chain,
        objective=val,
        iterations=iters,
        certified_gap=gap,
        converged=converged,
        lower_bound=lb,
        history=None if history is None else np.asarray(history),
    )


def solve_remc(g: RegionGraph, rho: np.ndarray, tol: float = 1e-6, **kw) -> SolverResult:
    return minimize_lambda_max(SpectralProgram("remc", g, rho, tol), **kw)


def solve_reversible(g: RegionGraph, rho: np.ndarray, tol: float = 1e-6, **kw) -> SolverResult:
    return minimize_lambda_max(SpectralProgram("reversible", g, rho, tol), **kw)


def solve_symmetric_uniform(g: RegionGraph, tol: float = 1e-6, **kw) -> SolverResult:
    return minimize_lambda_max(SpectralProgram("symmetric_uniform", g, uniform(g.n), tol), **kw)


def solve_fmmc(g: RegionGraph, rho: np.ndarray, tol: float = 1e-6, **kw) -> SolverResult:
    return minimize_lambda_max(SpectralProgram("fmmc", g, rho, tol), **kw)


def solve(kind: str, g: RegionGraph, rho: np.ndarray, tol: float = 1e-6, **kw) -> SolverResult:
    """Dispatch by CLI kind name (``symmetric`` is accepted for ``symmetric_uniform``)."""
    if kind == "symmetric":
        kind = "symmetric_uniform"
    if kind == "symmetric_uniform":
        return solve_symmetric_uniform(g, tol, **kw)
    return minimize_lambda_max(SpectralProgram(kind, g, rho, tol), **kw)
