"""GLTP registration: CPD-style EM with motion coherence plus locally linear embedding.

Notation follows the usual CPD conventions: ``X`` (N, 3) observed points, ``Y0``
(M, 3) nodes from the previous frame, ``P`` (M, N) posteriors, ``G`` (M, M)
kernel, ``W`` (M, 3) kernel weights, and the updated nodes are ``Y0 + G @ W``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .dlo_model import (
    GEODESIC,
    METRIC_MODES,
    GeodesicTable,
    MultiDLOState,
    distance_matrix,
    node_to_points,
)

log = logging.getLogger(__name__)

DIM = 3


class RegistrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GLTPParams:
    beta: float = 0.8
    lam: float = 1.0
    alpha: float = 3.0
    mu: float = 0.1
    q: int = 3
    epsilon: float = 1e-5
    max_iters: int = 50
    metric: str = GEODESIC
    sigma2_floor: float = 1e-10

    def __post_init__(self):
        checks = {
            "beta": self.beta > 0,
            "lam": self.lam >= 0,
            "alpha": self.alpha >= 0,
            "mu": 0 <= self.mu < 1,
            "q": int(self.q) == self.q and self.q >= 1,
            "epsilon": self.epsilon > 0,
            "max_iters": int(self.max_iters) == self.max_iters and self.max_iters >= 1,
            "metric": self.metric in METRIC_MODES,
            "sigma2_floor": self.sigma2_floor > 0,
        }
        for name, ok in checks.items():
            if not ok:
                raise ValueError(f"invalid {name} = {getattr(self, name)!r}")


@dataclass(frozen=True)
class Correspondence:
    P: np.ndarray
    sigma2: float
    Np: float


@dataclass(frozen=True)
class LLEWeights:
    L: np.ndarray
    H: np.ndarray


@dataclass
class RegistrationResult:
    Y_new: np.ndarray
    W: np.ndarray
    G: np.ndarray
    sigma2_final: float
    iterations: int
    cost_trace: list[float] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Locally linear embedding


def neighbor_window(m: int, n: int, q: int) -> np.ndarray:
    """Same-chain neighbours of local index ``m`` in a chain of ``n`` nodes.

    The 2q+1 window is shifted inward at the chain ends so end nodes keep 2q
    neighbours when the chain is long enough.
    """
    width = min(2 * q + 1, n)
    start = min(max(m - q, 0), n - width)
    idx = np.arange(start, start + width)
    return idx[idx != m]


def reconstruction_weights(y: np.ndarray, neighbors: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    """Sum-to-one weights minimizing ||y - sum_j w_j n_j||^2 with a ridge of ``ridge`` x trace.

    Solves (Z Z^T + r I) w = 1 through the SVD of Z, which avoids squaring the
    condition number of the nearly singular local Gram matrix.
    """
    Z = neighbors - y
    U, s, _ = np.linalg.svd(Z, full_matrices=True)
    s2 = np.zeros(len(Z))
    s2[: len(s)] = s * s
    w = U @ ((U.T @ np.ones(len(Z))) / (s2 + ridge * s2.sum()))
    return w / w.sum()


def lle_weights(state0: MultiDLOState, q: int) -> LLEWeights:
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    M = state0.M
    L = np.zeros((M, M))
    for k in range(state0.K):
        rows = state0.rows(k)
        Yk = state0.Y[rows]
        n = len(Yk)
        if n < 2:
            raise ValueError(f"object {state0.chains[k].object_id} has a single node")
        for m in range(n):
            nb = neighbor_window(m, n, q)
            L[rows.start + m, rows.start + nb] = reconstruction_weights(Yk[m], Yk[nb])
    IL = np.eye(M) - L
    return LLEWeights(L, IL.T @ IL)


# ---------------------------------------------------------------------------
# E-step


def squared_distances(X: np.ndarray, Y: np.ndarray, labels: np.ndarray,
                      table: GeodesicTable) -> np.ndarray:
    """(M, N) squared node-to-point distances under the table's metric."""
    sq = cdist(Y, X, "sqeuclidean")
    if table.metric_mode != GEODESIC:
        return sq
    D = node_to_points(table, Y, X, sq)
    return np.square(D)


def posterior_from_sqdist(D2: np.ndarray, sigma2: float, mu: float) -> Correspondence:
    M, N = D2.shape
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    A = D2 / (2.0 * sigma2)
    amin = A.min(axis=0)
    finite = np.isfinite(amin)
    if mu == 0 and not finite.all():
        raise RegistrationError("a point has infinite distance to every node and mu = 0")
    shift = np.where(finite, amin, 0.0)
    E = np.exp(-(A - shift))
    c = (2.0 * np.pi * sigma2) ** (DIM / 2) * mu * M / ((1.0 - mu) * N)
    den = E.sum(axis=0)
    if c > 0:
        with np.errstate(over="ignore"):
            den = den + c * np.exp(shift)
    P = E / den
    return Correspondence(P, float(sigma2), float(P.sum()))


def posterior(X: np.ndarray, state: MultiDLOState, table: GeodesicTable,
              sigma2: float, mu: float) -> Correspondence:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("need at least one point")
    if table.metric_mode == GEODESIC and state.M < 2:
        # anchors need two nodes; a single node is its own nearest point
        D2 = cdist(state.Y, X, "sqeuclidean")
    else:
        D2 = squared_distances(X, state.Y, state.labels, table)
    return posterior_from_sqdist(D2, sigma2, mu)


# ---------------------------------------------------------------------------
# M-step


def solve_W(P, G, H, Y0, X, sigma2, lam, alpha) -> np.ndarray:
    P1 = P.sum(axis=1)
    M = len(G)
    A = P1[:, None] * G + lam * sigma2 * np.eye(M) + alpha * sigma2 * (H @ G)
    B = P @ X - P1[:, None] * Y0 - alpha * sigma2 * (H @ Y0)
    try:
        W = np.linalg.solve(A, B)
    except np.linalg.LinAlgError as exc:
        raise RegistrationError(f"singular M-step system (cond = {np.linalg.cond(A):.3g})") from exc
    if not np.all(np.isfinite(W)):
        raise RegistrationError(f"non-finite M-step solution (cond = {np.linalg.cond(A):.3g})")
    return W


def weighted_sse(P, X, Y) -> float:
    """sum_mn P(m, n) ||x_n - y_m||^2, expanded so it costs O(MN) not O(MN * 3)."""
    Pt1 = P.sum(axis=0)
    P1 = P.sum(axis=1)
    return float(
        Pt1 @ np.einsum("ij,ij->i", X, X)
        - 2.0 * np.einsum("ij,ij->", P @ X, Y)
        + P1 @ np.einsum("ij,ij->i", Y, Y)
    )


def update_sigma2(P, G, W, Y0, X, floor: float = 1e-10) -> float:
    Np = P.sum()
    if not Np > 0:
        raise RegistrationError("no point mass on any node (Np = 0)")
    Y = Y0 + G @ W
    return max(weighted_sse(P, X, Y) / (DIM * Np), floor)


def total_cost(P, G, W, H, Y0, X, sigma2, lam, alpha) -> float:
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    Y = Y0 + G @ W
    Np = P.sum()
    gmm = weighted_sse(P, X, Y) / (2.0 * sigma2) + 0.5 * DIM * Np * np.log(sigma2)
    mct = 0.5 * lam * np.einsum("ij,ij->", W, G @ W)
    lle = 0.5 * alpha * np.einsum("ij,ij->", Y, H @ Y)
    return float(gmm + mct + lle)


def initial_sigma2(X: np.ndarray, Y: np.ndarray) -> float:
    """Mean squared Euclidean point-node distance over all pairs, divided by the dimension."""
    N, M = len(X), len(Y)
    sse = M * np.sum(X * X) + N * np.sum(Y * Y) - 2.0 * X.sum(axis=0) @ Y.sum(axis=0)
    return float(sse / (DIM * M * N))


# ---------------------------------------------------------------------------
# EM loop


def gltp_em(X: np.ndarray, state0: MultiDLOState, params: GLTPParams, lle: LLEWeights,
            sigma2: float | None = None) -> RegistrationResult:
    """Register nodes ``state0`` to points ``X``.

    The kernel and node distances are rebuilt from the current node estimate
    before every E-step. Stops when sigma2 changes by less than ``params.epsilon``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != DIM or len(X) == 0:
        raise ValueError(f"X must be a nonempty (N, 3) array, got shape {X.shape}")
    Y0 = np.asarray(state0.Y)
    labels = state0.labels
    if lle.H.shape != (len(Y0), len(Y0)):
        raise ValueError("LLE weights do not match the node count")
    if sigma2 is None:
        sigma2 = initial_sigma2(X, Y0)
    mode = params.metric
    H = lle.H
    two_beta2 = 2.0 * params.beta ** 2

    Y = Y0
    W = np.zeros_like(Y0)
    costs: list[float] = []
    iters = 0
    for iters in range(1, params.max_iters + 1):
        table = GeodesicTable(mode, distance_matrix(Y, labels, mode))
        G = np.exp(-np.square(table.dist) / two_beta2)
        if mode == GEODESIC and len(Y) >= 2:
            D2 = squared_distances(X, Y, labels, table)
        else:
            D2 = cdist(Y, X, "sqeuclidean")
        corr = posterior_from_sqdist(D2, sigma2, params.mu)
        W = solve_W(corr.P, G, H, Y0, X, sigma2, params.lam, params.alpha)
        new_sigma2 = update_sigma2(corr.P, G, W, Y0, X, params.sigma2_floor)
        costs.append(total_cost(corr.P, G, W, H, Y0, X, new_sigma2, params.lam, params.alpha))
        Y = Y0 + G @ W
        converged = abs(new_sigma2 - sigma2) < params.epsilon
        sigma2 = new_sigma2
        if converged:
            break
    log.debug("gltp_em: %d iterations, sigma2 = %.3g", iters, sigma2)
    return RegistrationResult(Y, W, G, float(sigma2), iters, costs)

