"""Core data containers and the edge-vectorization machinery.

Nodes are numbered 1..V in all external formats (files, CLI, reported
tables); everything in here works with 0-based numpy indices internally.
Edges are ordered lexicographically over pairs (k, l) with k < l:
(1,2), (1,3), ..., (1,V), (2,3), ..., (V-1,V).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def n_edges(V: int) -> int:
    """Number of unordered node pairs, q = V(V-1)/2."""
    return V * (V - 1) // 2


def n_nodes_from_edges(q: int) -> int:
    """Invert q = V(V-1)/2; raises if q is not of that form."""
    V = (1 + math.isqrt(1 + 8 * q)) // 2
    if V * (V - 1) // 2 != q:
        raise ValueError(f"{q} is not V(V-1)/2 for any integer V")
    return V


def triu_pairs(V: int) -> tuple[np.ndarray, np.ndarray]:
    """0-based (row, col) index arrays of the strict upper triangle, edge order."""
    return np.triu_indices(V, k=1)


def pair_index(k: int, l: int, V: int) -> int:
    """Position (1-based) of edge (k, l), k < l, in the vectorization order.

    Node arguments are 1-based to match external formats.
    """
    if not (1 <= k < l <= V):
        raise ValueError(f"need 1 <= k < l <= V, got k={k}, l={l}, V={V}")
    # edges before row k: (k-1) rows of lengths V-1, V-2, ...
    before = (k - 1) * V - k * (k - 1) // 2
    return before + (l - k)


def pair_from_index(e: int, V: int) -> tuple[int, int]:
    """Inverse of pair_index: 1-based edge index -> 1-based (k, l)."""
    q = n_edges(V)
    if not (1 <= e <= q):
        raise ValueError(f"edge index {e} out of range 1..{q}")
    k = 1
    rem = e
    while rem > V - k:
        rem -= V - k
        k += 1
    return k, k + rem


def _check_square_symmetric(A: np.ndarray, what: str = "matrix") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{what} must be square, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError(f"{what} must be symmetric")
    return A


def upper_triangle_vectorize(A: np.ndarray) -> np.ndarray:
    """Vectorize a symmetric zero-diagonal matrix into its q upper-triangle entries."""
    A = _check_square_symmetric(A, "adjacency matrix")
    if np.any(A.diagonal() != 0.0):
        raise ValueError("adjacency matrix must have zero diagonal")
    return A[triu_pairs(A.shape[0])].copy()


def frobenius_inner(A: np.ndarray, B: np.ndarray) -> float:
    """Frobenius inner product, the sum of elementwise products."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return float(np.sum(A * B))


def gamma_to_B(gamma: np.ndarray) -> np.ndarray:
    """Fold edge coefficients into the symmetric coefficient matrix, b_kl = gamma_kl / 2.

    With this convention <A, B>_F equals the dot product of A's edge vector
    with gamma for any symmetric zero-diagonal A.
    """
    gamma = np.asarray(gamma, dtype=float).ravel()
    V = n_nodes_from_edges(gamma.size)
    B = np.zeros((V, V))
    iu = triu_pairs(V)
    B[iu] = gamma / 2.0
    B += B.T
    return B


@dataclass(frozen=True)
class NetworkDataset:
    """n phenotype responses paired with n symmetric V x V adjacency matrices.

    The design matrix X (n x q) holds each sample's edge vector and is built
    once at construction; the adjacency stack is kept for reporting only.
    Immutable after construction and safe to share across chains.
    """

    y: np.ndarray
    A: np.ndarray
    X: np.ndarray = field(init=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError(f"A must be an (n, V, V) stack, got {A.shape}")
        if A.shape[0] != y.size:
            raise ValueError(f"{y.size} responses but {A.shape[0]} adjacency matrices")
        V = A.shape[1]
        iu = triu_pairs(V)
        for i in range(A.shape[0]):
            _check_square_symmetric(A[i], f"A[{i}]")
            if np.any(A[i].diagonal() != 0.0):
                raise ValueError(f"A[{i}] must have zero diagonal")
        X = A[:, iu[0], iu[1]].copy()
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def V(self) -> int:
        return self.A.shape[1]

    @property
    def q(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class Hyperparameters:
    """Fixed prior constants.

    R      latent dimension
    eta    Dirichlet shape exponent, > 1
    nu     inverse-Wishart degrees of freedom, > R - 1
    a_delta, b_delta   Beta shapes for the node-inclusion probability
    zeta, iota         Gamma shape and rate for the scale hyperparameter
    """

    R: int = 7
    eta: float = 1.01
    nu: float | None = None
    a_delta: float = 1.0
    b_delta: float = 1.0
    zeta: float = 1.0
    iota: float = 1.0

    def __post_init__(self):
        if self.R < 1:
            raise ValueError(f"latent dimension must be positive, got {self.R}")
        if self.nu is None:
            object.__setattr__(self, "nu", float(self.R + 2))
        if not self.eta > 1.0:
            raise ValueError(f"eta must exceed 1, got {self.eta}")
        if not self.nu > self.R - 1:
            raise ValueError(f"nu must exceed R - 1 = {self.R - 1}, got {self.nu}")
        for name in ("a_delta", "b_delta", "zeta", "iota"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class ChainState:
    """Current values of every latent parameter for one Gibbs chain.

    gamma   (q,)    edge coefficients
    u       (R, V)  node latent vectors, column k belongs to node k
    xi      (V,)    0/1 node-inclusion indicators; xi_k = 0 forces u_k = 0
    lam     (R,)    diagonal of the slot-sign matrix, entries in {-1, 0, 1}
    pi_tilde (R, 3) per-slot categorical probabilities for lam = 0 / 1 / -1
    delta   scalar in (0, 1), prior inclusion probability
    M       (R, R)  SPD latent covariance
    s       (q,)    positive edge scale parameters
    theta, tau2, mu  positive scale hyperparameter, error variance, intercept
    """

    gamma: np.ndarray
    u: np.ndarray
    xi: np.ndarray
    lam: np.ndarray
    pi_tilde: np.ndarray
    delta: float
    M: np.ndarray
    s: np.ndarray
    theta: float
    tau2: float
    mu: float

    def copy(self) -> "ChainState":
        return ChainState(
            gamma=self.gamma.copy(),
            u=self.u.copy(),
            xi=self.xi.copy(),
            lam=self.lam.copy(),
            pi_tilde=self.pi_tilde.copy(),
            delta=float(self.delta),
            M=self.M.copy(),
            s=self.s.copy(),
            theta=float(self.theta),
            tau2=float(self.tau2),
            mu=float(self.mu),
        )

    def validate(self) -> None:
        """Raise if any structural invariant is violated."""
        V = self.xi.size
        q = self.gamma.size
        if n_edges(V) != q:
            raise ValueError(f"gamma has {q} entries but V={V} implies {n_edges(V)}")
        if self.u.shape[1] != V:
            raise ValueError("u must have one column per node")
        for k in range(V):
            col_zero = not np.any(self.u[:, k])
            if self.xi[k] == 0 and not col_zero:
                raise ValueError(f"xi[{k}] = 0 but u_{k} is nonzero")
            if self.xi[k] == 1 and col_zero:
                raise ValueError(f"xi[{k}] = 1 but u_{k} is zero")
        if not np.all(np.isin(self.lam, (-1.0, 0.0, 1.0))):
            raise ValueError("lam entries must lie in {-1, 0, 1}")
        if np.any(self.pi_tilde < 0) or not np.allclose(self.pi_tilde.sum(axis=1), 1.0):
            raise ValueError("pi_tilde rows must be probability vectors")
        if not (0.0 <= self.delta <= 1.0):
            raise ValueError(f"delta out of [0, 1]: {self.delta}")
        if np.any(self.s <= 0) or self.theta <= 0 or self.tau2 <= 0:
            raise ValueError("s, theta and tau2 must be strictly positive")
        np.linalg.cholesky(self.M)  # SPD check; raises LinAlgError otherwise
        for arr in (self.gamma, self.u, self.s, self.M, self.pi_tilde):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite value in chain state")
        if not (np.isfinite(self.mu) and np.isfinite(self.tau2) and np.isfinite(self.theta)):
            raise ValueError("non-finite scalar in chain state")


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained post-burn-in draws, stacked chains x retained x dim.

    gamma (C, m, q) and xi (C, m, V) are what the reports consume; mu, tau2
    and the unnormalized log joint density (all (C, m)) ride along for
    diagnostics and MAP selection.
    """

    gamma: np.ndarray
    xi: np.ndarray
    mu: np.ndarray | None = None
    tau2: np.ndarray | None = None
    log_joint: np.ndarray | None = None

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        x = np.asarray(self.xi)
        if g.ndim != 3 or x.ndim != 3:
            raise ValueError("draws must be (chains, retained, dim) arrays")
        if g.shape[:2] != x.shape[:2]:
            raise ValueError(f"inconsistent chain/draw counts: {g.shape} vs {x.shape}")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "xi", x)
        for name in ("mu", "tau2", "log_joint"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != g.shape[:2]:
                    raise ValueError(f"{name} draws must be (chains, retained)")
                object.__setattr__(self, name, v)

    @property
    def chains(self) -> int:
        return self.gamma.shape[0]

    @property
    def retained(self) -> int:
        return self.gamma.shape[1]

    @property
    def q(self) -> int:
        return self.gamma.shape[2]

    @property
    def V(self) -> int:
        return self.xi.shape[2]
