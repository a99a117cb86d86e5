"""Random-variate generation for every distribution the Gibbs sweep needs.

All samplers draw from an explicit ``numpy.random.Generator`` so that a
(seed, stream) pair reproduces a bit-identical variate sequence. Streams are
backed by Philox, a counter-based generator, so concurrent chains get
provably disjoint streams from distinct stream ids.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular

# Below this, the GIG quadratic argument is treated as exactly zero and the
# Gamma limit is used; the inverse-Gaussian path degenerates numerically there.
GIG_CHI_TOL = 1e-300

_JITTER_SCALES = (1e-10, 1e-6)


class NumericalSingularityError(RuntimeError):
    """A covariance or precision factorization failed after jitter."""


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent Philox generator for (seed, stream)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    bg = np.random.Philox()
    bg.state = state
    return np.random.Generator(bg)


def cholesky_lower(mat: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Plain lower Cholesky; raises NumericalSingularityError if not SPD."""
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalSingularityError(f"{what} is not positive definite") from exc


def _cholesky_jittered(cov: np.ndarray, what: str) -> np.ndarray:
    """Lower Cholesky with the diagonal-jitter ladder.

    Jitter of 1e-10 times the mean diagonal is always added (the matrices
    routed here are low-rank updates that sit close to singular); on failure
    one retry at 1e-6 scaling, then give up.
    """
    diag_mean = float(np.mean(np.abs(np.diag(cov))))
    if diag_mean == 0.0:
        diag_mean = 1.0
    eye = np.eye(cov.shape[0])
    for scale in _JITTER_SCALES:
        try:
            return np.linalg.cholesky(cov + scale * diag_mean * eye)
        except np.linalg.LinAlgError:
            continue
    raise NumericalSingularityError(f"{what} is not positive definite after jitter")


# ---------------------------------------------------------------------------
# generalized inverse Gaussian
# ---------------------------------------------------------------------------

def _gig_devroye(lam: float, omega: float, rng: np.random.Generator) -> float:
    """Rejection sampler for the two-parameter gig(lam, omega), lam >= 0.

    Density proportional to x^(lam-1) exp(-omega (x + 1/x) / 2). Devroye's
    log-concave envelope construction; accepted draw is returned on the
    original scale.
    """
    alpha = math.sqrt(omega * omega + lam * lam) - lam

    def psi(x):
        return -alpha * (math.cosh(x) - 1.0) - lam * (math.exp(x) - x - 1.0)

    def dpsi(x):
        return -alpha * math.sinh(x) - lam * (math.exp(x) - 1.0)

    x = -psi(1.0)
    if 0.5 <= x <= 2.0:
        t = 1.0
    elif x > 2.0:
        t = math.sqrt(2.0 / (alpha + lam))
    else:
        t = math.log(4.0 / (alpha + 2.0 * lam))

    x = -psi(-1.0)
    if 0.5 <= x <= 2.0:
        s = 1.0
    elif x > 2.0:
        s = math.sqrt(4.0 / (alpha * math.cosh(1.0) + lam))
    else:
        candidate = math.log(1.0 + 1.0 / alpha + math.sqrt(1.0 / alpha ** 2 + 2.0 / alpha))
        s = min(1.0 / lam, candidate) if lam > 0 else candidate

    eta = -psi(t)
    zeta = -dpsi(t)
    theta = -psi(-s)
    xi = dpsi(-s)
    p = 1.0 / xi
    r = 1.0 / zeta
    td = t - r * eta
    sd = s - p * theta
    qd = td + sd

    while True:
        u = rng.random()
        v = rng.random()
        w = rng.random()
        if u < qd / (qd + r + p):
            rnd = -sd + qd * v
        elif u < (qd + r) / (qd + r + p):
            rnd = td - r * math.log(v)
        else:
            rnd = -sd + p * math.log(v)
        if rnd > td:
            envelope = math.exp(-eta - zeta * (rnd - t))
        elif rnd < -sd:
            envelope = math.exp(-theta + xi * (rnd + s))
        else:
            envelope = 1.0
        if w * envelope <= math.exp(psi(rnd)):
            break

    # back from log scale; the construction centres the mode at
    # (lam + sqrt(lam^2 + omega^2)) / omega
    return math.exp(rnd) * (lam / omega + math.sqrt(1.0 + (lam / omega) ** 2))


def gig_half_vector(chi: np.ndarray, psi: float, rng: np.random.Generator) -> np.ndarray:
    """Vector of independent GIG(1/2, chi_j, psi) draws.

    Exact via the reciprocal inverse-Gaussian identity
    1/X ~ GIG(-1/2, psi, chi) = InverseGaussian(sqrt(psi/chi), psi);
    entries with chi below GIG_CHI_TOL use the Gamma(1/2, psi/2) limit.
    """
    chi = np.asarray(chi, dtype=float)
    if psi <= 0:
        raise ValueError(f"psi must be positive, got {psi}")
    if np.any(chi < 0):
        raise ValueError("chi must be nonnegative")
    out = np.empty(chi.shape)
    degenerate = chi < GIG_CHI_TOL
    n_deg = int(degenerate.sum())
    if n_deg:
        out[degenerate] = rng.gamma(0.5, 2.0 / psi, size=n_deg)
    if n_deg < chi.size:
        live = ~degenerate
        out[live] = 1.0 / rng.wald(np.sqrt(psi / chi[live]), psi)
    return out


def sample_gig(p: float, chi: float, psi: float, rng: np.random.Generator) -> float:
    """One draw from density proportional to x^(p-1) exp(-(chi/x + psi x)/2).

    p = 1/2 and p = -1/2 go through the exact inverse-Gaussian identity;
    chi below GIG_CHI_TOL falls back to the analytic Gamma(p, psi/2) limit
    (which requires p > 0); anything else uses the rejection sampler.
    """
    if psi <= 0:
        raise ValueError(f"psi must be positive, got {psi}")
    if chi < 0:
        raise ValueError(f"chi must be nonnegative, got {chi}")
    if chi < GIG_CHI_TOL:
        if p <= 0:
            raise ValueError(f"chi = 0 requires p > 0, got p={p}")
        return float(rng.gamma(p, 2.0 / psi))
    if p == 0.5:
        return float(gig_half_vector(np.array([chi]), psi, rng)[0])
    if p == -0.5:
        return float(rng.wald(math.sqrt(chi / psi), chi))
    omega = math.sqrt(chi * psi)
    draw = _gig_devroye(abs(p), omega, rng)
    if p < 0:
        draw = 1.0 / draw
    return draw * math.sqrt(chi / psi)


# ---------------------------------------------------------------------------
# matrix-variate samplers
# ---------------------------------------------------------------------------

def sample_inverse_wishart(scale: np.ndarray, dof: float, rng: np.random.Generator) -> np.ndarray:
    """Inverse-Wishart draw with the given scale matrix and degrees of freedom.

    Bartlett construction: with Z = AA' ~ Wishart(dof, I) and L = chol(scale),
    X = L Z^{-1} L' ~ IW(scale, dof), so E[X] = scale / (dof - R - 1).
    """
    scale = np.asarray(scale, dtype=float)
    R = scale.shape[0]
    if dof <= R - 1:
        raise ValueError(f"dof must exceed R - 1 = {R - 1}, got {dof}")
    L = cholesky_lower(scale, "inverse-Wishart scale")
    A = np.zeros((R, R))
    for i in range(R):
        A[i, i] = math.sqrt(rng.chisquare(dof - i))
        A[i, :i] = rng.standard_normal(i)
    # X = (L A^{-T})(L A^{-T})' ; Y = A^{-1} L' solves the triangular system
    Y = solve_triangular(A, L.T, lower=True)
    X = Y.T @ Y
    return (X + X.T) / 2.0


def sample_mvn_precision(
    b: np.ndarray,
    P: np.ndarray,
    tau2: float,
    rng: np.random.Generator,
    what: str = "precision matrix",
) -> np.ndarray:
    """Draw from N(P^{-1} b, tau2 * P^{-1}) using one Cholesky of P.

    The conditional posteriors all arrive in this precision form; solving
    against the factor avoids ever forming P^{-1}.
    """
    P = np.asarray(P, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    L = cholesky_lower(P, what)
    half = solve_triangular(L, b, lower=True)
    mean = solve_triangular(L.T, half, lower=False)
    z = rng.standard_normal(b.size)
    return mean + math.sqrt(tau2) * solve_triangular(L.T, z, lower=False)


def log_mvn_density(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Log density of N(mean, cov) at x, via a jittered Cholesky of cov."""
    x = np.asarray(x, dtype=float).ravel()
    mean = np.asarray(mean, dtype=float).ravel()
    cov = np.asarray(cov, dtype=float)
    L = _cholesky_jittered(cov, "Gaussian covariance")
    dev = solve_triangular(L, x - mean, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return -0.5 * (x.size * math.log(2.0 * math.pi) + logdet + float(dev @ dev))


def log_mvn_density_diag(x: np.ndarray, mean: np.ndarray, var: np.ndarray) -> float:
    """Log density of N(mean, diag(var)) at x; var entries strictly positive."""
    x = np.asarray(x, dtype=float).ravel()
    dev2 = (x - np.asarray(mean, dtype=float).ravel()) ** 2
    var = np.asarray(var, dtype=float).ravel()
    return -0.5 * float(np.sum(np.log(2.0 * math.pi * var) + dev2 / var))


# ---------------------------------------------------------------------------
# scalar and simplex samplers
# ---------------------------------------------------------------------------

def sample_dirichlet(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError(f"Dirichlet parameters must be positive, got {alpha}")
    return rng.dirichlet(alpha)


def inverse_gamma(shape: float, rate: float, rng: np.random.Generator) -> float:
    """Inverse-Gamma(shape, rate) with mean rate / (shape - 1)."""
    if shape <= 0 or rate <= 0:
        raise ValueError(f"invalid inverse-Gamma parameters ({shape}, {rate})")
    return float(rate / rng.gamma(shape, 1.0))


def gamma(shape: float, rate: float, rng: np.random.Generator) -> float:
    """Gamma(shape, rate) with mean shape / rate."""
    if shape <= 0 or rate <= 0:
        raise ValueError(f"invalid Gamma parameters ({shape}, {rate})")
    return float(rng.gamma(shape, 1.0 / rate))


def beta(a: float, b: float, rng: np.random.Generator) -> float:
    if a <= 0 or b <= 0:
        raise ValueError(f"invalid Beta parameters ({a}, {b})")
    return float(rng.beta(a, b))


def bernoulli(p: float, rng: np.random.Generator) -> int:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Bernoulli probability out of [0, 1]: {p}")
    return int(rng.random() < p)
