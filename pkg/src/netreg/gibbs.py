"""Full-conditional updates and the sweep driver for the network-regression sampler.

One sweep updates, in order: the error variance, each node's inclusion flag
and latent vector, the edge coefficients, the edge scales and their
hyperparameter, the inclusion probability, the latent covariance, the
intercept, and finally each latent slot's sign together with its categorical
weights. The edge-coefficient mean vector W and the scale diagonal D are
reassembled from the freshest values before every use.
"""

from __future__ import annotations

import functools
import pickle
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from .data import ChainState, Hyperparameters, NetworkDataset, n_edges, triu_pairs
from .samplers import (
    NumericalSingularityError,
    bernoulli,
    beta,
    cholesky_lower,
    gamma as gamma_draw,
    gig_half_vector,
    inverse_gamma,
    log_mvn_density,
    log_mvn_density_diag,
    rng_from_state,
    rng_state,
    rng_stream,
    sample_dirichlet,
    sample_inverse_wishart,
    sample_mvn_precision,
)

_LAM_VALUES = (0.0, 1.0, -1.0)  # categorical slots in reporting order


@functools.lru_cache(maxsize=32)
def edge_tables(V: int):
    """Index tables for a V-node graph: triu rows/cols, per-node incident
    edge positions and the other-node ids, both in ascending other-node order."""
    rows, cols = triu_pairs(V)
    E = np.zeros((V, V), dtype=np.intp)
    E[rows, cols] = np.arange(rows.size)
    E += E.T
    others = np.empty((V, V - 1), dtype=np.intp)
    incident = np.empty((V, V - 1), dtype=np.intp)
    for k in range(V):
        other = np.concatenate([np.arange(k), np.arange(k + 1, V)])
        others[k] = other
        incident[k] = E[k, other]
    return rows, cols, incident, others


def assemble_W(state: ChainState) -> np.ndarray:
    """Edge-coefficient prior means W_kl = u_k' Lambda u_l in edge order."""
    V = state.xi.size
    rows, cols, _, _ = edge_tables(V)
    G = (state.u * state.lam[:, None]).T @ state.u
    return G[rows, cols]


def slot_outer_products(state: ChainState) -> np.ndarray:
    """Per-slot edge vectors w_r with (w_r)_kl = u_rk u_rl, stacked (R, q)."""
    V = state.xi.size
    rows, cols, _, _ = edge_tables(V)
    return state.u[:, rows] * state.u[:, cols]


@dataclass(frozen=True)
class ChainPrecomp:
    """Per-dataset quantities that never change across sweeps."""

    XtX: np.ndarray
    Xty: np.ndarray
    Xt1: np.ndarray

    @classmethod
    def from_dataset(cls, data: NetworkDataset) -> "ChainPrecomp":
        X = data.X
        return cls(XtX=X.T @ X, Xty=X.T @ data.y, Xt1=X.sum(axis=0))


# ---------------------------------------------------------------------------
# individual full-conditional updates
# ---------------------------------------------------------------------------

def update_tau2(state: ChainState, data: NetworkDataset, rng) -> float:
    """Error-variance redraw: InverseGamma(n/2 + q/2, half residual plus
    half prior quadratic)."""
    W = assemble_W(state)
    resid = data.y - state.mu - data.X @ state.gamma
    dev = state.gamma - W
    rate = 0.5 * float(resid @ resid) + 0.5 * float(dev @ (dev / state.s))
    if rate <= 0.0:
        raise NumericalSingularityError(
            "error-variance rate is zero (exact-fit degeneracy)"
        )
    shape = data.n / 2.0 + data.q / 2.0
    return inverse_gamma(shape, rate, rng)


@dataclass
class NodeUpdateWorkspace:
    """Per-node quantities behind the joint inclusion/latent redraw.

    gamma_k and h_k hold the V-1 incident edge coefficients and scales,
    U_star the other nodes' sign-weighted latents; w is the spike weight
    and (m, Sigma) the slab's Gaussian parameters.
    """

    gamma_k: np.ndarray
    h_k: np.ndarray
    U_star: np.ndarray
    log_w: float
    w: float
    m: np.ndarray
    Sigma: np.ndarray


def _node_parts(state: ChainState, k: int):
    V = state.xi.size
    _, _, incident, others = edge_tables(V)
    gamma_k = state.gamma[incident[k]]
    s_k = state.s[incident[k]]
    U_star = (state.u[:, others[k]] * state.lam[:, None]).T
    return gamma_k, s_k, U_star


def _log_spike_weight(state: ChainState, gamma_k, s_k, U_star) -> float:
    """log w for the node mixture: spike mass against slab mass in log space."""
    delta = state.delta
    if delta <= 0.0:
        return 0.0
    if delta >= 1.0:
        return -np.inf
    log_spike = log_mvn_density_diag(gamma_k, np.zeros_like(gamma_k), state.tau2 * s_k)
    slab_cov = state.tau2 * np.diag(s_k) + U_star @ state.M @ U_star.T
    log_slab = log_mvn_density(gamma_k, np.zeros_like(gamma_k), slab_cov)
    a0 = np.log1p(-delta) + log_spike
    a1 = np.log(delta) + log_slab
    return float(a0 - np.logaddexp(a0, a1))


def node_workspace(state: ChainState, k: int) -> NodeUpdateWorkspace:
    """Assemble every quantity of the node-k update at the current state."""
    gamma_k, s_k, U_star = _node_parts(state, k)
    log_w = _log_spike_weight(state, gamma_k, s_k, U_star)
    M_inv = _spd_inverse(state.M, "latent covariance")
    P = U_star.T @ (U_star / s_k[:, None]) / state.tau2 + M_inv
    L = cholesky_lower(P, f"latent posterior precision for node {k}")
    Sigma = _chol_inverse(L)
    b = U_star.T @ (gamma_k / s_k) / state.tau2
    m = Sigma @ b
    return NodeUpdateWorkspace(
        gamma_k=gamma_k, h_k=s_k, U_star=U_star,
        log_w=log_w, w=float(np.exp(log_w)), m=m, Sigma=Sigma,
    )


def _spd_inverse(mat: np.ndarray, what: str) -> np.ndarray:
    L = cholesky_lower(mat, what)
    return _chol_inverse(L)


def _chol_inverse(L: np.ndarray) -> np.ndarray:
    inv_L = np.linalg.inv(L)
    return inv_L.T @ inv_L


def update_node(k: int, state: ChainState, rng, M_inv: np.ndarray | None = None):
    """Joint redraw of (xi_k, u_k): Bernoulli on the slab weight, then the
    slab Gaussian when included, the zero vector otherwise."""
    gamma_k, s_k, U_star = _node_parts(state, k)
    log_w = _log_spike_weight(state, gamma_k, s_k, U_star)
    xi_k = bernoulli(-np.expm1(log_w), rng)  # 1 - w without cancellation
    if not xi_k:
        return 0, np.zeros(state.u.shape[0])
    if M_inv is None:
        M_inv = _spd_inverse(state.M, "latent covariance")
    P = U_star.T @ (U_star / s_k[:, None]) / state.tau2 + M_inv
    b = U_star.T @ (gamma_k / s_k) / state.tau2
    u_k = sample_mvn_precision(b, P, 1.0, rng, what=f"latent posterior for node {k}")
    return 1, u_k


def update_gamma(state: ChainState, data: NetworkDataset, rng,
                 precomp: ChainPrecomp | None = None) -> np.ndarray:
    """Edge-coefficient redraw from the precision-form Gaussian conditional."""
    if precomp is None:
        precomp = ChainPrecomp.from_dataset(data)
    W = assemble_W(state)
    d_inv = 1.0 / state.s
    P = precomp.XtX + np.diag(d_inv)
    b = precomp.Xty - state.mu * precomp.Xt1 + d_inv * W
    return sample_mvn_precision(b, P, state.tau2, rng, what="edge-coefficient precision")


def update_s(state: ChainState, rng) -> np.ndarray:
    """Edge-scale redraws: independent GIG(1/2, residual^2 / tau2, theta)."""
    W = assemble_W(state)
    chi = (state.gamma - W) ** 2 / state.tau2
    return gig_half_vector(chi, state.theta, rng)


def update_theta(state: ChainState, hyper: Hyperparameters, rng) -> float:
    V = state.xi.size
    shape = hyper.zeta + V * (V - 1) / 2.0
    rate = hyper.iota + float(state.s.sum()) / 2.0
    return gamma_draw(shape, rate, rng)


def update_delta(state: ChainState, hyper: Hyperparameters, rng) -> float:
    active = float(state.xi.sum())
    return beta(hyper.a_delta + active, hyper.b_delta + (state.xi.size - active), rng)


def update_M(state: ChainState, hyper: Hyperparameters, rng) -> np.ndarray:
    """Latent-covariance redraw: inverse Wishart accumulating the outer
    products of the active latent vectors (the conjugate update for the
    zero-mean latent prior), with one degree of freedom per active node."""
    R = state.u.shape[0]
    active = state.xi.astype(bool)
    scale = np.eye(R)
    if np.any(active):
        ua = state.u[:, active]
        scale = scale + ua @ ua.T
    dof = hyper.nu + int(active.sum())
    return sample_inverse_wishart(scale, dof, rng)


def update_mu(state: ChainState, data: NetworkDataset, rng) -> float:
    resid_mean = float(np.mean(data.y - data.X @ state.gamma))
    return float(rng.normal(resid_mean, np.sqrt(state.tau2 / data.n)))


def lambda_slot_probabilities(slot: int, state: ChainState,
                              slot_outer: np.ndarray | None = None) -> np.ndarray:
    """Posterior probabilities that latent slot `slot` (0-based) takes the
    value 0, 1 or -1, computed entirely in log space."""
    if slot_outer is None:
        slot_outer = slot_outer_products(state)
    W_minus = state.lam @ slot_outer - state.lam[slot] * slot_outer[slot]
    w_r = slot_outer[slot]
    var = state.tau2 * state.s
    with np.errstate(divide="ignore"):
        log_terms = np.array([
            np.log(state.pi_tilde[slot, 0])
            + log_mvn_density_diag(state.gamma, W_minus, var),
            np.log(state.pi_tilde[slot, 1])
            + log_mvn_density_diag(state.gamma, W_minus + w_r, var),
            np.log(state.pi_tilde[slot, 2])
            + log_mvn_density_diag(state.gamma, W_minus - w_r, var),
        ])
    return np.exp(log_terms - logsumexp(log_terms))


def update_lambda_r(slot: int, state: ChainState, rng,
                    slot_outer: np.ndarray | None = None) -> float:
    probs = lambda_slot_probabilities(slot, state, slot_outer)
    j = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return _LAM_VALUES[min(j, 2)]


def update_pi_r(slot: int, state: ChainState, hyper: Hyperparameters, rng) -> np.ndarray:
    """Dirichlet redraw for slot `slot` (0-based; the zero-weight shape uses
    the 1-based slot number). Counts run over all R slots."""
    n0 = float(np.sum(state.lam == 0.0))
    n1 = float(np.sum(state.lam == 1.0))
    nm1 = float(np.sum(state.lam == -1.0))
    alpha = np.array([(slot + 1) ** hyper.eta + n0, 1.0 + n1, 1.0 + nm1])
    return sample_dirichlet(alpha, rng)


# ---------------------------------------------------------------------------
# sweep, initialization, joint density
# ---------------------------------------------------------------------------

def gibbs_step(state: ChainState, data: NetworkDataset, hyper: Hyperparameters,
               rng, precomp: ChainPrecomp | None = None) -> ChainState:
    """One full sweep, mutating and returning `state`."""
    if precomp is None:
        precomp = ChainPrecomp.from_dataset(data)
    V = data.V
    state.tau2 = update_tau2(state, data, rng)
    M_inv = _spd_inverse(state.M, "latent covariance")
    for k in range(V):
        xi_k, u_k = update_node(k, state, rng, M_inv=M_inv)
        state.xi[k] = xi_k
        state.u[:, k] = u_k
    state.gamma = update_gamma(state, data, rng, precomp)
    state.s = update_s(state, rng)
    state.theta = update_theta(state, hyper, rng)
    state.delta = update_delta(state, hyper, rng)
    state.M = update_M(state, hyper, rng)
    state.mu = update_mu(state, data, rng)
    slot_outer = slot_outer_products(state)
    for r in range(hyper.R):
        state.lam[r] = update_lambda_r(r, state, rng, slot_outer)
        state.pi_tilde[r] = update_pi_r(r, state, hyper, rng)
    return state


def init_state(data: NetworkDataset, hyper: Hyperparameters, rng) -> ChainState:
    """Over-dispersed chain start: data-scaled intercept and variance, all
    nodes included with standard-normal latents, flat slot weights."""
    R, V, q = hyper.R, data.V, data.q
    tau2 = float(np.var(data.y))
    if tau2 <= 0.0:
        tau2 = 1.0  # constant responses
    return ChainState(
        gamma=np.zeros(q),
        u=rng.standard_normal((R, V)),
        xi=np.ones(V, dtype=np.int8),
        lam=np.ones(R),
        pi_tilde=np.full((R, 3), 1.0 / 3.0),
        delta=0.5,
        M=np.eye(R),
        s=np.ones(q),
        theta=hyper.zeta / hyper.iota,
        tau2=tau2,
        mu=float(np.mean(data.y)),
    )


def log_joint(state: ChainState, data: NetworkDataset, hyper: Hyperparameters) -> float:
    """Unnormalized log joint density at the current state (used to rank
    retained draws for the MAP report)."""
    W = assemble_W(state)
    resid = data.y - state.mu - data.X @ state.gamma
    tau2 = state.tau2
    total = -0.5 * data.n * np.log(2.0 * np.pi * tau2) - float(resid @ resid) / (2.0 * tau2)
    var = tau2 * state.s
    dev = state.gamma - W
    total += -0.5 * float(np.sum(np.log(2.0 * np.pi * var) + dev ** 2 / var))
    total += float(np.sum(np.log(state.theta / 2.0) - state.theta * state.s / 2.0))
    total += (hyper.zeta - 1.0) * np.log(state.theta) - hyper.iota * state.theta
    active = state.xi.astype(bool)
    for k in np.nonzero(active)[0]:
        total += log_mvn_density(state.u[:, k], np.zeros(hyper.R), state.M)
    total += float(xlogy(state.xi.sum(), state.delta)
                   + xlogy(state.xi.size - state.xi.sum(), 1.0 - state.delta))
    total += float(xlogy(hyper.a_delta - 1.0, state.delta)
                   + xlogy(hyper.b_delta - 1.0, 1.0 - state.delta))
    L = cholesky_lower(state.M, "latent covariance")
    logdet_M = 2.0 * float(np.sum(np.log(np.diag(L))))
    M_inv = _chol_inverse(L)
    total += -(hyper.nu + hyper.R + 1.0) / 2.0 * logdet_M - 0.5 * float(np.trace(M_inv))
    with np.errstate(divide="ignore"):
        for r in range(hyper.R):
            j = _LAM_VALUES.index(float(state.lam[r]))
            total += float(np.log(state.pi_tilde[r, j]))
            total += ((r + 1) ** hyper.eta - 1.0) * float(np.log(state.pi_tilde[r, 0]))
    total += -np.log(tau2)
    return float(total)


# ---------------------------------------------------------------------------
# chain driver and checkpointing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    """Burn-in/retention schedule shared by all chains of a run."""

    burn_in: int = 30_000
    retained: int = 20_000
    thinning: int = 1
    chains: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be nonnegative, got {self.burn_in}")
        for name in ("retained", "thinning", "chains"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class ChainResult:
    """Retained draws plus everything needed to resume the chain."""

    gamma: np.ndarray
    xi: np.ndarray
    mu: np.ndarray
    tau2: np.ndarray
    log_joint: np.ndarray
    final_state: ChainState
    rng_state: dict
    iterations: int
    chain_index: int = 0

    def checkpoint(self) -> "Checkpoint":
        return Checkpoint(
            state=self.final_state.copy(),
            rng_state=self.rng_state,
            iteration=self.iterations,
            chain_index=self.chain_index,
        )


def run_chain(data: NetworkDataset, hyper: Hyperparameters, burn_in: int,
              retained: int, rng, thinning: int = 1,
              initial_state: ChainState | None = None, start_iteration: int = 0,
              chain_index: int = 0) -> ChainResult:
    """Advance one chain by burn_in discarded sweeps then `retained` stored
    draws (every `thinning`-th sweep). Resuming from a checkpointed state and
    rng continues the exact draw sequence of an uninterrupted run."""
    precomp = ChainPrecomp.from_dataset(data)
    state = initial_state.copy() if initial_state is not None else init_state(data, hyper, rng)
    q, V = data.q, data.V
    gamma_out = np.empty((retained, q))
    xi_out = np.empty((retained, V), dtype=np.uint8)
    mu_out = np.empty(retained)
    tau2_out = np.empty(retained)
    lj_out = np.empty(retained)
    it = start_iteration
    try:
        for _ in range(burn_in):
            gibbs_step(state, data, hyper, rng, precomp)
            it += 1
        for m in range(retained):
            for _ in range(thinning):
                gibbs_step(state, data, hyper, rng, precomp)
                it += 1
            gamma_out[m] = state.gamma
            xi_out[m] = state.xi
            mu_out[m] = state.mu
            tau2_out[m] = state.tau2
            lj_out[m] = log_joint(state, data, hyper)
    except NumericalSingularityError as exc:
        raise NumericalSingularityError(
            f"chain {chain_index} failed at iteration {it + 1}: {exc}"
        ) from exc
    return ChainResult(
        gamma=gamma_out, xi=xi_out, mu=mu_out, tau2=tau2_out, log_joint=lj_out,
        final_state=state, rng_state=rng_state(rng), iterations=it,
        chain_index=chain_index,
    )


CHECKPOINT_MAGIC = b"NETREGCK"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    """Resumable snapshot of one chain.

    On disk: 8-byte magic ``NETREGCK``, little-endian uint32 version, then a
    pickled dict with keys (in this order): iteration, chain_index, rng_state,
    state (a dict of the ChainState fields in declaration order).
    """

    state: ChainState
    rng_state: dict
    iteration: int
    chain_index: int

    def save(self, path) -> None:
        payload = {
            "iteration": self.iteration,
            "chain_index": self.chain_index,
            "rng_state": self.rng_state,
            "state": {
                "gamma": self.state.gamma, "u": self.state.u, "xi": self.state.xi,
                "lam": self.state.lam, "pi_tilde": self.state.pi_tilde,
                "delta": self.state.delta, "M": self.state.M, "s": self.state.s,
                "theta": self.state.theta, "tau2": self.state.tau2, "mu": self.state.mu,
            },
        }
        blob = CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION) + pickle.dumps(payload, protocol=4)
        with open(path, "wb") as fh:
            fh.write(blob)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:8] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a chain checkpoint (bad magic)")
        (version,) = struct.unpack("<I", blob[8:12])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        payload = pickle.loads(blob[12:])
        return cls(
            state=ChainState(**payload["state"]),
            rng_state=payload["rng_state"],
            iteration=payload["iteration"],
            chain_index=payload["chain_index"],
        )


def resume_chain(checkpoint: Checkpoint, data: NetworkDataset, hyper: Hyperparameters,
                 burn_in: int, retained: int, thinning: int = 1) -> ChainResult:
    rng = rng_from_state(checkpoint.rng_state)
    return run_chain(
        data, hyper, burn_in, retained, rng, thinning=thinning,
        initial_state=checkpoint.state, start_iteration=checkpoint.iteration,
        chain_index=checkpoint.chain_index,
    )


def _chain_task(args) -> ChainResult:
    data, hyper, burn_in, retained, thinning, seed, chain_index, checkpoint = args
    if checkpoint is not None:
        return resume_chain(checkpoint, data, hyper, burn_in, retained, thinning)
    rng = rng_stream(seed, chain_index)
    return run_chain(data, hyper, burn_in, retained, rng, thinning=thinning,
                     chain_index=chain_index)


def run_chains(data: NetworkDataset, hyper: Hyperparameters, sweep: SweepConfig,
               workers: int = 1, checkpoints: list[Checkpoint] | None = None,
               burn_in: int | None = None):
    """Run (or resume) all chains and stack their draws.

    Chain c draws from the (seed, c) stream; results come back ordered by
    chain index whatever the completion order, so outputs are reproducible
    for any worker count. Returns (PosteriorDraws, checkpoints).
    """
    from .data import PosteriorDraws

    burn = sweep.burn_in if burn_in is None else burn_in
    if checkpoints is not None and len(checkpoints) != sweep.chains:
        raise ValueError(f"{len(checkpoints)} checkpoints for {sweep.chains} chains")
    tasks = [
        (data, hyper, burn, sweep.retained, sweep.thinning, sweep.seed, c,
         checkpoints[c] if checkpoints is not None else None)
        for c in range(sweep.chains)
    ]
    if workers > 1 and sweep.chains > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(workers, sweep.chains)) as pool:
            results = list(pool.map(_chain_task, tasks))
    else:
        results = [_chain_task(t) for t in tasks]
    draws = PosteriorDraws(
        gamma=np.stack([r.gamma for r in results]),
        xi=np.stack([r.xi for r in results]),
        mu=np.stack([r.mu for r in results]),
        tau2=np.stack([r.tau2 for r in results]),
        log_joint=np.stack([r.log_joint for r in results]),
    )
    return draws, [r.checkpoint() for r in results]
