"""Synthetic-data generators and the real-data network construction helpers.

Four phenotype generators share one skeleton: simulate a random phylogenetic
tree over d microbes, pick per-sample subsets of k microbes, build adjacency
matrices from inverse tree distances on each subset, and compute the response
under the chosen model (direct edge effects, additive main effects, main plus
interaction effects, or the interaction response capped at a redundancy
threshold). Fixed draw order per replicate: tree, node flags, coefficients,
per-sample subsets, then the noise vector, so a seed reproduces everything.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import NetworkDataset, frobenius_inner, triu_pairs

SIM_KINDS = ("theoretical", "additive", "interaction", "redundancy")
COEFFICIENT_KINDS = ("random", "phylogenetic")

# redundancy response caps keyed by (node-influence probability, effect mean)
REDUNDANCY_CAPS = {
    (0.3, 0.8): 3.0,
    (0.3, 1.6): 7.0,
    (0.8, 0.8): 22.0,
    (0.8, 1.6): 30.0,
}


def default_redundancy_cap(pi: float, mu: float) -> float:
    try:
        return REDUNDANCY_CAPS[(pi, mu)]
    except KeyError:
        raise ValueError(
            f"no default response cap for pi={pi}, mu={mu}; set L explicitly"
        ) from None


@dataclass(frozen=True)
class PhyloTree:
    """Rooted binary tree; node 0 is the root, every other node carries the
    length of the edge above it. Leaf order is microbe order."""

    parent: np.ndarray
    length: np.ndarray
    leaves: np.ndarray

    @property
    def d(self) -> int:
        return self.leaves.size

    @property
    def n_nodes(self) -> int:
        return self.parent.size

    def depths(self) -> np.ndarray:
        """Root-to-node path lengths; parents precede children by id."""
        depth = np.zeros(self.n_nodes)
        for v in range(1, self.n_nodes):
            depth[v] = depth[self.parent[v]] + self.length[v]
        return depth

    def leaf_ancestor_depth(self) -> np.ndarray:
        """(d, d) matrix of most-recent-common-ancestor depths between leaves."""
        depth = self.depths()
        ancestors = []
        for leaf in self.leaves:
            chain = {}
            v = int(leaf)
            while v != 0:
                chain[v] = depth[v]
                v = int(self.parent[v])
            chain[0] = 0.0
            ancestors.append(chain)
        d = self.d
        mrca = np.zeros((d, d))
        for i in range(d):
            mrca[i, i] = depth[self.leaves[i]]
            for j in range(i + 1, d):
                v = int(self.leaves[j])
                while v not in ancestors[i]:
                    v = int(self.parent[v])
                mrca[i, j] = mrca[j, i] = ancestors[i][v] if v != 0 else 0.0
        return mrca


def simulate_tree(d: int, rng) -> PhyloTree:
    """Random d-leaf tree grown by splitting a uniformly chosen edge with a
    new leaf until d leaves exist; branch lengths are then Uniform(0, 1)."""
    if d < 2:
        raise ValueError(f"need at least 2 leaves, got {d}")
    parent = [-1, 0, 0]
    leaves = [1, 2]
    edge_nodes = [1, 2]  # every non-root node owns the edge above it
    while len(leaves) < d:
        child = edge_nodes[int(rng.integers(len(edge_nodes)))]
        mid = len(parent)
        parent.append(parent[child])  # new internal node takes over the edge
        parent[child] = mid
        new_leaf = len(parent)
        parent.append(mid)
        leaves.append(new_leaf)
        edge_nodes.extend([mid, new_leaf])
    parent = np.asarray(parent, dtype=np.intp)
    length = np.zeros(parent.size)
    length[1:] = rng.uniform(0.0, 1.0, size=parent.size - 1)
    return PhyloTree(parent=parent, length=length, leaves=np.asarray(leaves, dtype=np.intp))


def tree_distances(tree: PhyloTree) -> np.ndarray:
    """Pairwise path lengths between leaves (zero diagonal, symmetric)."""
    depth = tree.depths()
    mrca = tree.leaf_ancestor_depth()
    leaf_depth = depth[tree.leaves]
    dist = leaf_depth[:, None] + leaf_depth[None, :] - 2.0 * mrca
    np.fill_diagonal(dist, 0.0)
    return dist


def phylo_covariance(tree: PhyloTree) -> np.ndarray:
    """Brownian-motion trait covariance: shared root-path length per pair."""
    return tree.leaf_ancestor_depth()


def sample_adjacency(tree: PhyloTree, subset, distances: np.ndarray | None = None) -> np.ndarray:
    """Adjacency over the full node set with 1/distance entries on the
    sampled subset's pairs and zeros elsewhere."""
    subset = np.asarray(subset, dtype=np.intp)
    if np.unique(subset).size != subset.size:
        raise ValueError("sampled microbes must be distinct")
    if distances is None:
        distances = tree_distances(tree)
    d = distances.shape[0]
    if np.any(subset < 0) or np.any(subset >= d):
        raise ValueError("subset index out of range")
    A = np.zeros((d, d))
    idx = np.ix_(subset, subset)
    with np.errstate(divide="ignore"):
        block = 1.0 / distances[idx]
    np.fill_diagonal(block, 0.0)
    A[idx] = block
    return A


@dataclass(frozen=True)
class SimConfig:
    """One replicate's generator settings."""

    kind: str
    n: int
    d: int = 30
    k: int = 8
    pi: float = 0.8
    mu: float = 1.6
    coefficients: str = "random"
    L: float | None = None
    count_pairs_once: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SIM_KINDS:
            raise ValueError(f"kind must be one of {SIM_KINDS}, got {self.kind!r}")
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not 2 <= self.k <= self.d:
            raise ValueError(f"need 2 <= k <= d, got k={self.k}, d={self.d}")
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError(f"pi must be in [0, 1], got {self.pi}")
        if self.coefficients not in COEFFICIENT_KINDS:
            raise ValueError(
                f"coefficients must be one of {COEFFICIENT_KINDS}, got {self.coefficients!r}"
            )
        if self.kind == "redundancy" and self.L is None:
            object.__setattr__(self, "L", default_redundancy_cap(self.pi, self.mu))
        if self.kind != "redundancy" and self.L is not None:
            raise ValueError("L only applies to the redundancy model")


@dataclass
class SimTruth:
    """Ground truth retained alongside a generated dataset."""

    xi_true: np.ndarray
    K_star: np.ndarray
    noise: np.ndarray
    B_true: np.ndarray | None = None
    b_main: np.ndarray | None = None
    b_pair: np.ndarray | None = None
    gamma_true: np.ndarray = field(default=None)  # effective per-edge coefficient
    edge_influential: np.ndarray = field(default=None)

    def node_influential(self) -> np.ndarray:
        return self.xi_true.astype(bool)


def _sample_subsets(d: int, k: int, n: int, rng) -> np.ndarray:
    out = np.empty((n, k), dtype=np.intp)
    for i in range(n):
        out[i] = np.sort(rng.choice(d, size=k, replace=False))
    return out


def _adjacency_stack(distances: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    n, d = subsets.shape[0], distances.shape[0]
    A = np.zeros((n, d, d))
    with np.errstate(divide="ignore"):
        inv = 1.0 / distances
    np.fill_diagonal(inv, 0.0)
    for i in range(n):
        idx = np.ix_(subsets[i], subsets[i])
        A[i][idx] = inv[idx]
    return A


def _main_effects(config: SimConfig, tree: PhyloTree, rng) -> np.ndarray:
    if config.coefficients == "random":
        return rng.normal(config.mu, 1.0, size=config.d)
    cov = phylo_covariance(tree)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky(cov + 1e-12 * np.eye(config.d))
    return config.mu + L @ rng.standard_normal(config.d)


def gen_theoretical(config: SimConfig, rng) -> tuple[NetworkDataset, SimTruth]:
    """Edge-effect generator: response is the Frobenius product of the sample
    adjacency with a sparse symmetric coefficient matrix, plus unit noise."""
    d = config.d
    tree = simulate_tree(d, rng)
    distances = tree_distances(tree)
    xi = (rng.random(d) < config.pi).astype(np.int8)
    iu = triu_pairs(d)
    raw = rng.normal(config.mu, 1.0, size=iu[0].size)
    mask = (xi[iu[0]] & xi[iu[1]]).astype(float)
    B = np.zeros((d, d))
    B[iu] = raw * mask
    B += B.T
    subsets = _sample_subsets(d, config.k, config.n, rng)
    A = _adjacency_stack(distances, subsets)
    noise = rng.standard_normal(config.n)
    y = np.array([frobenius_inner(A[i], B) for i in range(config.n)]) + noise
    truth = SimTruth(
        xi_true=xi, K_star=subsets, noise=noise, B_true=B,
        gamma_true=2.0 * B[iu], edge_influential=mask.astype(bool),
    )
    return NetworkDataset(y=y, A=A), truth


def _realistic_parts(config: SimConfig, rng):
    """Shared front half of the realistic generators, in fixed draw order."""
    tree = simulate_tree(config.d, rng)
    distances = tree_distances(tree)
    xi = (rng.random(config.d) < config.pi).astype(np.int8)
    b_main = _main_effects(config, tree, rng)
    return tree, distances, xi, b_main


def _additive_signal(xi, b_main, subsets, d) -> np.ndarray:
    member = np.zeros((subsets.shape[0], d))
    rows = np.repeat(np.arange(subsets.shape[0]), subsets.shape[1])
    member[rows, subsets.ravel()] = 1.0
    return member @ (b_main * xi)


def gen_additive(config: SimConfig, rng) -> tuple[NetworkDataset, SimTruth]:
    """Main-effects-only generator: no true edge effects at all."""
    tree, distances, xi, b_main = _realistic_parts(config, rng)
    subsets = _sample_subsets(config.d, config.k, config.n, rng)
    A = _adjacency_stack(distances, subsets)
    noise = rng.standard_normal(config.n)
    y = _additive_signal(xi, b_main, subsets, config.d) + noise
    q = triu_pairs(config.d)[0].size
    truth = SimTruth(
        xi_true=xi, K_star=subsets, noise=noise, b_main=b_main,
        gamma_true=np.zeros(q), edge_influential=np.zeros(q, dtype=bool),
    )
    return NetworkDataset(y=y, A=A), truth


def _interaction_signal(config, xi, b_main, b_pair, A, subsets) -> np.ndarray:
    base = _additive_signal(xi, b_main, subsets, config.d)
    xi_outer = np.outer(xi, xi).astype(float)
    if config.count_pairs_once:
        weights = np.triu(b_pair, k=1) * xi_outer
    else:
        weights = b_pair * xi_outer  # full grid: each pair enters twice
    inter = np.einsum("nij,ij->n", A, weights)
    return base + inter


def _interaction_truth(config, xi, b_pair) -> tuple[np.ndarray, np.ndarray]:
    iu = triu_pairs(config.d)
    both = (xi[iu[0]] & xi[iu[1]]).astype(float)
    if config.count_pairs_once:
        gamma_true = b_pair[iu] * both
    else:
        gamma_true = (b_pair[iu] + b_pair.T[iu]) * both
    return gamma_true, both.astype(bool)


def gen_interaction(config: SimConfig, rng) -> tuple[NetworkDataset, SimTruth]:
    """Additive generator plus pairwise effects weighted by the adjacency."""
    tree, distances, xi, b_main = _realistic_parts(config, rng)
    b_pair = rng.normal(0.4, 1.0, size=(config.d, config.d))
    subsets = _sample_subsets(config.d, config.k, config.n, rng)
    A = _adjacency_stack(distances, subsets)
    noise = rng.standard_normal(config.n)
    y = _interaction_signal(config, xi, b_main, b_pair, A, subsets) + noise
    gamma_true, edge_flags = _interaction_truth(config, xi, b_pair)
    truth = SimTruth(
        xi_true=xi, K_star=subsets, noise=noise, b_main=b_main, b_pair=b_pair,
        gamma_true=gamma_true, edge_influential=edge_flags,
    )
    return NetworkDataset(y=y, A=A), truth


def gen_redundant(config: SimConfig, rng) -> tuple[NetworkDataset, SimTruth]:
    """Interaction generator with the response capped at the threshold L."""
    tree, distances, xi, b_main = _realistic_parts(config, rng)
    b_pair = rng.normal(0.4, 1.0, size=(config.d, config.d))
    subsets = _sample_subsets(config.d, config.k, config.n, rng)
    A = _adjacency_stack(distances, subsets)
    noise = rng.standard_normal(config.n)
    y = _interaction_signal(config, xi, b_main, b_pair, A, subsets) + noise
    y = np.minimum(y, config.L)
    gamma_true, edge_flags = _interaction_truth(config, xi, b_pair)
    truth = SimTruth(
        xi_true=xi, K_star=subsets, noise=noise, b_main=b_main, b_pair=b_pair,
        gamma_true=gamma_true, edge_influential=edge_flags,
    )
    return NetworkDataset(y=y, A=A), truth


GENERATORS = {
    "theoretical": gen_theoretical,
    "additive": gen_additive,
    "interaction": gen_interaction,
    "redundancy": gen_redundant,
}


def generate(config: SimConfig, rng) -> tuple[NetworkDataset, SimTruth]:
    return GENERATORS[config.kind](config, rng)


# ---------------------------------------------------------------------------
# real-data helpers: sample networks from a meta-network, and augmentation
# ---------------------------------------------------------------------------

def build_sample_networks(meta_network: np.ndarray, presence: np.ndarray) -> np.ndarray:
    """Per-sample adjacency stack keeping a meta-network edge exactly when
    both endpoints are present in the sample."""
    meta = np.asarray(meta_network, dtype=float)
    presence = np.asarray(presence, dtype=bool)
    if meta.ndim != 2 or meta.shape[0] != meta.shape[1]:
        raise ValueError(f"meta-network must be square, got {meta.shape}")
    if not np.allclose(meta, meta.T):
        raise ValueError("meta-network must be symmetric")
    if presence.ndim != 2 or presence.shape[1] != meta.shape[0]:
        raise ValueError(
            f"presence is {presence.shape} but meta-network has {meta.shape[0]} nodes"
        )
    meta = meta.copy()
    np.fill_diagonal(meta, 0.0)
    mask = presence[:, :, None] & presence[:, None, :]
    return meta[None, :, :] * mask


def augment_dataset(y: np.ndarray, presence: np.ndarray, meta_network: np.ndarray,
                    rng) -> tuple[NetworkDataset, np.ndarray]:
    """Double a real dataset: per original sample, one augmented sample with a
    jittered response and independently flipped presence flags.

    The response offset is N(0, s^2/4) for s^2 the sample response variance; a
    would-be-negative augmented response is replaced by a (1/15) chi-square(3)
    draw. Presence carries over with probability 0.9 (0.1 for absent microbes)
    and sample networks are rebuilt from the meta-network.
    """
    y = np.asarray(y, dtype=float).ravel()
    presence = np.asarray(presence, dtype=bool)
    n = y.size
    if presence.shape[0] != n:
        raise ValueError(f"{n} responses but {presence.shape[0]} presence rows")
    s2 = float(np.var(y, ddof=1)) if n > 1 else 0.0
    y_aug = y + rng.normal(0.0, np.sqrt(s2 / 4.0), size=n)
    negative = y_aug < 0.0
    if np.any(negative):
        y_aug[negative] = rng.chisquare(3, size=int(negative.sum())) / 15.0
    keep = np.where(presence, 0.9, 0.1)
    presence_aug = rng.random(presence.shape) < keep
    presence_all = np.vstack([presence, presence_aug])
    A_all = build_sample_networks(meta_network, presence_all)
    return NetworkDataset(y=np.concatenate([y, y_aug]), A=A_all), presence_all
