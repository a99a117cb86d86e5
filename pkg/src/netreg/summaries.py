"""Post-processing of retained draws into reportable quantities.

Everything here pools draws across chains: node posterior probabilities are
inclusion-flag means, edge intervals are equal-tailed quantiles of the edge
coefficients, and the coefficient-matrix point estimates come in two flavors
(highest-scoring retained draw and posterior mean, labeled distinctly).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import NetworkDataset, PosteriorDraws, gamma_to_B, triu_pairs

DEFAULT_CREDIBLE_LEVEL = 0.95
DEFAULT_PP_THRESHOLD = 0.5


def node_posterior_probability(draws: PosteriorDraws) -> np.ndarray:
    """Posterior probability each node is influential: mean inclusion flag."""
    xi = draws.xi
    if xi.size == 0:
        raise ValueError("no retained draws")
    return xi.reshape(-1, draws.V).mean(axis=0)


def edge_credible_intervals(draws: PosteriorDraws,
                            level: float = DEFAULT_CREDIBLE_LEVEL):
    """Equal-tailed credible interval per edge coefficient, pooled chains.

    Returns (lower, upper, influential) where an edge is flagged influential
    exactly when its interval excludes zero.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"credible level must be in (0, 1), got {level}")
    pooled = draws.gamma.reshape(-1, draws.q)
    if pooled.shape[0] == 0:
        raise ValueError("no retained draws")
    alpha = (1.0 - level) / 2.0
    lower, upper = np.quantile(pooled, [alpha, 1.0 - alpha], axis=0)
    influential = (lower > 0.0) | (upper < 0.0)
    return lower, upper, influential


def map_estimate_B(draws: PosteriorDraws) -> np.ndarray:
    """Coefficient matrix of the retained draw with the highest stored log
    joint density; falls back to the posterior mean when no scores were kept."""
    if draws.gamma.shape[1] == 0:
        raise ValueError("no retained draws")
    if draws.log_joint is None:
        return posterior_mean_B(draws)
    flat_gamma = draws.gamma.reshape(-1, draws.q)
    best = int(np.argmax(draws.log_joint.reshape(-1)))
    return gamma_to_B(flat_gamma[best])


def posterior_mean_B(draws: PosteriorDraws) -> np.ndarray:
    return gamma_to_B(draws.gamma.reshape(-1, draws.q).mean(axis=0))


@dataclass
class ClassificationRates:
    """False positive/negative rates for edges and nodes; a rate with an
    empty denominator is NaN (not applicable), never 0/0."""

    edge_fpr: float
    edge_fnr: float
    node_fpr: float
    node_fnr: float


def _rate(count: int, denom: int) -> float:
    return count / denom if denom else math.nan


@dataclass
class SummaryReport:
    """Everything the reports emit for one fitted run."""

    node_pp: np.ndarray
    edge_lower: np.ndarray
    edge_upper: np.ndarray
    edge_influential: np.ndarray
    B_map: np.ndarray
    B_mean: np.ndarray
    credible_level: float = DEFAULT_CREDIBLE_LEVEL

    def __post_init__(self):
        if np.any(self.node_pp < 0) or np.any(self.node_pp > 1):
            raise ValueError("node posterior probabilities outside [0, 1]")
        if np.any(self.edge_lower > self.edge_upper):
            raise ValueError("credible interval with lower > upper")


def build_summary(draws: PosteriorDraws,
                  level: float = DEFAULT_CREDIBLE_LEVEL) -> SummaryReport:
    lower, upper, influential = edge_credible_intervals(draws, level)
    return SummaryReport(
        node_pp=node_posterior_probability(draws),
        edge_lower=lower,
        edge_upper=upper,
        edge_influential=influential,
        B_map=map_estimate_B(draws),
        B_mean=posterior_mean_B(draws),
        credible_level=level,
    )


def classification_rates(summary: SummaryReport, truth_edges: np.ndarray,
                         truth_nodes: np.ndarray,
                         pp_threshold: float = DEFAULT_PP_THRESHOLD) -> ClassificationRates:
    """Confusion rates of the edge CI rule and the node PP rule against truth."""
    truth_edges = np.asarray(truth_edges, dtype=bool)
    truth_nodes = np.asarray(truth_nodes, dtype=bool)
    if truth_edges.size != summary.edge_influential.size:
        raise ValueError(
            f"{truth_edges.size} edge truths for {summary.edge_influential.size} edges"
        )
    if truth_nodes.size != summary.node_pp.size:
        raise ValueError(
            f"{truth_nodes.size} node truths for {summary.node_pp.size} nodes"
        )
    edge_called = summary.edge_influential
    node_called = summary.node_pp > pp_threshold
    return ClassificationRates(
        edge_fpr=_rate(int(np.sum(edge_called & ~truth_edges)), int(np.sum(~truth_edges))),
        edge_fnr=_rate(int(np.sum(~edge_called & truth_edges)), int(np.sum(truth_edges))),
        node_fpr=_rate(int(np.sum(node_called & ~truth_nodes)), int(np.sum(~truth_nodes))),
        node_fnr=_rate(int(np.sum(~node_called & truth_nodes)), int(np.sum(truth_nodes))),
    )


def mse_metrics(draws: PosteriorDraws, truth_B: np.ndarray,
                data: NetworkDataset) -> tuple[float, float]:
    """(coefficient MSE, response MSE) of the posterior-mean estimates.

    Coefficient error compares the posterior mean of each halved edge
    coefficient against the true matrix entry over k < l; response error
    compares fitted means against the observed responses.
    """
    truth_B = np.asarray(truth_B, dtype=float)
    if truth_B.shape != (data.V, data.V):
        raise ValueError(f"truth matrix {truth_B.shape} does not match V={data.V}")
    gamma_hat = draws.gamma.reshape(-1, draws.q).mean(axis=0)
    if draws.mu is None:
        raise ValueError("response MSE needs retained intercept draws")
    mu_hat = float(draws.mu.mean())
    iu = triu_pairs(data.V)
    coef_mse = float(np.mean((gamma_hat / 2.0 - truth_B[iu]) ** 2))
    fitted = mu_hat + data.X @ gamma_hat
    response_mse = float(np.mean((fitted - data.y) ** 2))
    return coef_mse, response_mse
