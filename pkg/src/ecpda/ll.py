"""Leader-less controller placement by deterministic annealing (ECP-LL).

Every centroid pays a synchronization penalty proportional to its summed
squared distance to all other centroids, so the distortion of serving node
``x_i`` from centroid ``y_j`` is ``d(x_i, y_j) + gamma * s_j`` with
``s_j = sum_k d(y_j, y_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annealing import EMPTY_MASS, AnnealModel, RunResult, ScheduleConfig, anneal, boltzmann
from .network import NetworkInstance, pairwise_sq_dists


class DegenerateClusterError(ValueError):
    """A centroid has (numerically) zero posterior mass."""


@dataclass(frozen=True)
class LlIterationContext:
    node_centroid: np.ndarray  # N x m squared distances
    centroid_centroid: np.ndarray  # m x m squared distances

    @classmethod
    def build(cls, x: np.ndarray, y: np.ndarray) -> "LlIterationContext":
        return cls(pairwise_sq_dists(x, y), pairwise_sq_dists(y, y))

    @property
    def sync_penalty(self) -> np.ndarray:
        return self.centroid_centroid.sum(axis=1)


def ll_distortion(i: int, j: int, context: LlIterationContext, gamma: float) -> float:
    return float(context.node_centroid[i, j] + gamma * context.sync_penalty[j])


def ll_distortion_matrix(context: LlIterationContext, gamma: float) -> np.ndarray:
    return context.node_centroid + gamma * context.sync_penalty[None, :]


def ll_association_update(context: LlIterationContext, gamma: float, temperature: float) -> np.ndarray:
    return boltzmann(ll_distortion_matrix(context, gamma), temperature)


def posterior(assoc: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Bayes posterior ``p(x_i | y_j)``; columns sum to one."""
    joint = assoc * weights[:, None]
    mass = joint.sum(axis=0)
    if np.any(mass < EMPTY_MASS):
        bad = np.flatnonzero(mass < EMPTY_MASS).tolist()
        raise DegenerateClusterError(f"centroid(s) {bad} have no posterior mass")
    return joint / mass


def cluster_means(assoc: np.ndarray, weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``C_j = sum_i p(x_i | y_j) x_i`` for every centroid (m x d)."""
    return posterior(assoc, weights).T @ x


def ll_centroid_solve(means: np.ndarray, gamma: float) -> np.ndarray:
    """Solve ``eta*y_j - gamma*sum_{k != j} y_k = C_j`` with ``eta = gamma*(m-1) + 1``.

    Summing the m equations gives ``sum_j y_j = sum_j C_j``; substituting back
    yields ``y_j = (C_j + gamma * sum_k C_k) / (gamma*m + 1)``.
    """
    m = means.shape[0]
    return (means + gamma * means.sum(axis=0)) / (gamma * m + 1.0)


def ll_weighted_centroid_solve(means: np.ndarray, mass: np.ndarray, gamma: float) -> np.ndarray:
    """Exact minimizer of the leader-less free energy over the centroids.

    Stationarity of ``sum_j a_j [|y_j - C_j|^2 + gamma * s_j]`` gives
    ``a_j (y_j - C_j) + gamma * sum_k (a_j + a_k)(y_j - y_k) = 0``, i.e.
    ``(diag(a) + gamma*L) Y = diag(a) C`` with L the graph Laplacian of the
    weights ``a_j + a_k``. Dividing row j by ``a_j`` and replacing
    ``(a_j + a_k)/a_j`` by 1 recovers :func:`ll_centroid_solve`. The system is
    solved for the offset ``Y - C`` so that ``gamma = 0`` returns ``C`` exactly.
    """
    coupling = mass[:, None] + mass[None, :]
    np.fill_diagonal(coupling, 0.0)
    lap = np.diag(coupling.sum(axis=1)) - coupling
    offset = np.linalg.solve(np.diag(mass) + gamma * lap, -gamma * (lap @ means))
    return means + offset


def ll_coefficient_matrix(m: int, d: int, gamma: float) -> np.ndarray:
    """md x md block matrix with ``eta*I`` on the diagonal and ``-gamma*I`` elsewhere."""
    eta = gamma * (m - 1) + 1.0
    blocks = np.full((m, m), -gamma)
    np.fill_diagonal(blocks, eta)
    return np.kron(blocks, np.eye(d))


def ll_centroid_solve_dense(means: np.ndarray, gamma: float) -> np.ndarray:
    m, d = means.shape
    sol = np.linalg.solve(ll_coefficient_matrix(m, d, gamma), means.reshape(-1))
    return sol.reshape(m, d)


def ll_coefficient_determinant(m: int, d: int, gamma: float) -> float:
    if m < 1 or d < 1:
        raise ValueError("m and d must be positive")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return float(np.linalg.det(ll_coefficient_matrix(m, d, gamma)))


def ll_determinant_closed_form(m: int, d: int, gamma: float) -> float:
    # eigenvalue 1 (multiplicity d) and gamma*m + 1 (multiplicity (m-1)*d)
    return float((gamma * m + 1.0) ** ((m - 1) * d))


CENTROID_RULES = ("exact", "unweighted")


class LeaderLessModel(AnnealModel):
    """``centroid_rule="exact"`` minimizes the free energy over the centroids
    (monotone descent); ``"unweighted"`` uses the system of
    :func:`ll_centroid_solve`, which does not guarantee descent."""

    mode = "ll"

    def __init__(self, gamma, n_nodes, centroid_rule="exact"):
        super().__init__(gamma, n_nodes)
        if centroid_rule not in CENTROID_RULES:
            raise ValueError(f"unknown centroid rule {centroid_rule!r}")
        self.centroid_rule = centroid_rule

    def association_costs(self, x, y):
        return ll_distortion_matrix(LlIterationContext.build(x, y), self.gamma)

    def update(self, x, w, p, y):
        means = cluster_means(p, w, x)
        if self.centroid_rule == "unweighted":
            return ll_centroid_solve(means, self.gamma)
        return ll_weighted_centroid_solve(means, w @ p, self.gamma)

    def distortion(self, x, w, p, y):
        return float(w @ np.sum(p * self.association_costs(x, y), axis=1))

    def sync_cost(self, y, counts):
        return float(counts @ pairwise_sq_dists(y, y).sum(axis=1))


def run_ecp_ll(instance: NetworkInstance, config: ScheduleConfig = ScheduleConfig(),
               seed=None, centroid_rule: str = "exact") -> RunResult:
    """Anneal a leader-less placement.

    Unpacks as ``placement, trace``; the full :class:`RunResult` also holds the
    objective of the unprojected centroids.
    """
    model = LeaderLessModel(instance.gamma, instance.n, centroid_rule)
    return anneal(instance, config, model, seed)
