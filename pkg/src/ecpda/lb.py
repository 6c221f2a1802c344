"""Leader-based controller placement by deterministic annealing (ECP-LB).

Controllers synchronize only with a leader, the centroid with the smallest
summed squared distance to the others. The synchronization term does not
depend on which centroid serves a node, so associations are plain Gibbs
weights of the node-centroid distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annealing import EMPTY_MASS, AnnealModel, RunResult, ScheduleConfig, anneal, boltzmann
from .ll import cluster_means
from .network import NetworkInstance, pairwise_sq_dists


@dataclass(frozen=True)
class LbIterationContext:
    node_centroid: np.ndarray
    centroid_centroid: np.ndarray
    leader: int
    mass: np.ndarray  # a_j, sums to N for a valid association matrix

    @classmethod
    def build(cls, x, w, y, assoc) -> "LbIterationContext":
        cc = pairwise_sq_dists(y, y)
        return cls(pairwise_sq_dists(x, y), cc, leader_index(cc), association_mass(assoc, w))


def leader_index(centroid_distances: np.ndarray) -> int:
    """Index minimizing the summed distance to all centroids (lowest index on ties)."""
    return int(np.argmin(np.asarray(centroid_distances).sum(axis=1)))


def lb_association_update(node_centroid_distances: np.ndarray, temperature: float) -> np.ndarray:
    return boltzmann(node_centroid_distances, temperature)


def association_mass(assoc: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``a_j = N * sum_i p(x_i) p(y_j | x_i)``; equals ``sum_i p(y_j | x_i)`` for uniform weights."""
    return weights.shape[0] * (weights @ assoc)


def lb_centroid_update(assoc: np.ndarray, x: np.ndarray, weights: np.ndarray, leader: int,
                       gamma: float) -> np.ndarray:
    """Solve the coupled follower / leader stationarity equations exactly.

    Followers satisfy ``y_j (gN + a_j) = gN y_l + b_j`` and the leader
    ``y_l ((m-1) gN + a_l) = gN sum_{j != l} y_j + b_l``. Eliminating the
    followers leaves a scalar-coefficient equation for ``y_l``. Everything is
    written with ``r_j = gN / a_j`` and the cluster means ``C_j = b_j / a_j``
    so that ``gamma = 0`` reproduces ``C_j`` exactly.

    A leader without mass (``a_l = 0``, possible when it sits between
    clusters) is allowed for ``gamma > 0``: its equation then places it at the
    ``a_j / (gN + a_j)``-weighted mean of the follower means.
    """
    n = weights.shape[0]
    m = assoc.shape[1]
    a = association_mass(assoc, weights)
    g = gamma * n
    others = np.arange(m) != leader
    if m > 1 and g > 0 and (weights @ assoc)[leader] < EMPTY_MASS:
        means_o = cluster_means(assoc[:, others], weights, x)
        r = g / a[others]
        frac = 1.0 / (1.0 + r)
        y_lead = (frac @ means_o) / frac.sum()
        y = np.empty((m, x.shape[1]))
        y[others] = (r[:, None] * y_lead + means_o) / (r[:, None] + 1.0)
        y[leader] = y_lead
        return y
    means = cluster_means(assoc, weights, x)
    if m == 1:
        return means.copy()
    r = g / a
    frac = 1.0 / (1.0 + r[others])
    num = r[leader] * (frac @ means[others]) + means[leader]
    den = 1.0 + r[leader] * frac.sum()
    y_lead = num / den
    y = (r[:, None] * y_lead + means) / (r[:, None] + 1.0)
    y[leader] = y_lead
    return y


def lb_residual(y: np.ndarray, assoc: np.ndarray, x: np.ndarray, weights: np.ndarray,
                leader: int, gamma: float) -> float:
    """Relative residual of the follower and leader equations at ``y``."""
    n = weights.shape[0]
    m = y.shape[0]
    a = association_mass(assoc, weights)
    b = n * (assoc * weights[:, None]).T @ x
    g = gamma * n
    res = np.empty_like(y)
    scale = np.empty(m)
    for j in range(m):
        if j == leader:
            lhs = y[j] * ((m - 1) * g + a[j])
            rhs = g * (y.sum(axis=0) - y[j]) + b[j]
        else:
            lhs = y[j] * (g + a[j])
            rhs = g * y[leader] + b[j]
        res[j] = lhs - rhs
        scale[j] = max(np.linalg.norm(lhs), np.linalg.norm(rhs))
    return float(np.linalg.norm(res) / max(np.linalg.norm(scale), np.finfo(float).tiny))


class LeaderBasedModel(AnnealModel):
    mode = "lb"

    def association_costs(self, x, y):
        return pairwise_sq_dists(x, y)

    def protected(self, y):
        if self.gamma > 0 and y.shape[0] > 1:
            return leader_index(pairwise_sq_dists(y, y))
        return None

    def update(self, x, w, p, y):
        return lb_centroid_update(p, x, w, leader_index(pairwise_sq_dists(y, y)), self.gamma)

    def distortion(self, x, w, p, y):
        delay = float(w @ np.sum(p * pairwise_sq_dists(x, y), axis=1))
        return delay + self.gamma * float(pairwise_sq_dists(y, y).sum(axis=1).min())

    def sync_cost(self, y, counts):
        return self.n_nodes * float(pairwise_sq_dists(y, y).sum(axis=1).min())


def run_ecp_lb(instance: NetworkInstance, config: ScheduleConfig = ScheduleConfig(),
               seed=None) -> RunResult:
    return anneal(instance, config, LeaderBasedModel(instance.gamma, instance.n), seed)
