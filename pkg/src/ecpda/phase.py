"""Critical temperatures of the leader-less annealer.

At a given temperature the centroid configuration is stable while the matrix

    M(T) = sum_i p(x_i) [ Lambda_i (1 + m*gamma) + gamma*I - 2*gamma*Gamma_i^T E - (2/T) Theta_i ]

stays nonsingular; a phase transition (a centroid splitting) happens where
``det M(T)`` changes sign. The scan below equilibrates a configuration at each
grid temperature, watches the sign of ``det M`` and bisects every sign change.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .annealing import (
    ScheduleConfig,
    effective_count,
    equilibrate,
    initialize,
    merge_coincident,
    split_centroids,
    split_order,
)
from .ll import LeaderLessModel
from .network import NetworkInstance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HessianBlocks:
    """Per-node matrices of the second-order condition (m centroids in d dims).

    ``lam[i]`` is ``Lambda_i`` (md x md, diagonal), ``gamma_mat[i]`` is
    ``Gamma_i = sum_j p(y_j|x_i) E_j`` (d x md), ``theta[i]`` is
    ``Theta_i = sum_j p(y_j|x_i) T_ji^T T_ji`` (md x md) and ``t_rows[i, j]``
    is the row vector ``T_ji``.
    """

    lam: np.ndarray
    gamma_mat: np.ndarray
    theta: np.ndarray
    t_rows: np.ndarray
    selectors: np.ndarray  # E_j, m x d x md
    E: np.ndarray  # d x md

    @property
    def m(self) -> int:
        return self.selectors.shape[0]

    @property
    def d(self) -> int:
        return self.E.shape[0]


def selector_matrices(m: int, d: int) -> np.ndarray:
    return np.stack([np.kron(np.eye(m)[j][None, :], np.eye(d)) for j in range(m)])


def build_blocks(instance: NetworkInstance, centroids: np.ndarray, assoc: np.ndarray,
                 gamma: float) -> HessianBlocks:
    x = instance.positions
    y = np.asarray(centroids, dtype=float)
    p = np.asarray(assoc, dtype=float)
    n, d = x.shape
    m = y.shape[0]
    if y.shape[1] != d or p.shape != (n, m):
        raise ValueError(f"shape mismatch: x {x.shape}, y {y.shape}, assoc {p.shape}")
    md = m * d
    sel = selector_matrices(m, d)
    E = np.kron(np.ones((1, m)), np.eye(d))

    lam = np.zeros((n, md, md))
    idx = np.arange(md)
    lam[:, idx, idx] = np.repeat(p, d, axis=1)
    gamma_mat = np.einsum("ij,jab->iab", p, sel)

    # coupling part of T_ji: gamma * sum_k (y_j - y_k)^T (E_j - E_k), independent of i
    diff = y[:, None, :] - y[None, :, :]  # (j, k, d)
    coupling = np.zeros((m, m, d))  # row j, block k
    coupling[np.arange(m), np.arange(m)] = gamma * diff.sum(axis=1)
    off = ~np.eye(m, dtype=bool)
    coupling[off] = -gamma * diff[off]
    t_rows = np.broadcast_to(coupling.reshape(1, m, md), (n, m, md)).copy()
    for j in range(m):
        t_rows[:, j, j * d:(j + 1) * d] += y[j] - x
    theta = np.einsum("ij,ija,ijb->iab", p, t_rows, t_rows)
    return HessianBlocks(lam, gamma_mat, theta, t_rows, sel, E)


def critical_matrix(blocks: HessianBlocks, weights: np.ndarray, temperature: float,
                    gamma: float) -> np.ndarray:
    """``M(T)`` exactly as written; it need not be symmetric when gamma > 0."""
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    m = blocks.m
    md = m * blocks.d
    gte = np.einsum("iam,an->imn", blocks.gamma_mat, blocks.E)  # Gamma_i^T E
    per_node = (blocks.lam * (1.0 + m * gamma) + gamma * np.eye(md)
                - 2.0 * gamma * gte - (2.0 / temperature) * blocks.theta)
    return np.einsum("i,iab->ab", weights, per_node)


def _det(mat: np.ndarray) -> float:
    sign, logabs = np.linalg.slogdet(mat)
    if sign == 0:
        return 0.0
    with np.errstate(over="ignore"):
        return float(sign * np.exp(logabs))


@dataclass
class PhaseScanResult:
    temperatures: List[float] = field(default_factory=list)
    dets: List[float] = field(default_factory=list)
    sym_dets: List[float] = field(default_factory=list)
    effective_centroids: List[int] = field(default_factory=list)
    critical_temperatures: List[float] = field(default_factory=list)
    brackets: List[tuple] = field(default_factory=list)

    def rows(self):
        return zip(self.temperatures, self.dets, self.effective_centroids)


def default_grid(t_max: float, t_min: float, points: int = 64) -> np.ndarray:
    return np.geomspace(t_max, t_min, points)


class _Scanner:
    def __init__(self, instance, sched, gamma):
        self.instance = instance
        self.sched = sched
        self.gamma = gamma
        self.model = LeaderLessModel(gamma, instance.n)
        self.x = instance.positions
        self.w = instance.weights

    def evaluate(self, config_y, temperature):
        y, p, _ = equilibrate(self.model, self.x, self.w, config_y, temperature, self.sched)
        blocks = build_blocks(self.instance, y, p, self.gamma)
        mat = critical_matrix(blocks, self.w, temperature, self.gamma)
        return _det(mat), _det(0.5 * (mat + mat.T)), y

    def bisect(self, config_y, t_hi, det_hi, t_lo, rel_tol):
        while t_hi - t_lo > rel_tol * t_hi:
            mid = 0.5 * (t_hi + t_lo)
            det_mid = self.evaluate(config_y, mid)[0]
            if np.sign(det_mid) == np.sign(det_hi):
                t_hi, det_hi = mid, det_mid
            else:
                t_lo = mid
        return 0.5 * (t_hi + t_lo)


def find_critical_temperatures(instance: NetworkInstance, config: ScheduleConfig = ScheduleConfig(),
                               gamma: Optional[float] = None, scan_grid=None, seed=None,
                               rel_tol: float = 1e-6) -> PhaseScanResult:
    """Scan ``det M(T)`` over a descending temperature grid.

    The configuration whose stability is tested is carried down the grid: at
    each temperature it is first equilibrated without splitting (so a lone
    centroid stays lone even when unstable) and ``det M`` is evaluated. Then
    the configuration is advanced the way the annealer would advance it:
    perturb-split, equilibrate, merge coincident copies. Sign changes are only
    compared within one configuration, which keeps ``det M`` continuous inside
    every bracket.
    """
    if gamma is None:
        gamma = instance.gamma
    sched = config.resolve(instance)
    grid = default_grid(sched.t_max, sched.t_min) if scan_grid is None else np.asarray(scan_grid, float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
        raise ValueError("scan grid must be a non-empty, strictly descending list of positive temperatures")

    scan = _Scanner(instance, sched, gamma)
    rng = np.random.default_rng(seed)
    result = PhaseScanResult()
    config_y = initialize(instance, sched).centroids
    prev_t = prev_det = None

    for temperature in grid:
        det_t, sym_t, y_eq = scan.evaluate(config_y, temperature)
        if prev_det is not None and np.sign(det_t) != np.sign(prev_det):
            t_cr = scan.bisect(config_y, prev_t, prev_det, temperature, rel_tol)
            result.critical_temperatures.append(float(t_cr))
            result.brackets.append((float(prev_t), float(temperature)))
            log.info("critical temperature %.6g (m=%d)", t_cr, config_y.shape[0])

        nxt = merge_coincident(y_eq, sched.merge_tol)
        if nxt.shape[0] < sched.k_max:
            nxt = split_order(scan.model, scan.x, scan.w, nxt, temperature)
            nxt = split_centroids(nxt, rng, sched.k_max, sched.perturb_scale)
            nxt, _, _ = equilibrate(scan.model, scan.x, scan.w, nxt, temperature, sched)
        nxt = merge_coincident(nxt, sched.merge_tol)
        if nxt.shape[0] != y_eq.shape[0]:
            config_y = nxt
            prev_det = scan.evaluate(config_y, temperature)[0]
        else:
            config_y = y_eq
            prev_det = det_t
        prev_t = temperature

        result.temperatures.append(float(temperature))
        result.dets.append(det_t)
        result.sym_dets.append(sym_t)
        result.effective_centroids.append(effective_count(config_y, sched.merge_tol))

    result.critical_temperatures.sort(reverse=True)
    return result


def write_scan_csv(result: PhaseScanResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("temperature", "det", "effective_centroids"))
        for t, det, m in result.rows():
            writer.writerow((repr(t), repr(det), m))
