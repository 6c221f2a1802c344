"""Deterministic-annealing machinery shared by the leader-less and leader-based solvers.

The driver :func:`anneal` runs the geometric cooling loop. At every
temperature it alternates association and centroid updates until the free
energy ``F = D - T*H`` settles, then cools, collapses centroid copies that
never separated and splits again (up to ``k_max``). A solver plugs in through
:class:`AnnealModel`, which supplies the distortion, the association rule and
the centroid update.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy.special import entr

from .network import (
    NetworkInstance,
    ObjectiveBreakdown,
    Placement,
    evaluate_lb,
    evaluate_ll,
    pairwise_sq_dists,
)

log = logging.getLogger(__name__)

# column mass below this marks a centroid that no node associates with
EMPTY_MASS = 1e-300


@dataclass(frozen=True)
class ScheduleConfig:
    """Annealing schedule. ``None`` fields are resolved from the data scale.

    ``t_max=None`` means 10 times the first critical temperature of the data
    (twice the largest eigenvalue of the weighted covariance).
    """

    t_max: Optional[float] = None
    t_min: Optional[float] = None
    alpha: float = 0.9
    delta: Optional[float] = None
    k_max: int = 4
    perturb_scale: Optional[float] = None
    merge_tol: Optional[float] = None
    max_iters_per_temperature: int = 100

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.max_iters_per_temperature < 1:
            raise ValueError("max_iters_per_temperature must be >= 1")
        for name in ("t_max", "t_min", "delta", "perturb_scale", "merge_tol"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.t_max is not None and self.t_min is not None and self.t_min >= self.t_max:
            raise ValueError("t_min must be below t_max")

    def resolve(self, instance: NetworkInstance) -> "ResolvedSchedule":
        lam = max_covariance_eigenvalue(instance.positions, instance.weights)
        scale = math.sqrt(lam) if lam > 0 else 1.0
        t_max = self.t_max if self.t_max is not None else (20.0 * lam if lam > 0 else 1.0)
        t_min = self.t_min if self.t_min is not None else 1e-4 * t_max
        if t_min >= t_max:
            raise ValueError(f"t_min={t_min} is not below t_max={t_max}")
        d0 = float(np.trace(weighted_covariance(instance.positions, instance.weights)))
        delta = self.delta if self.delta is not None else (1e-6 * d0 if d0 > 0 else 1e-12)
        return ResolvedSchedule(
            t_max=float(t_max),
            t_min=float(t_min),
            alpha=self.alpha,
            delta=float(delta),
            k_max=self.k_max,
            perturb_scale=self.perturb_scale or 1e-3 * scale,
            merge_tol=self.merge_tol or 1e-2 * scale,
            max_iters_per_temperature=self.max_iters_per_temperature,
        )


@dataclass(frozen=True)
class ResolvedSchedule:
    t_max: float
    t_min: float
    alpha: float
    delta: float
    k_max: int
    perturb_scale: float
    merge_tol: float
    max_iters_per_temperature: int


@dataclass
class AnnealState:
    temperature: float
    centroids: np.ndarray
    associations: np.ndarray
    free_energy_history: List[float] = field(default_factory=list)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    temperature: float
    distortion: float
    entropy: float
    free_energy: float
    effective_centroids: int
    stalled: bool = False


TRACE_FIELDS = ("iteration", "temperature", "distortion", "entropy", "free_energy",
                "effective_centroids")


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for r in trace:
            writer.writerow([r.iteration, repr(r.temperature), repr(r.distortion),
                             repr(r.entropy), repr(r.free_energy), r.effective_centroids])


def read_trace_csv(path) -> List[TraceRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        TraceRecord(int(r["iteration"]), float(r["temperature"]), float(r["distortion"]),
                    float(r["entropy"]), float(r["free_energy"]), int(r["effective_centroids"]))
        for r in rows
    ]


# --- primitive operations ---------------------------------------------------


def weighted_covariance(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    mu = w @ x
    xc = x - mu
    return (w[:, None] * xc).T @ xc


def max_covariance_eigenvalue(x: np.ndarray, w: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(weighted_covariance(x, w))[-1])


def boltzmann(distortion: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise Gibbs distribution ``exp(-D/T) / Z``.

    The row minimum is subtracted before exponentiating, so the largest term
    of every row is exactly 1 and ``Z >= 1``.
    """
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    shifted = distortion - distortion.min(axis=1, keepdims=True)
    p = np.exp(-shifted / temperature)
    return p / p.sum(axis=1, keepdims=True)


def entropy(assoc: np.ndarray, weights: np.ndarray) -> float:
    """Weighted Shannon entropy (natural log) of the association rows."""
    assoc = np.asarray(assoc, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if assoc.shape[0] != weights.shape[0]:
        raise ValueError("association rows and weights disagree in length")
    return float(weights @ entr(assoc).sum(axis=1))


def free_energy(distortion: float, temperature: float, entropy_value: float) -> float:
    return distortion - temperature * entropy_value


def initialize(instance: NetworkInstance, config) -> AnnealState:
    """Single centroid at the weighted mass center, at the starting temperature."""
    sched = config.resolve(instance) if isinstance(config, ScheduleConfig) else config
    y = (instance.weights @ instance.positions)[None, :]
    return AnnealState(sched.t_max, y, np.ones((instance.n, 1)))


def cool(temperature: float, alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return alpha * temperature


def split_centroids(centroids: np.ndarray, rng: np.random.Generator, k_max: int,
                    perturb_scale: float) -> np.ndarray:
    """Replace centroids by ``y + eps`` / ``y - eps`` pairs.

    Only the first ``k_max - m`` centroids (in index order) are split so the
    count never exceeds ``k_max``. Each ``eps`` has norm ``perturb_scale`` and
    a uniformly random direction.
    """
    m, d = centroids.shape
    n_split = min(m, k_max - m)
    if n_split <= 0:
        return centroids.copy()
    out = []
    for j in range(m):
        if j < n_split:
            eps = rng.standard_normal(d)
            eps *= perturb_scale / np.linalg.norm(eps)
            out.append(centroids[j] + eps)
            out.append(centroids[j] - eps)
        else:
            out.append(centroids[j])
    return np.array(out)


def merge_groups(centroids: np.ndarray, merge_tol: float) -> np.ndarray:
    """Group label of every centroid under the transitive closure of ``dist < merge_tol``.

    Union-find over the close pairs; labels are numbered in order of first
    appearance.
    """
    m = centroids.shape[0]
    close = np.argwhere(np.triu(pairwise_sq_dists(centroids, centroids) < merge_tol**2, k=1))
    if close.shape[0] == 0:
        return np.arange(m)
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in close:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = [find(a) for a in range(m)]
    order = {}
    return np.array([order.setdefault(r, len(order)) for r in roots])


def merge_coincident(centroids: np.ndarray, merge_tol: float) -> np.ndarray:
    """Replace every merge group by its mean, repeated until no pair is closer
    than ``merge_tol`` (group means can land within tolerance of each other)."""
    y = centroids.copy()
    while True:
        labels = merge_groups(y, merge_tol)
        k = labels.max() + 1
        if k == y.shape[0]:
            return y
        y = np.array([y[labels == g].mean(axis=0) for g in range(k)])


def effective_count(centroids: np.ndarray, merge_tol: float) -> int:
    return int(merge_groups(centroids, merge_tol).max() + 1)


def converged(history, delta: float) -> bool:
    if len(history) < 2:
        return False
    return abs(history[-1] - history[-2]) < delta


def hard_labels(costs: np.ndarray) -> np.ndarray:
    # np.argmin returns the first minimum, i.e. the lowest index on ties
    return np.argmin(costs, axis=1)


def one_hot(labels: np.ndarray, m: int) -> np.ndarray:
    p = np.zeros((labels.shape[0], m))
    p[np.arange(labels.shape[0]), labels] = 1.0
    return p


# --- solver plug-in interface -------------------------------------------------


class AnnealModel:
    """Distortion model of one controller topology.

    Subclasses define ``mode`` ("ll" or "lb") and the four hooks below. All
    hooks take the node positions ``x`` (N x d), the node weights ``w`` and
    the current centroids ``y`` (m x d).
    """

    mode = ""

    def __init__(self, gamma: float, n_nodes: int):
        self.gamma = float(gamma)
        self.n_nodes = n_nodes

    def association_costs(self, x, y) -> np.ndarray:
        """N x m matrix whose Gibbs distribution gives the associations."""
        raise NotImplementedError

    def update(self, x, w, p, y) -> np.ndarray:
        raise NotImplementedError

    def distortion(self, x, w, p, y) -> float:
        raise NotImplementedError

    def node_costs(self, x, y) -> np.ndarray:
        """Per-node cost of serving node i from centroid (or controller) j."""
        return self.association_costs(x, y)

    def sync_cost(self, y: np.ndarray, counts: np.ndarray) -> float:
        """Unweighted synchronization cost of a hard solution."""
        raise NotImplementedError

    def protected(self, y: np.ndarray) -> Optional[int]:
        """Index of a centroid that must survive even without mass (or None)."""
        return None

    def associations(self, x, y, temperature) -> np.ndarray:
        return boltzmann(self.association_costs(x, y), temperature)

    def evaluate(self, instance, placement) -> ObjectiveBreakdown:
        return evaluate_lb(instance, placement) if self.mode == "lb" else evaluate_ll(instance, placement)


def prune_empty(model: AnnealModel, x, w, y, temperature):
    """Associations at ``temperature``, dropping centroids that carry no mass
    (except the one the model protects)."""
    while True:
        p = model.associations(x, y, temperature)
        mass = w @ p
        keep = mass >= EMPTY_MASS
        lead = model.protected(y)
        if lead is not None:
            keep[lead] = True
        if keep.all() or not keep.any():
            return p, y
        log.debug("removing %d empty centroid(s) at T=%g", int((~keep).sum()), temperature)
        y = y[keep]


def split_order(model: AnnealModel, x, w, y, temperature) -> np.ndarray:
    """Centroids sorted so the least stable (widest posterior spread) comes first.

    With the clamp in :func:`split_centroids` only the leading centroids get a
    perturbed twin, so the one closest to its own phase transition is tried
    first. Ties keep index order.
    """
    if y.shape[0] == 1:
        return y
    p = model.associations(x, y, temperature)
    mass = w @ p
    spread = np.empty(y.shape[0])
    for j in range(y.shape[0]):
        if mass[j] <= 0:
            spread[j] = 0.0
            continue
        post = w * p[:, j] / mass[j]
        xc = x - y[j]
        cov = (post[:, None] * xc).T @ xc
        spread[j] = np.linalg.eigvalsh(cov)[-1]
    order = np.argsort(-spread, kind="stable")
    return y[order]


def assign_to_controllers(model: AnnealModel, x: np.ndarray, sites: np.ndarray):
    """Hard assignment of nodes to ``sites``; sites nobody uses are dropped.

    Returns the indices of the surviving sites and the per-node label into
    that surviving list. The site the model protects (the leader) is kept
    even when unused: a leader between clusters serves no node but shortens
    every synchronization path. Dropping any other unused site never raises
    either objective, since its synchronization terms are non-negative and a
    minimum over fewer leaders is taken over a smaller sum.
    """
    keep = np.arange(sites.shape[0])
    while True:
        labels = hard_labels(model.node_costs(x, sites[keep]))
        used = np.zeros(keep.shape[0], dtype=bool)
        used[labels] = True
        lead = model.protected(sites[keep])
        if lead is not None:
            used[lead] = True
        if used.all():
            return keep, labels
        keep = keep[used]


def hard_assign_and_project(centroids: np.ndarray, instance: NetworkInstance,
                            model: AnnealModel) -> Placement:
    """Map centroids to their nearest candidate nodes and build the placement."""
    x = instance.positions
    cands = np.asarray(instance.candidates)
    nearest = hard_labels(pairwise_sq_dists(centroids, x[cands]))
    chosen = sorted(set(int(c) for c in cands[nearest]))
    ctrl = np.array(chosen)
    keep, labels = assign_to_controllers(model, x, x[ctrl])
    ctrl = ctrl[keep]
    leader = None
    if model.mode == "lb":
        s = pairwise_sq_dists(x[ctrl], x[ctrl]).sum(axis=1)
        leader = int(ctrl[np.argmin(s)])
    bare = Placement(tuple(ctrl.tolist()), tuple(ctrl[labels].tolist()), leader)
    return replace(bare, objective=model.evaluate(instance, bare))


def continuous_objective(model: AnnealModel, x: np.ndarray, y: np.ndarray) -> ObjectiveBreakdown:
    """Integer-program objective with controllers at the free centroid positions."""
    keep, labels = assign_to_controllers(model, x, y)
    y = y[keep]
    delay = float(np.sum((x - y[labels]) ** 2))
    counts = np.bincount(labels, minlength=y.shape[0]).astype(float)
    sync = model.sync_cost(y, counts)
    return ObjectiveBreakdown(delay, sync, delay + model.gamma * sync)


@dataclass
class RunResult:
    placement: Placement
    trace: List[TraceRecord]
    soft_objective: ObjectiveBreakdown
    centroids: np.ndarray
    schedule: ResolvedSchedule

    def __iter__(self):
        # allows ``placement, trace = run_ecp_ll(...)``
        return iter((self.placement, self.trace))

    @property
    def stalled_temperatures(self) -> List[float]:
        return [r.temperature for r in self.trace if r.stalled]


def equilibrate(model: AnnealModel, x, w, y, temperature, sched, trace=None, start_iter=0):
    """Alternate association / centroid updates at a fixed temperature.

    Stops when consecutive free energies differ by less than ``sched.delta``
    or after ``sched.max_iters_per_temperature`` sweeps. Returns the
    centroids, the last associations and whether the loop converged.
    """
    history = []
    p = None
    it = start_iter
    for _ in range(sched.max_iters_per_temperature):
        p, y = prune_empty(model, x, w, y, temperature)
        y = model.update(x, w, p, y)
        dist = model.distortion(x, w, p, y)
        h = entropy(p, w)
        f = free_energy(dist, temperature, h)
        history.append(f)
        if trace is not None:
            trace.append(TraceRecord(it, temperature, dist, h, f,
                                     effective_count(y, sched.merge_tol)))
        it += 1
        if converged(history, sched.delta):
            return y, p, True
    return y, p, False


def anneal(instance: NetworkInstance, config: ScheduleConfig, model: AnnealModel,
           seed=None) -> RunResult:
    sched = config.resolve(instance)
    rng = np.random.default_rng(seed)
    x, w = instance.positions, instance.weights
    state = initialize(instance, sched)
    y, temperature = state.centroids, state.temperature
    trace: List[TraceRecord] = []

    while True:
        y, _, ok = equilibrate(model, x, w, y, temperature, sched, trace, len(trace))
        if not ok:
            log.warning("no convergence at T=%g after %d sweeps", temperature,
                        sched.max_iters_per_temperature)
            trace[-1] = replace(trace[-1], stalled=True)
        if temperature <= sched.t_min:
            break
        temperature = cool(temperature, sched.alpha)
        y = merge_coincident(y, sched.merge_tol)
        if y.shape[0] < sched.k_max:
            y = split_order(model, x, w, y, temperature)
            y = split_centroids(y, rng, sched.k_max, sched.perturb_scale)

    # zero-temperature step: hard associations, one centroid update
    y = merge_coincident(y, sched.merge_tol)
    keep, labels = assign_to_controllers(model, x, y)
    y = model.update(x, w, one_hot(labels, keep.shape[0]), y[keep])
    keep, labels = assign_to_controllers(model, x, y)
    y = y[keep]
    p0 = one_hot(labels, y.shape[0])
    d0 = model.distortion(x, w, p0, y)
    trace.append(TraceRecord(len(trace), 0.0, d0, 0.0, d0, effective_count(y, sched.merge_tol)))

    soft = continuous_objective(model, x, y)
    placement = hard_assign_and_project(y, instance, model)
    return RunResult(placement, trace, soft, y, sched)


def best_over_kmax(run, instance: NetworkInstance, config: ScheduleConfig, seed, k_values):
    """Run ``run(instance, config_with_k, seed)`` for every K_max in ``k_values``.

    Returns ``(best_k, best_result, results)``; the best result has the lowest
    projected objective, ties going to the smaller K_max.
    """
    results = {}
    for k in k_values:
        results[k] = run(instance, replace(config, k_max=int(k)), seed)
    best_k = min(results, key=lambda k: (results[k].placement.objective.total, k))
    return best_k, results[best_k], results
