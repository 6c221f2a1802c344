"""Edge-network instances, placements and the integer-program objectives.

Delays are squared Euclidean distances between node positions. The two
objectives evaluated here are the leader-less one (every controller
synchronizes with every other controller, weighted by the number of nodes it
serves) and the leader-based one (controllers synchronize with a single
leader only).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class InstanceError(ValueError):
    """Raised for malformed or inconsistent instance / placement data."""


def squared_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(diff @ diff)


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of squared distances between the rows of ``a`` and ``b``."""
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


@dataclass(frozen=True)
class EdgeNode:
    position: tuple
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise InstanceError("node weight must be positive")


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """Node positions (N x d), importance weights, candidate controllers and gamma."""

    positions: np.ndarray
    weights: np.ndarray
    candidates: tuple
    gamma: float = 0.0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[0] == 0 or pos.shape[1] == 0:
            raise InstanceError("positions must be a non-empty N x d array")
        n = pos.shape[0]
        w = np.array(self.weights, dtype=float)
        if w.shape != (n,):
            raise InstanceError(f"expected {n} weights, got shape {w.shape}")
        if np.any(w <= 0):
            raise InstanceError("node weights must be positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InstanceError(f"node weights must sum to 1 (got {w.sum():.12g})")
        cands = tuple(sorted({int(c) for c in self.candidates}))
        if not cands:
            raise InstanceError("candidate set is empty")
        if cands[0] < 0 or cands[-1] >= n:
            raise InstanceError("candidate index out of range")
        if not self.gamma >= 0:
            raise InstanceError("gamma must be non-negative")
        pos.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "candidates", cands)
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def from_points(cls, points, gamma=0.0, candidates=None, weights=None):
        pos = np.atleast_2d(np.asarray(points, dtype=float))
        if pos.shape[0] == 1 and np.ndim(points) == 1:
            pos = pos.T  # a flat list means 1-d nodes
        n = pos.shape[0]
        if weights is None:
            weights = np.full(n, 1.0 / n)
        if candidates is None:
            candidates = range(n)
        return cls(pos, weights, tuple(candidates), gamma)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    @property
    def nodes(self) -> list:
        return [EdgeNode(tuple(p), float(w)) for p, w in zip(self.positions, self.weights)]

    def with_gamma(self, gamma: float) -> "NetworkInstance":
        return NetworkInstance(self.positions, self.weights, self.candidates, gamma)

    def distances(self) -> np.ndarray:
        return pairwise_sq_dists(self.positions, self.positions)

    def __eq__(self, other):
        if not isinstance(other, NetworkInstance):
            return NotImplemented
        return (
            self.candidates == other.candidates
            and self.gamma == other.gamma
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


@dataclass(frozen=True)
class ObjectiveBreakdown:
    delay_cost: float
    sync_cost: float
    total: float

    def to_dict(self) -> dict:
        return {"delay_cost": self.delay_cost, "sync_cost": self.sync_cost, "total": self.total}


@dataclass(frozen=True)
class Placement:
    """Controller set, node -> controller assignment and (leader-based) leader."""

    controllers: tuple
    assignment: tuple
    leader: Optional[int] = None
    objective: Optional[ObjectiveBreakdown] = field(default=None, compare=False)

    def __post_init__(self):
        ctrl = tuple(sorted({int(c) for c in self.controllers}))
        if not ctrl:
            raise InstanceError("placement has no controllers")
        assign = tuple(int(a) for a in self.assignment)
        cset = set(ctrl)
        bad = [a for a in assign if a not in cset]
        if bad:
            raise InstanceError(f"assignment to non-controller node(s) {sorted(set(bad))}")
        if self.leader is not None and int(self.leader) not in cset:
            raise InstanceError(f"leader {self.leader} is not a controller")
        object.__setattr__(self, "controllers", ctrl)
        object.__setattr__(self, "assignment", assign)
        if self.leader is not None:
            object.__setattr__(self, "leader", int(self.leader))

    def validate(self, instance: NetworkInstance) -> None:
        if len(self.assignment) != instance.n:
            raise InstanceError(
                f"assignment has {len(self.assignment)} entries for {instance.n} nodes"
            )
        allowed = set(instance.candidates)
        outside = [c for c in self.controllers if c not in allowed]
        if outside:
            raise InstanceError(f"controller(s) {outside} are not candidates")


def _check_indices(instance: NetworkInstance, placement: Placement) -> None:
    n = instance.n
    if len(placement.assignment) != n:
        raise InstanceError(f"assignment length {len(placement.assignment)} != {n} nodes")
    if placement.controllers[0] < 0 or placement.controllers[-1] >= n:
        raise InstanceError("controller index out of range")


def _breakdown(delay: float, sync: float, gamma: float) -> ObjectiveBreakdown:
    return ObjectiveBreakdown(float(delay), float(sync), float(delay + gamma * sync))


def evaluate_ll(instance: NetworkInstance, placement: Placement) -> ObjectiveBreakdown:
    """Leader-less objective: sum of node delays plus gamma times
    sum_j |nodes on j| * sum_{j'} d(x_j, x_j')."""
    _check_indices(instance, placement)
    x = instance.positions
    assign = np.asarray(placement.assignment)
    delay = np.sum((x - x[assign]) ** 2)
    ctrl = np.asarray(placement.controllers)
    s = pairwise_sq_dists(x[ctrl], x[ctrl]).sum(axis=1)
    counts = np.array([np.count_nonzero(assign == c) for c in ctrl])
    return _breakdown(delay, counts @ s, instance.gamma)


def evaluate_lb(instance: NetworkInstance, placement: Placement) -> ObjectiveBreakdown:
    """Leader-based objective: node delays plus gamma * N * sum_j d(x_j, x_leader)."""
    if placement.leader is None:
        raise InstanceError("leader-based evaluation needs a leader")
    _check_indices(instance, placement)
    x = instance.positions
    assign = np.asarray(placement.assignment)
    delay = np.sum((x - x[assign]) ** 2)
    ctrl = np.asarray(placement.controllers)
    sync = instance.n * np.sum((x[ctrl] - x[placement.leader]) ** 2)
    return _breakdown(delay, sync, instance.gamma)


def generate_gaussian_instance(
    clusters: int,
    size: int,
    dimension: int = 2,
    seed: int = 0,
    cluster_spread: float = 0.5,
    center_box: tuple = (0.0, 10.0),
    gamma: float = 0.0,
    return_labels: bool = False,
):
    """Sample ``size`` nodes from ``clusters`` isotropic Gaussians.

    Centers are uniform in ``center_box`` (per coordinate) and are drawn
    before the points, so instances sharing a seed share their centers for
    every ``size``. Node i belongs to Gaussian ``i % clusters``.
    """
    if clusters < 1:
        raise ValueError("need at least one cluster")
    if size < clusters:
        raise ValueError("size must be >= clusters")
    if dimension < 1:
        raise ValueError("dimension must be positive")
    if cluster_spread < 0:
        raise ValueError("cluster_spread must be non-negative")
    rng = np.random.default_rng(seed)
    lo, hi = center_box
    centers = rng.uniform(lo, hi, size=(clusters, dimension))
    labels = np.arange(size) % clusters
    points = centers[labels] + cluster_spread * rng.standard_normal((size, dimension))
    inst = NetworkInstance.from_points(points, gamma=gamma)
    if return_labels:
        return inst, labels, centers
    return inst


# --- file I/O -------------------------------------------------------------


def instance_to_dict(instance: NetworkInstance) -> dict:
    return {
        "dimension": instance.dimension,
        "gamma": instance.gamma,
        "nodes": instance.positions.tolist(),
        "weights": instance.weights.tolist(),
        "candidates": list(instance.candidates),
    }


def instance_from_dict(data: dict) -> NetworkInstance:
    try:
        nodes = data["nodes"]
        dim = int(data["dimension"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"malformed instance: {exc}") from exc
    if not isinstance(nodes, list) or not nodes:
        raise InstanceError("instance has no nodes")
    for k, node in enumerate(nodes):
        if not isinstance(node, list) or len(node) != dim:
            raise InstanceError(f"node {k} does not have dimension {dim}")
    n = len(nodes)
    weights = data.get("weights")
    if weights is None:
        weights = [1.0 / n] * n
    candidates = data.get("candidates", list(range(n)))
    if not isinstance(candidates, list):
        raise InstanceError("candidates must be a list")
    return NetworkInstance(np.array(nodes, dtype=float), weights, tuple(candidates),
                           float(data.get("gamma", 0.0)))


def save_instance(instance: NetworkInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance), indent=1) + "\n")


def load_instance(path) -> NetworkInstance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise InstanceError(f"{path}: expected a JSON object")
    return instance_from_dict(data)


def placement_to_dict(placement: Placement) -> dict:
    return {
        "controllers": list(placement.controllers),
        "assignment": list(placement.assignment),
        "leader": placement.leader,
        "objective": placement.objective.to_dict() if placement.objective else None,
    }


def placement_from_dict(data: dict, instance: Optional[NetworkInstance] = None) -> Placement:
    try:
        obj = data.get("objective")
        placement = Placement(
            tuple(data["controllers"]),
            tuple(data["assignment"]),
            data.get("leader"),
            ObjectiveBreakdown(**obj) if obj else None,
        )
    except (KeyError, TypeError) as exc:
        raise InstanceError(f"malformed placement: {exc}") from exc
    if instance is not None:
        placement.validate(instance)
    return placement


def save_placement(placement: Placement, path) -> None:
    Path(path).write_text(json.dumps(placement_to_dict(placement), indent=1) + "\n")


def load_placement(path, instance: Optional[NetworkInstance] = None) -> Placement:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: not valid JSON ({exc})") from exc
    return placement_from_dict(data, instance)


def make_placement(instance: NetworkInstance, controllers: Sequence[int], assignment,
                   leader: Optional[int] = None, mode: str = "ll") -> Placement:
    """Build a placement and attach the objective of the matching program."""
    bare = Placement(tuple(controllers), tuple(assignment), leader)
    obj = evaluate_lb(instance, bare) if mode == "lb" else evaluate_ll(instance, bare)
    return Placement(bare.controllers, bare.assignment, bare.leader, obj)
