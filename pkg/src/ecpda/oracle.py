"""Exhaustive solvers for the leader-less and leader-based integer programs.

For a fixed controller set S the leader-less objective separates per node:
node i independently picks ``argmin_{j in S} d_ij + gamma * s_j`` where
``s_j = sum_{k in S} d_jk``. In the leader-based program the synchronization
term ignores the assignment, so nodes go to their nearest controller and the
best leader is ``argmin_{l in S} sum_{j in S} d_jl``. Subsets are evaluated
in vectorized batches.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .network import NetworkInstance, Placement, make_placement

MAX_CANDIDATES = 20
BATCH = 4096


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class OracleReport:
    placement: Placement
    objective: float
    subsets: int
    seconds: float


def _subset_batches(n_cands: int, max_size: int):
    for size in range(1, max_size + 1):
        combos = itertools.combinations(range(n_cands), size)
        while True:
            chunk = list(itertools.islice(combos, BATCH))
            if not chunk:
                break
            idx = np.array(chunk)
            mask = np.zeros((len(chunk), n_cands), dtype=bool)
            np.put_along_axis(mask, idx, True, axis=1)
            yield idx, mask


def _search(instance: NetworkInstance, max_controllers, mode: str) -> OracleReport:
    cands = np.asarray(instance.candidates)
    if cands.shape[0] > MAX_CANDIDATES:
        raise InstanceTooLarge(
            f"{cands.shape[0]} candidates exceed the exhaustive-search cap of {MAX_CANDIDATES}"
        )
    max_k = cands.shape[0] if max_controllers is None else min(int(max_controllers), cands.shape[0])
    if max_k < 1:
        raise ValueError("max_controllers must be >= 1")
    start = time.perf_counter()
    gamma = instance.gamma
    d_all = instance.distances()
    d_nc = d_all[:, cands]  # N x C
    d_cc = d_all[np.ix_(cands, cands)]

    best_cost, best_set, best_lead = np.inf, None, None
    count = 0
    for idx, mask in _subset_batches(cands.shape[0], max_k):
        count += idx.shape[0]
        s = mask.astype(float) @ d_cc  # B x C, sum of distances to the subset
        if mode == "ll":
            cost = d_nc[None, :, :] + gamma * s[:, None, :]
            cost = np.where(mask[:, None, :], cost, np.inf)
            total = cost.min(axis=2).sum(axis=1)
            leads = np.full(idx.shape[0], -1)
        else:
            delay = np.where(mask[:, None, :], d_nc[None, :, :], np.inf).min(axis=2).sum(axis=1)
            s_in = np.where(mask, s, np.inf)
            leads = np.argmin(s_in, axis=1)
            total = delay + gamma * instance.n * s_in[np.arange(idx.shape[0]), leads]
        k = int(np.argmin(total))
        cost_k = float(total[k])
        tol = 1e-12 * max(abs(best_cost), 1.0) if np.isfinite(best_cost) else 0.0
        if cost_k < best_cost - tol:
            best_cost, best_set, best_lead = cost_k, tuple(idx[k]), int(leads[k])
        elif abs(cost_k - best_cost) <= tol:
            # deterministic tie-break: lexicographically smallest controller set
            ties = np.flatnonzero(np.abs(total - best_cost) <= tol)
            for t in ties:
                cand_set = tuple(idx[t])
                if tuple(cands[list(cand_set)]) < tuple(cands[list(best_set)]):
                    best_set, best_lead = cand_set, int(leads[t])

    ctrl = cands[list(best_set)]
    d_sub = d_all[:, ctrl]
    if mode == "ll":
        s = d_all[np.ix_(ctrl, ctrl)].sum(axis=1)
        labels = np.argmin(d_sub + gamma * s[None, :], axis=1)
        leader = None
    else:
        labels = np.argmin(d_sub, axis=1)
        leader = int(cands[best_lead])
    placement = make_placement(instance, ctrl.tolist(), ctrl[labels].tolist(), leader, mode)
    return OracleReport(placement, placement.objective.total, count, time.perf_counter() - start)


def ll_brute_force(instance: NetworkInstance, max_controllers=None) -> OracleReport:
    return _search(instance, max_controllers, "ll")


def lb_brute_force(instance: NetworkInstance, max_controllers=None) -> OracleReport:
    return _search(instance, max_controllers, "lb")
