"""Unsupervised grouping of rate trajectories and label assignment.

k-means in soft-DTW geometry: cluster representatives are soft-DTW
barycenters (gradient-descent averages under the warping metric), members
are assigned to the nearest representative, and cluster indices are mapped
to configuration labels by maximizing macro F1 over all bijections.
Series are channel-wise standardized before fitting; the model stores the
normalization so later queries are transformed identically.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, OptimizationError, StateError, ValidationError
from ..seeding import derive_rng
from .metrics import (
    _as_series,
    soft_dtw,
    soft_dtw_value_and_gradient,
)

MODEL_FORMAT = "rate-cluster-model/1"


def pad_series(values: np.ndarray, length: int) -> np.ndarray:
    """Zero-order-hold extension of a series to the requested length."""
    values = _as_series(values, "series")
    if values.shape[0] >= length:
        return values[:length]
    tail = np.repeat(values[-1:], length - values.shape[0], axis=0)
    return np.vstack([values, tail])


def barycenter_objective(candidate, members, gamma: float) -> float:
    """Sum of soft-DTW costs from a candidate series to every member."""
    return sum(soft_dtw(candidate, m, gamma) for m in members)


def soft_dtw_barycenter(members, gamma: float, init, max_iter: int = 50,
                        tol: float = 1e-5) -> np.ndarray:
    """Gradient-descent average of several series under soft-DTW.

    Backtracking line search keeps the objective non-increasing across
    accepted steps; exhausting the backoff budget without progress on a
    non-negligible gradient raises an optimization error.
    """
    if not members:
        raise DomainError("barycenter of an empty member list is undefined")
    members = [_as_series(m, "member") for m in members]
    x = _as_series(init, "init").copy()
    scale = max(float(np.abs(x).max()), 1e-12)

    def value_and_grad(cand):
        total = 0.0
        grad = np.zeros_like(cand)
        for m in members:
            v, g = soft_dtw_value_and_gradient(cand, m, gamma)
            total += v
            grad += g
        return total, grad

    objective, grad = value_and_grad(x)
    step = 1.0 / max(len(members), 1)
    for _ in range(max_iter):
        grad_norm = float(np.abs(grad).max())
        if grad_norm <= 1e-12 * scale:
            break  # stationary point
        accepted = False
        for _backoff in range(40):
            trial = x - step * grad
            trial_objective, trial_grad = value_and_grad(trial)
            if trial_objective < objective:
                improvement = objective - trial_objective
                x, objective, grad = trial, trial_objective, trial_grad
                step *= 1.5
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if grad_norm <= 1e-6 * scale:
                break  # numerically flat; treat as converged
            raise OptimizationError(
                f"barycenter line search stalled with gradient norm {grad_norm}")
        if improvement <= tol * max(abs(objective), 1e-12):
            break
    return x


@dataclass
class ClusterModel:
    """Fitted k-means state plus the cluster-to-label mapping.

    Barycenters live in the standardized space defined by ``channel_mean``
    and ``channel_std``.  ``label_permutation`` stays None until a mapping
    is applied; classification requires it.
    """

    k: int
    gamma: float
    barycenters: list[np.ndarray]
    assignment: np.ndarray
    channel_mean: np.ndarray
    channel_std: np.ndarray
    inertia: float
    label_permutation: dict[int, str] | None = None
    mapped_f1: float | None = None
    inertia_trace: list[float] = field(default_factory=list)

    def normalize(self, series) -> np.ndarray:
        series = _as_series(series, "series")
        if series.shape[1] != self.channel_mean.shape[0]:
            raise ValidationError(
                f"series has {series.shape[1]} channels, model expects "
                f"{self.channel_mean.shape[0]}")
        return (series - self.channel_mean) / self.channel_std


def _normalization(dataset) -> tuple[np.ndarray, np.ndarray]:
    stacked = np.vstack(dataset)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)  # constant channels pass through
    return mean, std


def _assign(dataset, barycenters, gamma):
    n, k = len(dataset), len(barycenters)
    dists = np.empty((n, k))
    for i, series in enumerate(dataset):
        for c, bary in enumerate(barycenters):
            dists[i, c] = soft_dtw(series, bary, gamma)
    return dists.argmin(axis=1), dists


def _reseed_empty(assignment, dists, k):
    """Give each empty cluster the member farthest from its representative."""
    assignment = assignment.copy()
    taken: set[int] = set()
    for cluster in range(k):
        if np.any(assignment == cluster):
            continue
        current = dists[np.arange(len(assignment)), assignment].copy()
        current[list(taken)] = -np.inf
        # do not steal the only member of another cluster
        for idx in np.argsort(current)[::-1]:
            donor = assignment[idx]
            if idx in taken or np.sum(assignment == donor) <= 1:
                continue
            assignment[idx] = cluster
            taken.add(int(idx))
            break
    return assignment


def kmeans_fit(dataset, k: int, gamma: float = 1.0, n_init: int = 5,
               max_iter: int = 50, seed: int = 0, tol: float = 1e-5,
               barycenter_max_iter: int = 20, normalize: bool = True,
               init_barycenters=None) -> ClusterModel:
    """k-means over soft-DTW with barycenter centroid updates.

    Runs ``n_init`` restarts seeded from randomly chosen members and keeps
    the restart with the lowest total inertia.  ``init_barycenters``
    bypasses the restarts with an explicit starting set (warm starts).
    """
    dataset = [_as_series(s, "series") for s in dataset]
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    if len(dataset) < k:
        raise DomainError(f"dataset of {len(dataset)} series cannot form {k} clusters")
    if not gamma > 0.0:
        raise ValidationError(f"gamma must be > 0, got {gamma}")
    if normalize:
        mean, std = _normalization(dataset)
    else:
        mean = np.zeros(dataset[0].shape[1])
        std = np.ones(dataset[0].shape[1])
    work = [(s - mean) / std for s in dataset]

    def one_run(start):
        barycenters = [b.copy() for b in start]
        assignment = None
        trace = []
        inertia = np.inf
        for _ in range(max_iter):
            new_assignment, dists = _assign(work, barycenters, gamma)
            for _attempt in range(k):
                if np.bincount(new_assignment, minlength=k).min() > 0:
                    break
                new_assignment = _reseed_empty(new_assignment, dists, k)
            new_inertia = float(sum(
                dists[i, c] for i, c in enumerate(new_assignment)))
            trace.append(new_inertia)
            if assignment is not None and np.array_equal(new_assignment, assignment):
                assignment, inertia = new_assignment, new_inertia
                break
            converged = assignment is not None and \
                abs(inertia - new_inertia) <= tol * max(abs(inertia), 1e-12)
            assignment, inertia = new_assignment, new_inertia
            if converged:
                break
            for cluster in range(k):
                members = [work[i] for i in np.flatnonzero(assignment == cluster)]
                if members:
                    barycenters[cluster] = soft_dtw_barycenter(
                        members, gamma, barycenters[cluster],
                        max_iter=barycenter_max_iter, tol=tol)
        # inertia under the final barycenters
        assignment, dists = _assign(work, barycenters, gamma)
        inertia = float(sum(dists[i, c] for i, c in enumerate(assignment)))
        trace.append(inertia)
        return barycenters, assignment, inertia, trace

    if init_barycenters is not None:
        if len(init_barycenters) != k:
            raise ValidationError(
                f"expected {k} initial barycenters, got {len(init_barycenters)}")
        start = [((_as_series(b, "init") - mean) / std) for b in init_barycenters]
        best = one_run(start)
    else:
        if n_init < 1:
            raise ValidationError(f"n_init must be >= 1, got {n_init}")
        best = None
        for restart in range(n_init):
            rng = derive_rng(seed, restart)
            chosen = rng.choice(len(work), size=k, replace=False)
            run = one_run([work[i] for i in chosen])
            if best is None or run[2] < best[2]:
                best = run
    barycenters, assignment, inertia, trace = best
    return ClusterModel(k=k, gamma=float(gamma), barycenters=barycenters,
                        assignment=np.asarray(assignment, dtype=np.int64),
                        channel_mean=mean, channel_std=std, inertia=inertia,
                        inertia_trace=trace)


def macro_f1(predicted, truth) -> float:
    """Macro-averaged F1 over the label set of the ground truth."""
    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth):
        raise ValidationError("prediction/truth lengths differ")
    scores = []
    for label in sorted(set(truth)):
        tp = sum(1 for p, t in zip(predicted, truth) if p == label and t == label)
        fp = sum(1 for p, t in zip(predicted, truth) if p == label and t != label)
        fn = sum(1 for p, t in zip(predicted, truth) if p != label and t == label)
        denom = 2 * tp + fp + fn
        scores.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def f1_permutation_map(assignments, truth) -> tuple[dict[int, str], float]:
    """Best bijection from cluster indices to labels by macro F1.

    Ties resolve to the lexicographically first label ordering, so the
    result is deterministic.
    """
    assignments = [int(a) for a in assignments]
    truth = [str(t) for t in truth]
    if len(assignments) != len(truth):
        raise ValidationError("assignment/truth lengths differ")
    clusters = sorted(set(assignments))
    labels = sorted(set(truth))
    if len(clusters) > len(labels):
        raise ValidationError(
            f"{len(clusters)} clusters cannot map onto {len(labels)} labels")
    best_map: dict[int, str] | None = None
    best_f1 = -1.0
    for combo in itertools.permutations(labels, len(clusters)):
        mapping = dict(zip(clusters, combo))
        score = macro_f1([mapping[a] for a in assignments], truth)
        if score > best_f1:
            best_map, best_f1 = mapping, score
    return best_map, best_f1


def apply_label_mapping(model: ClusterModel, truth_labels) -> ClusterModel:
    """Attach the F1-optimal cluster-to-label mapping to a fitted model.

    Clusters left unmapped (more labels than populated clusters never
    happens; fewer clusters than k can) fall back to the unused labels in
    sorted order so the permutation stays a bijection over k entries.
    """
    mapping, score = f1_permutation_map(model.assignment, truth_labels)
    leftovers = sorted(set(truth_labels) - set(mapping.values()))
    for cluster in range(model.k):
        if cluster not in mapping and leftovers:
            mapping[cluster] = leftovers.pop(0)
    model.label_permutation = mapping
    model.mapped_f1 = score
    return model


def classify(model: ClusterModel, series) -> str:
    """Label of the nearest barycenter; ties break toward the lowest index."""
    if model.label_permutation is None:
        raise StateError("model has no label mapping; fit and map before classifying")
    work = model.normalize(series)
    dists = [soft_dtw(work, bary, model.gamma) for bary in model.barycenters]
    return model.label_permutation[int(np.argmin(dists))]


def save_model(model: ClusterModel, path) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "k": model.k,
        "gamma": model.gamma,
        "channel_mean": model.channel_mean.tolist(),
        "channel_std": model.channel_std.tolist(),
        "barycenters": [b.tolist() for b in model.barycenters],
        "assignment": model.assignment.tolist(),
        "inertia": model.inertia,
        "label_permutation": (None if model.label_permutation is None else
                              {str(c): l for c, l in model.label_permutation.items()}),
        "mapped_f1": model.mapped_f1,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path) -> ClusterModel:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise ValidationError(
            f"unsupported model format {payload.get('format')!r}")
    permutation = payload["label_permutation"]
    if permutation is not None:
        permutation = {int(c): l for c, l in permutation.items()}
    return ClusterModel(
        k=int(payload["k"]),
        gamma=float(payload["gamma"]),
        barycenters=[np.asarray(b, dtype=float) for b in payload["barycenters"]],
        assignment=np.asarray(payload["assignment"], dtype=np.int64),
        channel_mean=np.asarray(payload["channel_mean"], dtype=float),
        channel_std=np.asarray(payload["channel_std"], dtype=float),
        inertia=float(payload["inertia"]),
        label_permutation=permutation,
        mapped_f1=None if payload["mapped_f1"] is None else float(payload["mapped_f1"]),
    )
