"""Pareto-front quality metrics: dominance filtering, hypervolume, sparsity, EU."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import as_vector, preference_grid
from .errors import InvalidArgumentError, UnsupportedError


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, arr.shape[-1] if arr.ndim == 2 else 0)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"points must form a 2-D array, got shape {arr.shape}")
    return arr


def pareto_mask(points) -> np.ndarray:
    """Boolean mask of the points that survive dominance filtering.

    Points are visited in descending lexicographic order, so a point can only
    be dominated by (or duplicate) one visited earlier. For two objectives the
    check reduces to a running maximum of the second coordinate.
    """
    pts = _as_points(points)
    n = pts.shape[0]
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    order = np.lexsort(pts.T[::-1])[::-1]
    if pts.shape[1] == 2:
        best = -np.inf
        for i in order:
            if pts[i, 1] > best:
                keep[i] = True
                best = pts[i, 1]
        return keep
    kept = []
    for i in order:
        p = pts[i]
        if kept and np.any(np.all(pts[kept] >= p, axis=1)):
            continue
        keep[i] = True
        kept.append(i)
    return keep


def pareto_filter(points) -> np.ndarray:
    """Non-dominated subset, duplicates collapsed, survivors in input order."""
    pts = _as_points(points)
    return pts[pareto_mask(pts)]


@dataclass(frozen=True, eq=False)
class ParetoFront:
    points: np.ndarray
    reference_point: np.ndarray

    def __post_init__(self):
        ref = np.asarray(self.reference_point, dtype=float)
        pts = _as_points(self.points)
        if pts.size == 0:
            pts = np.zeros((0, ref.size))
        elif pts.shape[1] != ref.size:
            raise InvalidArgumentError("reference point dimension does not match the points")
        object.__setattr__(self, "points", pareto_filter(pts))
        object.__setattr__(self, "reference_point", ref)

    @property
    def n_objectives(self) -> int:
        return self.reference_point.size


def _hv2(pts: np.ndarray, ref: np.ndarray) -> float:
    if pts.shape[0] == 0:
        return 0.0
    pts = pts[np.argsort(pts[:, 0])]
    # after filtering, y decreases while x increases
    xs = np.concatenate([[ref[0]], pts[:, 0]])
    return float(np.sum(np.diff(xs) * (pts[:, 1] - ref[1])))


def _hv3(pts: np.ndarray, ref: np.ndarray) -> float:
    if pts.shape[0] == 0:
        return 0.0
    levels = np.unique(pts[:, 2])[::-1]
    total = 0.0
    for k, z in enumerate(levels):
        below = levels[k + 1] if k + 1 < levels.size else ref[2]
        slab = pts[pts[:, 2] >= z][:, :2]
        total += _hv2(pareto_filter(slab), ref[:2]) * (z - below)
    return total


def hypervolume_exact(points, reference_point) -> float:
    ref = np.asarray(reference_point, dtype=float)
    pts = _as_points(points)
    if pts.size == 0:
        return 0.0
    if ref.size not in (2, 3):
        raise UnsupportedError("exact hypervolume supports 2 or 3 objectives; use the Monte-Carlo mode")
    pts = pts[np.all(pts > ref, axis=1)]
    pts = pareto_filter(pts)
    return _hv2(pts, ref) if ref.size == 2 else _hv3(pts, ref)


def hypervolume_mc(points, reference_point, n_samples: int = 100_000, rng=None):
    """Monte-Carlo estimate returning ``(estimate, standard_error)``."""
    ref = np.asarray(reference_point, dtype=float)
    pts = _as_points(points)
    if pts.size:
        pts = pts[np.all(pts > ref, axis=1)]
    if pts.size == 0:
        return 0.0, 0.0
    rng = rng if rng is not None else np.random.default_rng(0)
    upper = pts.max(axis=0)
    volume = float(np.prod(upper - ref))
    hits = 0
    chunk = 20_000
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        u = ref + rng.random((m, ref.size)) * (upper - ref)
        covered = np.zeros(m, dtype=bool)
        for p in pts:
            covered |= np.all(u <= p, axis=1)
        hits += int(covered.sum())
        done += m
    p_hat = hits / n_samples
    return volume * p_hat, volume * np.sqrt(p_hat * (1.0 - p_hat) / n_samples)


def hypervolume(front: ParetoFront, mode: str = "exact", n_samples: int = 100_000, rng=None) -> float:
    if mode == "exact":
        return hypervolume_exact(front.points, front.reference_point)
    if mode == "mc":
        return hypervolume_mc(front.points, front.reference_point, n_samples, rng)[0]
    raise InvalidArgumentError(f"unknown hypervolume mode {mode!r}")


def sparsity_raw(points) -> float:
    """Sum of squared gaps between sorted coordinates, over ``|P| - 1``."""
    pts = _as_points(points)
    if pts.shape[0] <= 1:
        return 0.0
    # fsum: correctly rounded, so the result does not depend on summation order
    gaps = [np.diff(np.sort(pts[:, j])[::-1]) ** 2 for j in range(pts.shape[1])]
    return math.fsum(np.concatenate(gaps).tolist()) / (pts.shape[0] - 1)


def sparsity(front_or_points) -> float:
    pts = front_or_points.points if isinstance(front_or_points, ParetoFront) else front_or_points
    return sparsity_raw(pareto_filter(pts))


def _is_regular_grid(prefs: np.ndarray) -> bool:
    n_prefs, n = prefs.shape
    if n == 2:
        expected = np.array([np.asarray(p) for p in preference_grid(2, n_prefs)])
    else:
        # lattice sizes for n >= 3 are binomial; find a matching resolution
        for m in range(1, 200):
            grid = preference_grid(n, m + 1)
            if len(grid) >= n_prefs:
                break
        expected = np.array([np.asarray(p) for p in grid])
        if expected.shape[0] != n_prefs:
            return False
    a = prefs[np.lexsort(prefs.T[::-1])]
    b = expected[np.lexsort(expected.T[::-1])]
    return bool(np.allclose(a, b, atol=1e-9))


def expected_utility(evals) -> float:
    """Mean scalarized return over (preference, return) pairs."""
    if len(evals) == 0:
        raise InvalidArgumentError("expected utility of an empty evaluation")
    prefs = np.array([as_vector(w) for w, _ in evals], dtype=float)
    rets = np.array([as_vector(g) for _, g in evals], dtype=float)
    if prefs.shape != rets.shape:
        raise InvalidArgumentError("preference and return dimensions differ")
    if len(evals) < 2 or not _is_regular_grid(prefs):
        warnings.warn("preferences do not form the equidistant grid; EU uses the given points",
                      stacklevel=2)
    return float(np.mean(np.sum(prefs * rets, axis=1)))


def front_summary(evals, reference_point) -> dict:
    rets = np.array([as_vector(g) for _, g in evals], dtype=float)
    ref = np.asarray(reference_point, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        eu = expected_utility(evals)
    hv = hypervolume_exact(rets, ref) if ref.size <= 3 else \
        hypervolume_mc(rets, ref)[0]
    return {"reference_point": ref.tolist(), "hv": hv, "sp_filtered": sparsity(rets),
            "sp_raw": sparsity_raw(rets), "eu": eu}


def write_front(path, evals, reference_point, metadata: dict | None = None) -> dict:
    """Write a front CSV and a JSON sidecar with the metrics; returns the sidecar dict."""
    path = Path(path)
    n = len(as_vector(evals[0][0])) if evals else len(reference_point)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"pref_{j}" for j in range(n)] + [f"return_{j}" for j in range(n)])
        for pref, ret in evals:
            w.writerow([repr(float(x)) for x in as_vector(pref)] +
                       [repr(float(x)) for x in as_vector(ret)])
    summary = front_summary(evals, reference_point) if evals else {
        "reference_point": list(map(float, reference_point)), "hv": 0.0,
        "sp_filtered": 0.0, "sp_raw": 0.0, "eu": None}
    summary.update(metadata or {})
    path.with_suffix(".json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def read_front(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("pref_"))
    return [(np.array([float(x) for x in r[:n]]), np.array([float(x) for x in r[n:]])) for r in body]
