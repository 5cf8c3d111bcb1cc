"""Independent reference implementations used only by the tests."""
import itertools
import math

import numpy as np


def brute_pareto(points):
    """O(n^2) pairwise filter keeping one copy of duplicate survivors."""
    pts = [tuple(p) for p in np.asarray(points, float)]
    keep = []
    for i, p in enumerate(pts):
        dominated = any(all(q[k] >= p[k] for k in range(len(p))) and any(q[k] > p[k] for k in range(len(p)))
                        for q in pts)
        if not dominated and p not in keep:
            keep.append(p)
    return sorted(keep)


def hand_sparsity(points):
    """Sum over objectives of squared gaps between sorted values, divided by |P| - 1."""
    pts = [list(p) for p in points]
    if len(pts) <= 1:
        return 0.0
    terms = []
    for j in range(len(pts[0])):
        col = sorted((p[j] for p in pts), reverse=True)
        terms += [(a - b) * (a - b) for a, b in zip(col, col[1:])]
    return math.fsum(terms) / (len(pts) - 1)


def inclusion_exclusion_hv(points, ref):
    """Exact union volume of boxes [ref, p] by inclusion-exclusion (small sets only)."""
    pts = [np.asarray(p, float) for p in points if np.all(np.asarray(p) > ref)]
    total = 0.0
    for k in range(1, len(pts) + 1):
        for combo in itertools.combinations(pts, k):
            corner = np.min(combo, axis=0)
            total += (-1) ** (k + 1) * np.prod(corner - ref)
    return total


def value_iteration(P, R, gamma, policy, tol=1e-12):
    """Vector policy evaluation on a tabular MDP: V = R_pi + gamma P_pi V."""
    n_states = P.shape[0]
    V = np.zeros((n_states, R.shape[-1]))
    while True:
        new = np.array([R[s, policy[s]] + gamma * P[s, policy[s]] @ V for s in range(n_states)])
        if np.max(np.abs(new - V)) < tol:
            return new
        V = new
