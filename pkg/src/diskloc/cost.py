"""Costs and gradients for range-based localization.

Two costs share one instance: the original nonconvex cost ``f`` sums half
squared distances to the measurement spheres, and its convex relaxation
``fhat`` replaces each sphere by the ball it bounds, which leaves violated
ranges penalized but turns slack into flat regions.
"""

from dataclasses import dataclass, field

import numpy as np

from .validation import check_index, check_point, check_positions

#: Terms at or below this value count as exactly satisfied constraints.
ZERO_TOL = 1e-12

__all__ = [
    "CostReport",
    "GapCertificate",
    "ZERO_TOL",
    "eval_f",
    "eval_fhat",
    "grad_fhat",
    "grad_fhat_node",
    "eval_slice",
    "grad_slice",
    "gap_certificate",
]


@dataclass
class CostReport:
    """Cost value together with its per-term breakdown."""

    value: float
    edge_terms: np.ndarray
    anchor_terms: np.ndarray


def _edge_norms(problem, x):
    diff = x[problem.edges[:, 0]] - x[problem.edges[:, 1]]
    return diff, np.sqrt(np.einsum("ep,ep->e", diff, diff))


def _anchor_norms(problem, x):
    diff = x[problem.link_sensor] - problem.anchors[problem.link_anchor] \
        if problem.n_links else np.zeros((0, problem.p))
    return diff, np.sqrt(np.einsum("ep,ep->e", diff, diff))


def eval_f(problem, x):
    """Original cost: half squared deviation of every distance from its range.

    Returns a :class:`CostReport`; the value is the sum of the per-edge and
    per-anchor-link terms.
    """
    x = check_positions(x, problem.n, problem.p)
    _, nrm = _edge_norms(problem, x)
    edge_terms = 0.5 * (nrm - problem.edge_measurements) ** 2
    _, anrm = _anchor_norms(problem, x)
    anchor_terms = 0.5 * (anrm - problem.link_ranges) ** 2
    return CostReport(float(edge_terms.sum() + anchor_terms.sum()), edge_terms, anchor_terms)


def eval_fhat(problem, x):
    """Relaxed cost: like :func:`eval_f` but ranges met with slack cost zero."""
    x = check_positions(x, problem.n, problem.p)
    _, nrm = _edge_norms(problem, x)
    edge_terms = 0.5 * np.maximum(nrm - problem.edge_measurements, 0.0) ** 2
    _, anrm = _anchor_norms(problem, x)
    anchor_terms = 0.5 * np.maximum(anrm - problem.link_ranges, 0.0) ** 2
    return CostReport(float(edge_terms.sum() + anchor_terms.sum()), edge_terms, anchor_terms)


def _residual_coef(nrm, ranges):
    # z - P(z) = (1 - r/||z-c||)(z - c) outside the ball, 0 inside; safe at 0
    excess = nrm - ranges
    return np.where(excess > 0.0, excess / np.where(nrm > 0.0, nrm, 1.0), 0.0)


def grad_fhat(problem, x):
    """Gradient of the relaxed cost, an (n, p) array.

    Each violated edge pulls its endpoints together by the projection
    residual onto the measurement ball; each violated anchor link pulls its
    sensor toward the anchor.  Satisfied terms contribute nothing.
    """
    x = check_positions(x, problem.n, problem.p)
    grad = np.zeros((problem.n, problem.p))
    diff, nrm = _edge_norms(problem, x)
    resid = _residual_coef(nrm, problem.edge_measurements)[:, None] * diff
    np.add.at(grad, problem.edges[:, 0], resid)
    np.add.at(grad, problem.edges[:, 1], -resid)
    adiff, anrm = _anchor_norms(problem, x)
    aresid = _residual_coef(anrm, problem.link_ranges)[:, None] * adiff
    np.add.at(grad, problem.link_sensor, aresid)
    return grad


def grad_fhat_node(problem, x, i):
    """Block of :func:`grad_fhat` belonging to sensor ``i``, a (p,) vector.

    Depends only on ``x_i``, the positions of its graph neighbors, and its
    anchor links; stacking the blocks over all sensors reproduces the full
    gradient exactly.
    """
    x = check_positions(x, problem.n, problem.p)
    i = check_index(i, problem.n)
    g = np.zeros(problem.p)
    # Mirror the full gradient's scatter order: first-endpoint terms, then
    # second-endpoint terms, then anchor terms, each in canonical order.
    for sel, sign in ((problem.edges[:, 0] == i, 1.0), (problem.edges[:, 1] == i, -1.0)):
        idx = np.flatnonzero(sel)
        if idx.size == 0:
            continue
        diff = x[problem.edges[idx, 0]] - x[problem.edges[idx, 1]]
        nrm = np.sqrt(np.einsum("ep,ep->e", diff, diff))
        resid = _residual_coef(nrm, problem.edge_measurements[idx])[:, None] * diff
        for row in resid:
            g += sign * row
    idx = np.flatnonzero(problem.link_sensor == i)
    if idx.size:
        adiff = x[problem.link_sensor[idx]] - problem.anchors[problem.link_anchor[idx]]
        anrm = np.sqrt(np.einsum("ep,ep->e", adiff, adiff))
        aresid = _residual_coef(anrm, problem.link_ranges[idx])[:, None] * adiff
        for row in aresid:
            g += row
    return g


def eval_slice(problem, i, neighbor_positions, z):
    """Sensor ``i``'s share of the relaxed cost with neighbors held fixed.

    Each incident edge contributes a quarter of the squared ball distance,
    splitting the half square evenly between the two endpoints so the slices
    sum to the full relaxed cost; each anchor link contributes its full half
    square since only one sensor owns it.

    Parameters
    ----------
    problem : Problem
    i : int
        Sensor owning the slice.
    neighbor_positions : dict
        Maps every graph neighbor of ``i`` to its fixed (p,) position.
    z : array-like
        Position of sensor ``i`` at which to evaluate.
    """
    z, pos, dists, centers, ranges = _slice_parts(problem, i, neighbor_positions, z)
    total = 0.0
    for q, d in zip(pos, dists):
        excess = np.linalg.norm(z - q) - d
        if excess > 0.0:
            total += 0.25 * excess * excess
    for c, r in zip(centers, ranges):
        excess = np.linalg.norm(z - c) - r
        if excess > 0.0:
            total += 0.5 * excess * excess
    return float(total)


def grad_slice(problem, i, neighbor_positions, z):
    """Gradient of :func:`eval_slice` in ``z``, a (p,) vector."""
    z, pos, dists, centers, ranges = _slice_parts(problem, i, neighbor_positions, z)
    g = np.zeros(problem.p)
    for q, d in zip(pos, dists):
        diff = z - q
        nrm = np.linalg.norm(diff)
        if nrm > d:
            g += 0.5 * ((nrm - d) / nrm) * diff
    for c, r in zip(centers, ranges):
        diff = z - c
        nrm = np.linalg.norm(diff)
        if nrm > r:
            g += ((nrm - r) / nrm) * diff
    return g


def _slice_parts(problem, i, neighbor_positions, z):
    i = check_index(i, problem.n)
    z = check_point(z, problem.p)
    pos, dists = [], []
    for e in range(problem.n_edges):
        a, b = problem.edges[e]
        j = None
        if a == i:
            j = int(b)
        elif b == i:
            j = int(a)
        if j is None:
            continue
        if j not in neighbor_positions:
            raise ValueError(f"missing position for neighbor {j} of sensor {i}")
        pos.append(check_point(neighbor_positions[j], problem.p))
        dists.append(problem.edge_measurements[e])
    idx = np.flatnonzero(problem.link_sensor == i)
    centers = [problem.anchors[problem.link_anchor[k]] for k in idx]
    ranges = [problem.link_ranges[k] for k in idx]
    return z, pos, dists, centers, ranges


@dataclass
class GapCertificate:
    """Optimality-gap bounds for a minimizer of the relaxed cost.

    ``tight_bound`` sums the original cost over the terms the relaxed
    minimizer leaves slack (those are the only terms where the two costs can
    disagree at an optimum); ``apriori_bound`` needs no solution at all and
    sums half the squared ranges.  Both bound the gap between the relaxed
    optimum and the original optimum from above.
    """

    fhat_star: float
    tight_bound: float
    apriori_bound: float
    slack_edges: list = field(default_factory=list)
    slack_links: list = field(default_factory=list)

    def to_dict(self):
        return {
            "fhat_star": self.fhat_star,
            "tight_bound": self.tight_bound,
            "apriori_bound": self.apriori_bound,
            "slack_edges": [[int(i), int(j)] for i, j in self.slack_edges],
            "slack_links": [[int(i), int(a)] for i, a in self.slack_links],
        }


def gap_certificate(problem, x_star, fhat_star=None):
    """Certify how far the relaxed optimum can lie from the original one.

    Parameters
    ----------
    problem : Problem
    x_star : array-like of shape (n, p)
        Minimizer of the relaxed cost.
    fhat_star : float, optional
        Its relaxed cost, recomputed when omitted.

    Returns
    -------
    GapCertificate
    """
    x_star = check_positions(x_star, problem.n, problem.p)
    report = eval_fhat(problem, x_star)
    if fhat_star is None:
        fhat_star = report.value
    _, nrm = _edge_norms(problem, x_star)
    _, anrm = _anchor_norms(problem, x_star)
    slack_e = np.flatnonzero(report.edge_terms <= ZERO_TOL)
    slack_a = np.flatnonzero(report.anchor_terms <= ZERO_TOL)
    tight = 0.5 * float(
        np.sum((nrm[slack_e] - problem.edge_measurements[slack_e]) ** 2)
        + np.sum((anrm[slack_a] - problem.link_ranges[slack_a]) ** 2)
    )
    apriori = 0.5 * float(
        np.sum(problem.edge_measurements ** 2) + np.sum(problem.link_ranges ** 2)
    )
    return GapCertificate(
        fhat_star=float(fhat_star),
        tight_bound=tight,
        apriori_bound=apriori,
        slack_edges=[(int(i), int(j)) for i, j in problem.edges[slack_e]],
        slack_links=[
            (int(problem.link_sensor[k]), int(problem.link_anchor[k])) for k in slack_a
        ],
    )
