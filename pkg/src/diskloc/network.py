"""Localization problem instances and the graph operators defined on them.

A :class:`Problem` bundles the sensor graph (edges with range measurements),
the anchors (known positions with range measurements to some sensors), and
optionally the ground-truth sensor positions.  Sensor positions are handled
as stacked (n, p) arrays throughout.
"""

import itertools
import json

import numpy as np

from .validation import check_positions

__all__ = [
    "Problem",
    "ValidationError",
    "GenerationError",
    "validate",
    "symmetrize_measurements",
    "incidence_apply",
    "incidence_transpose_apply",
    "laplacian_apply",
    "lipschitz_fhat",
    "generate_geometric",
]


class ValidationError(ValueError):
    """A problem instance violates a structural or connectivity requirement."""


class GenerationError(RuntimeError):
    """Random generation failed to produce a valid instance."""


class Problem:
    """A range-based localization instance.

    Parameters
    ----------
    n : int
        Number of sensors (positive).
    p : int
        Ambient dimension, one of 1, 2, 3.
    edges : array-like of shape (E, 2)
        Sensor-sensor edges as index pairs.  Pairs are reordered so the
        smaller index comes first and then sorted lexicographically; the
        measurements are realigned accordingly.  Self loops and duplicate
        pairs are rejected.
    edge_measurements : array-like of shape (E,)
        Nonnegative range measurement per edge, aligned with ``edges``.
    anchors : array-like of shape (m, p)
        Known anchor positions; may be empty.
    anchor_links : array-like of shape (A, 3)
        Triples ``(sensor, anchor, range)``; sorted by (sensor, anchor), and
        duplicate pairs are rejected.
    truth : array-like of shape (n, p), optional
        Ground-truth sensor positions, kept for synthetic experiments.

    Notes
    -----
    Construction enforces structural sanity only.  Solvability (connected
    graph, at least one anchor link) is checked by :meth:`validate`.
    """

    def __init__(self, n, p, edges, edge_measurements, anchors, anchor_links, truth=None):
        self.n = int(n)
        self.p = int(p)
        if self.n < 1:
            raise ValueError(f"need at least one sensor, got n={n}")
        if self.p not in (1, 2, 3):
            raise ValueError(f"ambient dimension must be 1, 2, or 3, got {p}")

        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        meas = np.asarray(edge_measurements, dtype=np.float64).reshape(-1)
        if edges.shape[0] != meas.shape[0]:
            raise ValueError(
                f"got {edges.shape[0]} edges but {meas.shape[0]} edge measurements"
            )
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            bad = int(edges[np.argmax(edges[:, 0] == edges[:, 1]), 0])
            raise ValueError(f"self loop at sensor {bad}")
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        order = np.lexsort((hi, lo))
        self.edges = np.column_stack((lo[order], hi[order]))
        self.edge_measurements = meas[order]
        if self.edges.shape[0] > 1:
            same = np.all(self.edges[1:] == self.edges[:-1], axis=1)
            if np.any(same):
                i, j = self.edges[1 + int(np.argmax(same))]
                raise ValueError(f"duplicate edge ({i}, {j})")
        if not np.all(np.isfinite(self.edge_measurements)):
            raise ValueError("edge measurements must be finite")
        if np.any(self.edge_measurements < 0):
            e = int(np.argmax(self.edge_measurements < 0))
            i, j = self.edges[e]
            raise ValueError(f"negative measurement on edge ({i}, {j})")

        anchors = np.asarray(anchors, dtype=np.float64)
        if anchors.size == 0:
            anchors = anchors.reshape(0, self.p)
        if anchors.ndim != 2 or anchors.shape[1] != self.p:
            raise ValueError(
                f"expected anchors of shape (m, {self.p}), got {anchors.shape}"
            )
        if not np.all(np.isfinite(anchors)):
            raise ValueError("anchor positions must be finite")
        self.anchors = anchors.copy()
        self.m = anchors.shape[0]

        links = np.asarray(anchor_links, dtype=np.float64).reshape(-1, 3)
        sensor = links[:, 0].astype(np.int64)
        anchor = links[:, 1].astype(np.int64)
        if np.any(links[:, 0] != sensor) or np.any(links[:, 1] != anchor):
            raise ValueError("anchor link indices must be integers")
        if links.shape[0] and (sensor.min() < 0 or sensor.max() >= self.n):
            raise ValueError("anchor link sensor index out of range")
        if links.shape[0] and (anchor.min() < 0 or anchor.max() >= self.m):
            raise ValueError("anchor link anchor index out of range")
        order = np.lexsort((anchor, sensor))
        self.link_sensor = sensor[order]
        self.link_anchor = anchor[order]
        self.link_ranges = links[order, 2]
        if self.link_sensor.size > 1:
            same = (self.link_sensor[1:] == self.link_sensor[:-1]) & (
                self.link_anchor[1:] == self.link_anchor[:-1]
            )
            if np.any(same):
                k = 1 + int(np.argmax(same))
                raise ValueError(
                    f"duplicate anchor link ({self.link_sensor[k]}, {self.link_anchor[k]})"
                )
        if not np.all(np.isfinite(self.link_ranges)):
            raise ValueError("anchor link ranges must be finite")
        if np.any(self.link_ranges < 0):
            k = int(np.argmax(self.link_ranges < 0))
            raise ValueError(
                f"negative measurement on anchor link ({self.link_sensor[k]}, {self.link_anchor[k]})"
            )

        self.truth = None if truth is None else check_positions(truth, self.n, self.p).copy()

        self.degrees = np.bincount(self.edges.ravel(), minlength=self.n).astype(np.int64)
        self.anchor_counts = np.bincount(self.link_sensor, minlength=self.n).astype(np.int64)
        for a in (self.edges, self.edge_measurements, self.anchors, self.link_sensor,
                  self.link_anchor, self.link_ranges, self.degrees, self.anchor_counts):
            a.flags.writeable = False
        if self.truth is not None:
            self.truth.flags.writeable = False
        self._csr = None

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def n_links(self):
        return self.link_sensor.size

    @property
    def average_degree(self):
        return 2.0 * self.n_edges / self.n

    def validate(self):
        """Check solvability and raise :class:`ValidationError` on failure.

        Requires finite nonnegative measurements, a connected sensor graph,
        and at least one anchor link.  Returns the problem for chaining.
        """
        bad = ~np.isfinite(self.edge_measurements) | (self.edge_measurements < 0)
        if np.any(bad):
            i, j = self.edges[int(np.argmax(bad))]
            raise ValidationError(f"malformed measurement on edge ({i}, {j})")
        bad = ~np.isfinite(self.link_ranges) | (self.link_ranges < 0)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise ValidationError(
                f"malformed measurement on anchor link "
                f"({self.link_sensor[k]}, {self.link_anchor[k]})"
            )
        if self.n_links == 0:
            raise ValidationError("no anchor link: at least one sensor must hear an anchor")
        seen = self._bfs_component(0)
        if not np.all(seen):
            missing = int(np.argmin(seen))
            raise ValidationError(
                f"disconnected sensor graph: sensor {missing} is not reachable from sensor 0"
            )
        return self

    def _bfs_component(self, start):
        nbr_ptr, nbr_idx = self._compiled()[:2]
        seen = np.zeros(self.n, dtype=bool)
        seen[start] = True
        frontier = [start]
        while frontier:
            nxt = []
            for i in frontier:
                for j in nbr_idx[nbr_ptr[i]:nbr_ptr[i + 1]]:
                    if not seen[j]:
                        seen[j] = True
                        nxt.append(int(j))
            frontier = nxt
        return seen

    def _compiled(self):
        """Flat CSR-style arrays consumed by the numeric kernels.

        Returns ``(nbr_ptr, nbr_idx, nbr_d, anc_ptr, link_center, edge_src,
        edge_dst)`` where the per-sensor neighbor lists follow the canonical
        edge order and the endpoint arrays are contiguous copies.
        """
        if self._csr is None:
            n = self.n
            nbr_ptr = np.zeros(n + 1, dtype=np.int64)
            nbr_ptr[1:] = np.cumsum(self.degrees)
            nbr_idx = np.zeros(nbr_ptr[-1], dtype=np.int64)
            nbr_d = np.zeros(nbr_ptr[-1], dtype=np.float64)
            pos = nbr_ptr[:-1].copy()
            for e in range(self.n_edges):
                i, j = self.edges[e]
                d = self.edge_measurements[e]
                nbr_idx[pos[i]] = j
                nbr_d[pos[i]] = d
                pos[i] += 1
                nbr_idx[pos[j]] = i
                nbr_d[pos[j]] = d
                pos[j] += 1
            anc_ptr = np.zeros(n + 1, dtype=np.int64)
            anc_ptr[1:] = np.cumsum(self.anchor_counts)
            if self.n_links:
                link_center = np.ascontiguousarray(self.anchors[self.link_anchor])
            else:
                link_center = np.zeros((0, self.p), dtype=np.float64)
            edge_src = np.ascontiguousarray(self.edges[:, 0])
            edge_dst = np.ascontiguousarray(self.edges[:, 1])
            self._csr = (nbr_ptr, nbr_idx, nbr_d, anc_ptr, link_center,
                         edge_src, edge_dst)
        return self._csr

    def with_measurements(self, edge_measurements, link_ranges):
        """Copy of this problem with replaced measurements, same topology."""
        links = np.column_stack(
            (self.link_sensor, self.link_anchor, np.asarray(link_ranges, dtype=np.float64))
        )
        return Problem(self.n, self.p, self.edges, edge_measurements,
                       self.anchors, links, truth=self.truth)

    def to_dict(self):
        out = {
            "n": self.n,
            "p": self.p,
            "edges": self.edges.tolist(),
            "edge_measurements": self.edge_measurements.tolist(),
            "anchors": self.anchors.tolist(),
            "anchor_links": [
                [int(s), int(a), float(r)]
                for s, a, r in zip(self.link_sensor, self.link_anchor, self.link_ranges)
            ],
        }
        if self.truth is not None:
            out["truth"] = self.truth.tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        known = {"n", "p", "edges", "edge_measurements", "anchors", "anchor_links", "truth"}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown problem fields: {sorted(extra)}")
        missing = known - {"truth"} - set(data)
        if missing:
            raise ValueError(f"missing problem fields: {sorted(missing)}")
        return cls(data["n"], data["p"], data["edges"], data["edge_measurements"],
                   data["anchors"], data["anchor_links"], truth=data.get("truth"))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def __eq__(self, other):
        if not isinstance(other, Problem):
            return NotImplemented
        if (self.truth is None) != (other.truth is None):
            return False
        return (
            self.n == other.n
            and self.p == other.p
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.edge_measurements, other.edge_measurements)
            and np.array_equal(self.anchors, other.anchors)
            and np.array_equal(self.link_sensor, other.link_sensor)
            and np.array_equal(self.link_anchor, other.link_anchor)
            and np.array_equal(self.link_ranges, other.link_ranges)
            and (self.truth is None or np.array_equal(self.truth, other.truth))
        )

    def __repr__(self):
        return (f"Problem(n={self.n}, p={self.p}, edges={self.n_edges}, "
                f"anchors={self.m}, links={self.n_links})")


def validate(problem):
    """Functional form of :meth:`Problem.validate`."""
    return problem.validate()


def symmetrize_measurements(raw):
    """Fold a dict of directed range measurements into undirected ones.

    Parameters
    ----------
    raw : dict
        Maps ordered pairs ``(i, j)`` to nonnegative ranges.  When both
        directions of a pair are present they are averaged.

    Returns
    -------
    dict
        Maps unordered pairs, keyed ``(min, max)``, to the folded range.
    """
    out = {}
    for (i, j), d in sorted(raw.items()):
        i, j = int(i), int(j)
        if i == j:
            raise ValueError(f"self loop at sensor {i}")
        d = float(d)
        if not np.isfinite(d) or d < 0:
            raise ValueError(f"malformed measurement on edge ({i}, {j}): {d!r}")
        key = (min(i, j), max(i, j))
        if key in out:
            out[key] = 0.5 * (out[key] + d)
        else:
            out[key] = d
    return out


def incidence_apply(problem, x):
    """Apply the edge-incidence operator: edge e = (i, j) maps to x_i - x_j.

    The sign convention follows the canonical edge orientation (small index
    minus large index).  Returns an (E, p) array.
    """
    x = check_positions(x, problem.n, problem.p)
    return x[problem.edges[:, 0]] - x[problem.edges[:, 1]]


def incidence_transpose_apply(problem, e):
    """Apply the transpose of the edge-incidence operator.

    Scatter-adds each edge vector onto its first endpoint and subtracts it
    from its second.  Returns an (n, p) array.
    """
    e = np.asarray(e, dtype=np.float64)
    if e.shape != (problem.n_edges, problem.p):
        raise ValueError(
            f"expected edge values of shape ({problem.n_edges}, {problem.p}), got {e.shape}"
        )
    out = np.zeros((problem.n, problem.p))
    np.add.at(out, problem.edges[:, 0], e)
    np.add.at(out, problem.edges[:, 1], -e)
    return out


def laplacian_apply(problem, x):
    """Apply the graph Laplacian: node i maps to deg(i) x_i - sum of neighbors."""
    x = check_positions(x, problem.n, problem.p)
    out = problem.degrees[:, None] * x
    np.add.at(out, problem.edges[:, 0], -x[problem.edges[:, 1]])
    np.add.at(out, problem.edges[:, 1], -x[problem.edges[:, 0]])
    return out


def lipschitz_fhat(problem, method="degree"):
    """Gradient Lipschitz constant of the relaxed cost.

    Parameters
    ----------
    problem : Problem
    method : {"degree", "edge"}
        "degree" returns ``2 * max_degree + max_anchor_links``, bounding the
        Laplacian spectrum by twice the maximum degree.  "edge" sharpens the
        Laplacian part to ``max_{(i,j)} (deg(i) + deg(j) - common(i, j))``
        with ``common`` the number of shared neighbors; never larger than the
        degree bound.

    Returns
    -------
    float
        Valid Lipschitz constant; strictly positive whenever the problem has
        an anchor link or an edge.
    """
    max_links = int(problem.anchor_counts.max()) if problem.n else 0
    if method == "degree":
        lap = 2.0 * (int(problem.degrees.max()) if problem.n else 0)
    elif method == "edge":
        neighbors = [set() for _ in range(problem.n)]
        for i, j in problem.edges:
            neighbors[i].add(int(j))
            neighbors[j].add(int(i))
        lap = 0.0
        for i, j in problem.edges:
            common = len(neighbors[i] & neighbors[j])
            lap = max(lap, float(problem.degrees[i] + problem.degrees[j] - common))
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(lap + max_links)


def _corner_anchors(p):
    return np.array(list(itertools.product((0.0, 1.0), repeat=p)))


def generate_geometric(n, p=2, connect_radius=None, target_avg_degree=None,
                       anchors_at_corners=True, rng_seed=0, max_retries=100):
    """Draw a random geometric instance on the unit hypercube.

    Sensor positions are uniform on [0, 1]^p; sensors within the connect
    radius of each other are joined by an edge, and sensors within the radius
    of an anchor get an anchor link.  Measurements are the exact distances
    (add noise separately) and the drawn positions are stored as the truth.

    Parameters
    ----------
    n : int
        Number of sensors.
    p : int
        Ambient dimension.
    connect_radius : float, optional
        Fixed connectivity radius.  Exactly one of ``connect_radius`` and
        ``target_avg_degree`` must be given.
    target_avg_degree : float, optional
        Calibrate the radius per draw so the average sensor degree comes out
        at the target: the radius is set to the k-th smallest pairwise
        distance with ``k = round(target * n / 2)``.
    anchors_at_corners : bool
        Place an anchor at each corner of the hypercube.  Without anchors no
        draw can pass validation.
    rng_seed : int
        Seed for the position draws.
    max_retries : int
        Draws attempted before giving up.

    Returns
    -------
    Problem
        A validated instance with truth and noiseless measurements.

    Raises
    ------
    GenerationError
        If no draw within ``max_retries`` yields a connected graph with an
        anchor link.
    """
    n = int(n)
    if (connect_radius is None) == (target_avg_degree is None):
        raise ValueError("give exactly one of connect_radius and target_avg_degree")
    if connect_radius is not None and connect_radius <= 0:
        raise ValueError("connect radius must be positive")
    if target_avg_degree is not None and not 0 < target_avg_degree < n:
        raise ValueError("target average degree must be in (0, n)")
    rng = np.random.default_rng(rng_seed)
    anchors = _corner_anchors(p) if anchors_at_corners else np.zeros((0, p))
    last_error = "no attempts made"
    for _ in range(max_retries):
        pos = rng.random((n, p))
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt(np.einsum("ijp,ijp->ij", diff, diff))
        iu, ju = np.triu_indices(n, k=1)
        pair_d = dist[iu, ju]
        if connect_radius is not None:
            radius = float(connect_radius)
        else:
            if pair_d.size == 0:
                radius = 0.5
            else:
                k = int(round(target_avg_degree * n / 2.0))
                k = min(max(k, 1), pair_d.size)
                radius = float(np.sort(pair_d)[k - 1])
        keep = pair_d <= radius
        edges = np.column_stack((iu[keep], ju[keep]))
        meas = pair_d[keep]
        links = []
        for a, c in enumerate(anchors):
            ad = np.linalg.norm(pos - c, axis=1)
            for i in np.flatnonzero(ad <= radius):
                links.append((int(i), a, float(ad[i])))
        prob = Problem(n, p, edges, meas, anchors,
                       np.array(links).reshape(-1, 3), truth=pos)
        try:
            return prob.validate()
        except ValidationError as exc:
            last_error = str(exc)
    raise GenerationError(
        f"no valid instance after {max_retries} draws (last failure: {last_error})"
    )
