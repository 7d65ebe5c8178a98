"""Solvers for the relaxed localization cost.

Three scikit-learn style estimators share one interface: construct with
options, call :meth:`fit` with a :class:`~diskloc.network.Problem`, read the
``estimate_`` attribute.  :class:`ParallelLocalizer` runs the accelerated
full-gradient iteration in which every sensor updates at every step;
:class:`AsyncExactLocalizer` and :class:`AsyncInexactLocalizer` run the
gossip iteration in which one randomly activated sensor updates per tick,
either re-solving its own block or taking a single gradient step on it.

All three are deterministic functions of (problem, options, random_state):
repeated fits reproduce bit-identical estimates and traces.
"""

import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import _kernels
from .network import lipschitz_fhat
from .validation import check_point, check_positions

__all__ = [
    "nesterov_weight",
    "ActivationSequence",
    "SolverTrace",
    "SingleSourceResult",
    "solve_single_source",
    "ParallelLocalizer",
    "AsyncExactLocalizer",
    "AsyncInexactLocalizer",
]

_STOP_CODES = {
    "fixed-iterations": _kernels.STOP_FIXED,
    "gradient-norm": _kernels.STOP_GRADIENT,
    "relative-improvement": _kernels.STOP_RELATIVE,
}

_TERM_NAMES = {
    _kernels.TERM_MAX: "max-iterations",
    _kernels.TERM_GRADIENT: "gradient-norm",
    _kernels.TERM_RELATIVE: "relative-improvement",
}


def nesterov_weight(k):
    """Momentum weight ``(k - 2) / (k + 1)`` of iteration ``k >= 1``."""
    k = int(k)
    if k < 1:
        raise ValueError(f"iteration index must be >= 1, got {k}")
    return (k - 2.0) / (k + 1.0)


class ActivationSequence:
    """Pre-drawn i.i.d. sensor activations.

    Parameters
    ----------
    probabilities : array-like of shape (n,)
        Positive activation weights, normalized to sum to one.
    seed : int
        Seed of the underlying uniform stream.
    """

    def __init__(self, probabilities, seed=0):
        probabilities = np.asarray(probabilities, dtype=np.float64)
        if probabilities.ndim != 1 or probabilities.size == 0:
            raise ValueError("probabilities must be a nonempty 1-D array")
        if not np.all(np.isfinite(probabilities)) or np.any(probabilities <= 0):
            raise ValueError("probabilities must be finite and strictly positive")
        self.probabilities = probabilities / probabilities.sum()
        self.seed = int(seed)

    def draw(self, length):
        """Draw ``length`` activations as an int64 array."""
        u = np.random.default_rng(self.seed).random(int(length))
        cum = np.cumsum(self.probabilities)
        cum[-1] = 1.0
        return np.searchsorted(cum, u, side="right").astype(np.int64)


@dataclass
class SolverTrace:
    """Per-iteration record of a solver run.

    Row ``k`` describes iterate ``k``; row 0 is the start point, so a run of
    ``K`` iterations yields ``K + 1`` rows.  ``broadcasts`` counts positions
    sent network-wide up to and including iteration ``k``.
    """

    fhat: np.ndarray
    grad_norm: np.ndarray
    broadcasts: np.ndarray
    n: int
    p: int
    iterates: np.ndarray = None
    termination: str = "max-iterations"

    @property
    def k(self):
        return np.arange(self.fhat.size)

    @property
    def n_iterations(self):
        return self.fhat.size - 1

    @property
    def broadcasts_per_sensor(self):
        return self.broadcasts / self.n

    def to_csv(self, path):
        """Write rows ``k, fhat, grad_norm, broadcasts_per_sensor``."""
        per_sensor = self.broadcasts_per_sensor
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("k,fhat,grad_norm,broadcasts_per_sensor\n")
            for k in range(self.fhat.size):
                fh.write(f"{k},{float(self.fhat[k])!r},{float(self.grad_norm[k])!r},"
                         f"{float(per_sensor[k])!r}\n")


@dataclass
class SingleSourceResult:
    """Outcome of a single-sensor subproblem solve."""

    estimate: np.ndarray
    n_iterations: int


def solve_single_source(z0, neighbor_positions, neighbor_dists,
                        anchor_positions, anchor_ranges, lipschitz,
                        edge_weight=0.25, max_iterations=200, eps_gradient=1e-9,
                        proximal_weight=0.0, proximal_center=None):
    """Minimize one sensor's share of the relaxed cost, neighbors fixed.

    Runs the accelerated iteration with step ``1 / (lipschitz +
    proximal_weight)`` from ``z0`` until the gradient norm falls below
    ``eps_gradient`` or the budget runs out, and returns the best point seen.
    The default ``edge_weight`` of one quarter matches
    :func:`diskloc.cost.eval_slice`; one half gives the exact restriction of
    the relaxed cost to the sensor's block.

    Parameters
    ----------
    z0 : array-like of shape (p,)
        Start point; the result never has a larger objective value.
    neighbor_positions : array-like of shape (m, p)
        Fixed positions of the sensor's graph neighbors.
    neighbor_dists : array-like of shape (m,)
        Range measurements to those neighbors.
    anchor_positions : array-like of shape (a, p)
        Linked anchor positions.
    anchor_ranges : array-like of shape (a,)
        Range measurements to those anchors.
    lipschitz : float
        Gradient Lipschitz constant to step against, typically the constant
        of the full relaxed cost.
    proximal_weight : float
        Weight of an optional proximal term centered at ``proximal_center``
        (``z0`` when omitted).

    Returns
    -------
    SingleSourceResult
    """
    z0 = check_point(z0)
    p = z0.size
    nbr_pos = np.asarray(neighbor_positions, dtype=np.float64).reshape(-1, p)
    nbr_d = np.asarray(neighbor_dists, dtype=np.float64).reshape(-1)
    anc_pos = np.asarray(anchor_positions, dtype=np.float64).reshape(-1, p)
    anc_r = np.asarray(anchor_ranges, dtype=np.float64).reshape(-1)
    if nbr_pos.shape[0] != nbr_d.size:
        raise ValueError("neighbor positions and distances disagree in length")
    if anc_pos.shape[0] != anc_r.size:
        raise ValueError("anchor positions and ranges disagree in length")
    lipschitz = float(lipschitz)
    if lipschitz <= 0:
        raise ValueError("lipschitz must be positive")
    if proximal_weight < 0:
        raise ValueError("proximal weight must be nonnegative")
    center = z0 if proximal_center is None else check_point(proximal_center, p)
    z_out = np.zeros(p)
    iters = _kernels.single_source_loop(
        z0.copy(), np.ascontiguousarray(nbr_pos), nbr_d,
        np.ascontiguousarray(anc_pos), anc_r,
        float(edge_weight), lipschitz, int(max_iterations), float(eps_gradient),
        float(proximal_weight), center.copy(), z_out,
    )
    return SingleSourceResult(estimate=z_out, n_iterations=int(iters))


class _BaseLocalizer(BaseEstimator):
    """Shared fitting machinery; concrete solvers define ``_run``."""

    def _common_checks(self, problem):
        problem.validate()
        if self.stop_rule not in _STOP_CODES:
            raise ValueError(
                f"unknown stop rule {self.stop_rule!r}; "
                f"choose from {sorted(_STOP_CODES)}"
            )
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.eps_gradient <= 0 or self.eps_improvement <= 0:
            raise ValueError("stopping tolerances must be positive")

    def fit(self, problem, init=None):
        """Solve ``problem`` and store the result on the estimator.

        Parameters
        ----------
        problem : Problem
            Validated localization instance.
        init : array-like of shape (n, p), optional
            Start positions; drawn uniformly on the unit cube from
            ``random_state`` when omitted.

        Returns
        -------
        self
            With ``estimate_``, ``trace_``, ``termination_``,
            ``n_iterations_``, ``fhat_``, ``grad_norm_``, ``broadcasts_``,
            and ``lipschitz_`` attributes set; asynchronous solvers also set
            ``activations_``, the sequence of sensors that actually fired.
        """
        self._common_checks(problem)
        lip = lipschitz_fhat(problem, self.lipschitz_method)
        seq = np.random.SeedSequence(self.random_state)
        init_seq, act_seq, inner_seq = seq.spawn(3)
        if init is None:
            x0 = np.random.default_rng(init_seq).random((problem.n, problem.p))
        else:
            x0 = check_positions(init, problem.n, problem.p).copy()
        max_iter = int(self.max_iterations)
        record = bool(self.record_trace)
        keep = record and bool(self.keep_iterates)
        fhat_tr = np.zeros(max_iter + 1) if record else np.zeros(0)
        gnorm_tr = np.zeros(max_iter + 1) if record else np.zeros(0)
        iter_tr = (np.zeros((max_iter + 1, problem.n, problem.p))
                   if keep else np.zeros((0, 0, 0)))
        started = time.perf_counter()
        done, term, fhat, gnorm = self._run(
            problem, x0, lip, act_seq, inner_seq,
            record, fhat_tr, gnorm_tr, keep, iter_tr,
        )
        self.fit_time_ = time.perf_counter() - started
        self.estimate_ = x0
        self.lipschitz_ = lip
        self.termination_ = _TERM_NAMES[term]
        self.n_iterations_ = int(done)
        self.fhat_ = float(fhat)
        self.grad_norm_ = float(gnorm)
        per_iter = problem.n if self._broadcasts_per_iteration_all else 1
        self.broadcasts_ = int(done) * per_iter
        if not self._broadcasts_per_iteration_all:
            # keep only the activations that actually ran
            self.activations_ = self.activations_[:done]
        if record:
            broadcasts = np.arange(done + 1, dtype=np.int64) * per_iter
            self.trace_ = SolverTrace(
                fhat=fhat_tr[:done + 1].copy(),
                grad_norm=gnorm_tr[:done + 1].copy(),
                broadcasts=broadcasts,
                n=problem.n,
                p=problem.p,
                iterates=iter_tr[:done + 1].copy() if keep else None,
                termination=self.termination_,
            )
        else:
            self.trace_ = None
        return self

    def fit_predict(self, problem, init=None):
        """Fit and return the (n, p) position estimate."""
        return self.fit(problem, init=init).estimate_

    @property
    def converged_(self):
        """Whether the configured stop rule was met within the budget."""
        if self.stop_rule == "fixed-iterations":
            return True
        return self.termination_ != "max-iterations"


class ParallelLocalizer(_BaseLocalizer):
    """Accelerated full-gradient solver; all sensors update every iteration.

    Each iteration extrapolates along the previous step with the momentum
    weight ``(k - 2) / (k + 1)`` and then takes a gradient step of length
    ``1 / lipschitz``.  The suboptimality of iterate ``k`` decays like
    ``1 / (k + 1)**2``.

    Parameters
    ----------
    max_iterations : int
        Iteration budget.
    stop_rule : {"gradient-norm", "relative-improvement", "fixed-iterations"}
        When to stop early: gradient norm below ``eps_gradient``, relative
        step size below ``eps_improvement``, or never.
    eps_gradient, eps_improvement : float
        Tolerances for the adaptive stop rules.
    lipschitz_method : {"degree", "edge"}
        Bound used for the step size; see
        :func:`~diskloc.network.lipschitz_fhat`.
    record_trace : bool
        Record per-iteration cost and gradient norm in ``trace_``.
    keep_iterates : bool
        Also snapshot every iterate (needs ``record_trace``).
    random_state : int
        Seeds the default initialization.
    """

    _broadcasts_per_iteration_all = True

    def __init__(self, max_iterations=100000, stop_rule="gradient-norm",
                 eps_gradient=1e-6, eps_improvement=1e-6,
                 lipschitz_method="degree", record_trace=True,
                 keep_iterates=True, random_state=0):
        self.max_iterations = max_iterations
        self.stop_rule = stop_rule
        self.eps_gradient = eps_gradient
        self.eps_improvement = eps_improvement
        self.lipschitz_method = lipschitz_method
        self.record_trace = record_trace
        self.keep_iterates = keep_iterates
        self.random_state = random_state

    def _run(self, problem, x0, lip, act_seq, inner_seq,
             record, fhat_tr, gnorm_tr, keep, iter_tr):
        _, _, _, _, link_center, edge_src, edge_dst = problem._compiled()
        return _kernels.parallel_loop(
            x0, x0.copy(),
            edge_src, edge_dst, problem.edge_measurements,
            problem.link_sensor, link_center, problem.link_ranges,
            lip, int(self.max_iterations), _STOP_CODES[self.stop_rule],
            float(self.eps_gradient), float(self.eps_improvement),
            record, fhat_tr, gnorm_tr, keep, iter_tr,
        )


class _BaseAsyncLocalizer(_BaseLocalizer):
    """Shared gossip machinery: activation draws and broadcast accounting."""

    _broadcasts_per_iteration_all = False

    def _activations(self, problem, act_seq):
        if self.activation_probabilities is None:
            probs = np.full(problem.n, 1.0 / problem.n)
        else:
            probs = np.asarray(self.activation_probabilities, dtype=np.float64)
            if probs.shape != (problem.n,):
                raise ValueError(
                    f"activation probabilities must have shape ({problem.n},), "
                    f"got {probs.shape}"
                )
        seq = ActivationSequence(probs, seed=int(act_seq.generate_state(1)[0]))
        self.activations_ = seq.draw(int(self.max_iterations))
        return self.activations_


class AsyncExactLocalizer(_BaseAsyncLocalizer):
    """Gossip solver whose activated sensor re-solves its own block.

    Each tick one sensor wakes, reads its neighbors' last broadcast
    positions, minimizes the relaxed cost in its own position (a small convex
    problem solved by the accelerated inner loop), and broadcasts the result.
    Block optima never increase the cost, so the run is monotone when the
    inner loop starts warm.

    Parameters
    ----------
    activation_probabilities : array-like of shape (n,), optional
        Positive activation weights per sensor; uniform when omitted.
    inner_max_iterations : int
        Budget of the per-tick block solve.
    inner_eps_gradient : float
        Gradient tolerance of the block solve.
    inner_init : {"warm", "random"}
        Start the block solve from the sensor's current position or from a
        fresh uniform draw on the unit cube.
    proximal_weight : float
        Optional proximal damping of the block solve toward the sensor's
        previous position.
    random_state : int
        Seeds initialization, activations, and random inner starts.

    Other parameters match :class:`ParallelLocalizer`.
    """

    def __init__(self, max_iterations=100000, stop_rule="gradient-norm",
                 eps_gradient=1e-6, eps_improvement=1e-6,
                 lipschitz_method="degree", record_trace=True,
                 keep_iterates=True, random_state=0,
                 activation_probabilities=None, inner_max_iterations=200,
                 inner_eps_gradient=1e-9, inner_init="warm",
                 proximal_weight=0.0):
        self.max_iterations = max_iterations
        self.stop_rule = stop_rule
        self.eps_gradient = eps_gradient
        self.eps_improvement = eps_improvement
        self.lipschitz_method = lipschitz_method
        self.record_trace = record_trace
        self.keep_iterates = keep_iterates
        self.random_state = random_state
        self.activation_probabilities = activation_probabilities
        self.inner_max_iterations = inner_max_iterations
        self.inner_eps_gradient = inner_eps_gradient
        self.inner_init = inner_init
        self.proximal_weight = proximal_weight

    def _run(self, problem, x0, lip, act_seq, inner_seq,
             record, fhat_tr, gnorm_tr, keep, iter_tr):
        if self.inner_init not in ("warm", "random"):
            raise ValueError(f"unknown inner_init {self.inner_init!r}")
        if int(self.inner_max_iterations) < 1:
            raise ValueError("inner_max_iterations must be >= 1")
        if self.inner_eps_gradient <= 0:
            raise ValueError("inner_eps_gradient must be positive")
        if self.proximal_weight < 0:
            raise ValueError("proximal_weight must be nonnegative")
        activations = self._activations(problem, act_seq)
        warm = self.inner_init == "warm"
        if warm:
            rand_init = np.zeros((0, problem.p))
        else:
            rand_init = np.random.default_rng(inner_seq).random(
                (int(self.max_iterations), problem.p))
        nbr_ptr, nbr_idx, nbr_d, anc_ptr, link_center, edge_src, edge_dst = \
            problem._compiled()
        return _kernels.async_exact_loop(
            x0, activations, nbr_ptr, nbr_idx, nbr_d, anc_ptr,
            link_center, problem.link_ranges,
            edge_src, edge_dst, problem.edge_measurements,
            problem.link_sensor, link_center, problem.link_ranges,
            lip, _STOP_CODES[self.stop_rule],
            float(self.eps_gradient), float(self.eps_improvement),
            int(self.inner_max_iterations), float(self.inner_eps_gradient),
            warm, rand_init, float(self.proximal_weight),
            record, fhat_tr, gnorm_tr, keep, iter_tr,
        )


class AsyncInexactLocalizer(_BaseAsyncLocalizer):
    """Gossip solver whose activated sensor takes one gradient step.

    Each tick one sensor wakes and moves by ``-1 / lipschitz`` times its own
    gradient block.  Cheaper per tick than :class:`AsyncExactLocalizer` and
    still monotone: each step decreases the cost by at least the squared
    block gradient norm over twice the Lipschitz constant.

    Parameters match :class:`AsyncExactLocalizer` minus the inner-solve ones.
    """

    def __init__(self, max_iterations=100000, stop_rule="gradient-norm",
                 eps_gradient=1e-6, eps_improvement=1e-6,
                 lipschitz_method="degree", record_trace=True,
                 keep_iterates=True, random_state=0,
                 activation_probabilities=None):
        self.max_iterations = max_iterations
        self.stop_rule = stop_rule
        self.eps_gradient = eps_gradient
        self.eps_improvement = eps_improvement
        self.lipschitz_method = lipschitz_method
        self.record_trace = record_trace
        self.keep_iterates = keep_iterates
        self.random_state = random_state
        self.activation_probabilities = activation_probabilities

    def _run(self, problem, x0, lip, act_seq, inner_seq,
             record, fhat_tr, gnorm_tr, keep, iter_tr):
        activations = self._activations(problem, act_seq)
        nbr_ptr, nbr_idx, nbr_d, anc_ptr, link_center, edge_src, edge_dst = \
            problem._compiled()
        return _kernels.async_inexact_loop(
            x0, activations, nbr_ptr, nbr_idx, nbr_d, anc_ptr,
            link_center, problem.link_ranges,
            edge_src, edge_dst, problem.edge_measurements,
            problem.link_sensor, link_center, problem.link_ranges,
            lip, _STOP_CODES[self.stop_rule],
            float(self.eps_gradient), float(self.eps_improvement),
            record, fhat_tr, gnorm_tr, keep, iter_tr,
        )
