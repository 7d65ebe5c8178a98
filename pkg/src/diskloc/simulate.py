"""Monte Carlo experiments over noise levels, trials, and solvers.

The harness draws noisy ranges around a ground-truth instance, runs each
configured solver from a fresh seeded initialization, and accumulates
positioning error, final costs, gap bounds, and communication counts.  Runs
are deterministic functions of the master seed: measurement draws depend
only on (master seed, noise level, trial), so adding or reordering solvers
never changes them, and worker threads only change scheduling, not results.
"""

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from . import cost
from .validation import check_positions

__all__ = [
    "gen_measurements",
    "rmse",
    "ExperimentConfig",
    "ExperimentResult",
    "run_experiment",
]

#: Environment variable that caps the experiment worker pool.
WORKERS_ENV = "LOCNET_WORKERS"

_CSV_COLUMNS = ("solver", "sigma", "trial", "rmse_contrib", "fhat_final",
                "f_final", "tight_bound", "apriori_bound", "broadcasts")


def gen_measurements(problem, sigma, rng_seed=0):
    """Draw noisy ranges around the true distances of an instance.

    Every edge and every anchor link gets one Gaussian perturbation of
    standard deviation ``sigma``, folded to a nonnegative range by absolute
    value; ``sigma = 0`` reproduces the exact distances.  Draws follow the
    canonical ordering (edges first, then anchor links) so a seed pins the
    measurements regardless of how they are consumed.

    Parameters
    ----------
    problem : Problem
        Instance with stored ground truth.
    sigma : float
        Noise standard deviation, nonnegative.
    rng_seed : int or numpy.random.SeedSequence
        Seed of the noise stream.

    Returns
    -------
    (ndarray, ndarray)
        Edge measurements of shape (E,) and link ranges of shape (A,).
    """
    if problem.truth is None:
        raise ValueError("problem has no ground truth to perturb")
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma < 0:
        raise ValueError(f"sigma must be finite and nonnegative, got {sigma!r}")
    truth = problem.truth
    edge_true = np.linalg.norm(
        truth[problem.edges[:, 0]] - truth[problem.edges[:, 1]], axis=1)
    link_true = np.linalg.norm(
        truth[problem.link_sensor] - problem.anchors[problem.link_anchor], axis=1) \
        if problem.n_links else np.zeros(0)
    rng = np.random.default_rng(rng_seed)
    edge_d = np.abs(edge_true + sigma * rng.standard_normal(edge_true.size))
    link_r = np.abs(link_true + sigma * rng.standard_normal(link_true.size))
    return edge_d, link_r


def rmse(estimates, truth):
    """Root mean squared position error over trials.

    ``sqrt(sum of squared Frobenius errors / (n * M))`` for ``M`` stacked
    (n, p) estimates against one truth; a single estimate may be passed
    unstacked.
    """
    truth = np.asarray(truth, dtype=np.float64)
    est = np.asarray(estimates, dtype=np.float64)
    if est.ndim == 2:
        est = est[None]
    if est.ndim != 3 or est.shape[1:] != truth.shape:
        raise ValueError(
            f"expected estimates stacked over trials with shape (M, {truth.shape[0]}, "
            f"{truth.shape[1]}), got {np.asarray(estimates).shape}"
        )
    m, n, _ = est.shape
    return float(np.sqrt(np.sum((est - truth) ** 2) / (n * m)))


@dataclass
class ExperimentConfig:
    """What to run: one instance, noise levels, trials, and solvers.

    ``solvers`` maps labels to estimator prototypes; each trial clones the
    prototype and reseeds it, so prototypes are never mutated.
    """

    problem: object
    sigmas: tuple
    n_trials: int
    solvers: tuple
    master_seed: int = 0

    def __post_init__(self):
        self.sigmas = tuple(float(s) for s in self.sigmas)
        self.n_trials = int(self.n_trials)
        self.master_seed = int(self.master_seed)
        self.solvers = tuple((str(label), est) for label, est in self.solvers)
        if not self.sigmas or any(s < 0 or not np.isfinite(s) for s in self.sigmas):
            raise ValueError("sigmas must be a nonempty list of finite nonnegative values")
        if self.n_trials < 1:
            raise ValueError("need at least one trial")
        if not self.solvers:
            raise ValueError("need at least one solver")
        labels = [label for label, _ in self.solvers]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate solver labels in {labels}")
        self.problem.validate()
        if self.problem.truth is None:
            raise ValueError("experiments need a problem with ground truth")


@dataclass
class ExperimentResult:
    """Per-trial records plus per-(solver, sigma) aggregates.

    ``records`` rows carry the fields of the trials CSV plus an in-memory
    ``wall_time`` that is never written to files.  ``failures`` lists trials
    a solver could not finish; they are excluded from the aggregates.
    """

    sigmas: tuple
    n_trials: int
    solver_labels: tuple
    master_seed: int
    records: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    summary: list = field(default_factory=list)

    def write_csv(self, path):
        """Write one row per (solver, sigma, trial) in deterministic order."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_CSV_COLUMNS)
            for row in self.records:
                writer.writerow([
                    row["solver"],
                    repr(float(row["sigma"])),
                    row["trial"],
                    repr(float(row["rmse_contrib"])),
                    repr(float(row["fhat_final"])),
                    repr(float(row["f_final"])),
                    repr(float(row["tight_bound"])),
                    repr(float(row["apriori_bound"])),
                    row["broadcasts"],
                ])

    def write_summary(self, path):
        """Write the aggregate JSON (wall-clock statistics excluded)."""
        results = []
        for row in self.summary:
            results.append({k: v for k, v in row.items() if k != "wall_time_mean"})
        payload = {
            "sigmas": list(self.sigmas),
            "trials": self.n_trials,
            "solvers": list(self.solver_labels),
            "master_seed": self.master_seed,
            "results": results,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def _resolve_workers(n_workers):
    cap = os.environ.get(WORKERS_ENV)
    cap = int(cap) if cap else None
    if cap is not None and cap < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {cap}")
    if n_workers is None:
        want = cap if cap is not None else 1
    else:
        want = int(n_workers)
        if want < 1:
            raise ValueError("n_workers must be >= 1")
        if cap is not None:
            want = min(want, cap)
    return want


def _run_unit(config, s_idx, trial):
    """All solvers on one (sigma, trial) cell; returns (records, failures)."""
    sigma = config.sigmas[s_idx]
    problem = config.problem
    meas_seed = np.random.SeedSequence(
        config.master_seed, spawn_key=(0, s_idx, trial))
    edge_d, link_r = gen_measurements(problem, sigma, meas_seed)
    trial_problem = problem.with_measurements(edge_d, link_r)
    truth = problem.truth
    records, failures = [], []
    for j, (label, prototype) in enumerate(config.solvers):
        init_seed = int(np.random.SeedSequence(
            config.master_seed, spawn_key=(1, s_idx, trial, j)).generate_state(1)[0])
        est = clone(prototype)
        est.set_params(random_state=init_seed, record_trace=False,
                       keep_iterates=False)
        try:
            est.fit(trial_problem)
            x_hat = check_positions(est.estimate_, problem.n, problem.p)
            report = cost.eval_fhat(trial_problem, x_hat)
            cert = cost.gap_certificate(trial_problem, x_hat, report.value)
            records.append({
                "solver": label,
                "sigma": sigma,
                "trial": trial,
                "rmse_contrib": float(np.sum((x_hat - truth) ** 2)),
                "fhat_final": report.value,
                "f_final": cost.eval_f(trial_problem, x_hat).value,
                "tight_bound": cert.tight_bound,
                "apriori_bound": cert.apriori_bound,
                "broadcasts": int(est.broadcasts_),
                "wall_time": float(est.fit_time_),
            })
        except Exception as exc:  # noqa: BLE001  quarantine, never poison the run
            failures.append({
                "solver": label,
                "sigma": sigma,
                "trial": trial,
                "error": f"{type(exc).__name__}: {exc}",
            })
    return records, failures


def run_experiment(config, n_workers=None):
    """Run the full grid of (sigma, trial, solver) cells.

    Parameters
    ----------
    config : ExperimentConfig
    n_workers : int, optional
        Worker threads over (sigma, trial) cells.  Defaults to the
        ``LOCNET_WORKERS`` environment variable, or 1; the variable also
        caps an explicit request.  Results do not depend on the pool size.

    Returns
    -------
    ExperimentResult
    """
    workers = _resolve_workers(n_workers)
    units = [(s_idx, trial)
             for s_idx in range(len(config.sigmas))
             for trial in range(config.n_trials)]
    if workers == 1:
        outs = [_run_unit(config, s, t) for s, t in units]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(lambda u: _run_unit(config, *u), units))
    result = ExperimentResult(
        sigmas=config.sigmas,
        n_trials=config.n_trials,
        solver_labels=tuple(label for label, _ in config.solvers),
        master_seed=config.master_seed,
    )
    by_cell = dict(zip(units, outs))
    # deterministic order: solver-major, then sigma, then trial
    for label, _ in config.solvers:
        for s_idx in range(len(config.sigmas)):
            for trial in range(config.n_trials):
                records, failures = by_cell[(s_idx, trial)]
                result.records.extend(
                    r for r in records if r["solver"] == label)
                result.failures.extend(
                    f for f in failures if f["solver"] == label)
    n = config.problem.n
    for label, _ in config.solvers:
        for sigma in config.sigmas:
            rows = [r for r in result.records
                    if r["solver"] == label and r["sigma"] == sigma]
            fails = [f for f in result.failures
                     if f["solver"] == label and f["sigma"] == sigma]
            group = {
                "solver": label,
                "sigma": sigma,
                "completed_trials": len(rows),
                "failed_trials": len(fails),
            }
            if rows:
                group["rmse"] = float(np.sqrt(
                    sum(r["rmse_contrib"] for r in rows) / (n * len(rows))))
                for key in ("fhat_final", "f_final", "tight_bound",
                            "apriori_bound", "broadcasts"):
                    group[f"{key}_mean"] = float(
                        sum(r[key] for r in rows) / len(rows))
                group["wall_time_mean"] = float(
                    sum(r["wall_time"] for r in rows) / len(rows))
            result.summary.append(group)
    return result
