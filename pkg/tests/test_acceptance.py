"""Acceptance suite: one test per shipped guarantee, at its stated tolerance.

Each test prints a PASS/FAIL line in the terminal summary (see conftest).
Tolerances and instance recipes are frozen here on purpose; loosening them
is an interface change, not a test fix.
"""

import json
import time

import numpy as np
import pytest

import diskloc as dl
from diskloc import cli
from diskloc.cost import eval_f, eval_fhat, gap_certificate
from diskloc.geometry import Ball, grad_phi_ball, phi_ball

from helpers import (
    batch_f,
    batch_fhat,
    batch_grads,
    criterion,
    fd_gradient,
    lower_convex_envelope,
    make_instance,
    min_f_1d,
    star_problem,
)


@pytest.fixture(scope="module")
def instances():
    """Ten seeded 10-sensor instances with noisy ranges (sigma 0.05)."""
    return [make_instance(gen_seed=s, noise_seed=100 + s) for s in range(10)]


@pytest.fixture(scope="module")
def inexact_runs(instances):
    """Twenty seeded gossip runs driven to a 1e-10 gradient norm."""
    runs = []
    for r in range(20):
        est = dl.AsyncInexactLocalizer(
            eps_gradient=1e-10, max_iterations=2 * 10 ** 6,
            record_trace=True, keep_iterates=True,
            random_state=500 + r).fit(instances[0])
        assert est.termination_ == "gradient-norm"
        runs.append(est)
    return runs


def _smooth_points(problem, count, rng, shell=1e-4):
    """Random position sets that keep every range term off its kink."""
    points = []
    attempts = 0
    while len(points) < count:
        attempts += 1
        assert attempts < 100 * count, "rejection sampling stalled"
        x = rng.uniform(-0.25, 1.25, (problem.n, problem.p))
        edge_nrm = np.linalg.norm(
            x[problem.edges[:, 0]] - x[problem.edges[:, 1]], axis=1)
        link_nrm = np.linalg.norm(
            x[problem.link_sensor] - problem.anchors[problem.link_anchor], axis=1)
        if (np.all(np.abs(edge_nrm - problem.edge_measurements) > shell)
                and np.all(np.abs(link_nrm - problem.link_ranges) > shell)):
            points.append(x)
    return points


@criterion(1, "gradient matches finite differences")
def test_criterion_01_gradient_correctness(instances):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    for prob in instances[:5]:
        for x in _smooth_points(prob, 20, rng):
            g = dl.grad_fhat(prob, x)
            fd = fd_gradient(lambda z: eval_fhat(prob, z).value, x)
            err = np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(fd))
            assert err <= 1e-6
    assert time.perf_counter() - start < 5.0


@criterion(2, "gradient and projection Lipschitz bounds")
def test_criterion_02_lipschitz_bounds(instances):
    rng = np.random.default_rng(1)
    for prob in instances[:5]:
        x = rng.uniform(-1.0, 2.0, (1000, prob.n, prob.p))
        y = rng.uniform(-1.0, 2.0, (1000, prob.n, prob.p))
        dg = np.sqrt(np.sum((batch_grads(prob, x) - batch_grads(prob, y)) ** 2,
                            axis=(1, 2)))
        dxy = np.sqrt(np.sum((x - y) ** 2, axis=(1, 2)))
        for method in ("degree", "edge"):
            lip = dl.lipschitz_fhat(prob, method)
            assert np.all(dg <= lip * dxy + 1e-9)
    for _ in range(1000):
        ball = Ball(rng.uniform(-1, 1, 2), rng.uniform(0.1, 2.0))
        a, b = rng.uniform(-3, 3, (2, 2))
        assert (np.linalg.norm(grad_phi_ball(a, ball) - grad_phi_ball(b, ball))
                <= np.linalg.norm(a - b) + 1e-12)


@criterion(3, "relaxed cost underestimates the original")
def test_criterion_03_underestimator(instances):
    rng = np.random.default_rng(2)
    for prob in instances[:5]:
        x = rng.uniform(-1.0, 2.0, (1000, prob.n, prob.p))
        assert np.all(batch_fhat(prob, x) <= batch_f(prob, x) + 1e-12)
        # with every range exceeded the two costs coincide
        far = prob.truth * 6.0
        edge_nrm = np.linalg.norm(
            far[prob.edges[:, 0]] - far[prob.edges[:, 1]], axis=1)
        link_nrm = np.linalg.norm(
            far[prob.link_sensor] - prob.anchors[prob.link_anchor], axis=1)
        assert np.all(edge_nrm > prob.edge_measurements)
        assert np.all(link_nrm > prob.link_ranges)
        assert abs(eval_fhat(prob, far).value - eval_f(prob, far).value) <= 1e-12


@criterion(4, "accelerated run meets the 1/k^2 rate bound")
def test_criterion_04_rate_bound(instances):
    start = time.perf_counter()
    prob = instances[0]
    ref = dl.ParallelLocalizer(stop_rule="fixed-iterations",
                               max_iterations=10 ** 6, record_trace=False,
                               keep_iterates=False, random_state=11).fit(prob)
    fstar = batch_fhat(prob, ref.estimate_[None])[0]
    run = dl.ParallelLocalizer(stop_rule="fixed-iterations",
                               max_iterations=2000, random_state=11).fit(prob)
    fh = batch_fhat(prob, run.trace_.iterates)
    radius_sq = float(np.sum((run.trace_.iterates[0] - ref.estimate_) ** 2))
    bound = 2.0 * run.lipschitz_ * radius_sq / (run.trace_.k + 1.0) ** 2
    assert np.all(fh - fstar <= bound + 1e-12)
    assert time.perf_counter() - start < 30.0


@criterion(5, "gossip runs are monotone / satisfy the descent lemma")
def test_criterion_05_gossip_descent(instances, inexact_runs):
    prob = instances[0]
    for r in range(20):
        est = dl.AsyncExactLocalizer(stop_rule="fixed-iterations",
                                     max_iterations=20000, keep_iterates=False,
                                     random_state=700 + r).fit(prob)
        assert np.all(np.diff(est.trace_.fhat) <= 1e-12)
    for est in inexact_runs:
        it = est.trace_.iterates
        fh = batch_fhat(prob, it)
        grads = batch_grads(prob, it[:-1])
        fired = grads[np.arange(est.n_iterations_), est.activations_]
        drop = np.sum(fired * fired, axis=1) / (2.0 * est.lipschitz_)
        assert np.all(fh[1:] <= fh[:-1] - drop + 1e-12)


@criterion(6, "all solvers agree on the final relaxed cost")
def test_criterion_06_cross_solver_agreement(instances):
    for s, prob in enumerate(instances):
        finals = []
        for cls, budget in ((dl.ParallelLocalizer, 2 * 10 ** 5),
                            (dl.AsyncExactLocalizer, 2 * 10 ** 5),
                            (dl.AsyncInexactLocalizer, 10 ** 6)):
            est = cls(eps_gradient=1e-6, max_iterations=budget,
                      record_trace=False, keep_iterates=False,
                      random_state=s).fit(prob)
            assert est.termination_ == "gradient-norm"
            finals.append(eval_fhat(prob, est.estimate_).value)
        assert max(finals) - min(finals) <= 1e-5


@criterion(7, "ball cost is the convex envelope of the sphere cost")
def test_criterion_07_convex_envelope():
    grid = np.linspace(-3.0, 3.0, 1201)
    for radius in (0.5, 1.0):
        ball = Ball([0.0], radius)
        sphere_cost = 0.5 * (np.abs(grid) - radius) ** 2
        envelope = lower_convex_envelope(grid, sphere_cost)
        relaxed = np.array([phi_ball([z], ball) for z in grid])
        assert np.max(np.abs(envelope - relaxed)) <= 5e-3
        # flat bottom inside the ball, untouched branches outside
        assert np.all(relaxed[np.abs(grid) <= radius] == 0.0)
        outside = np.abs(grid) >= radius
        assert np.array_equal(relaxed[outside], sphere_cost[outside])


@criterion(8, "star-instance gap bounds are ordered and calibrated")
def test_criterion_08_star_gap_bounds():
    true_d = np.array([1.0, 1.0, 2.0])
    tights, aprioris = [], []
    for trial in range(500):
        rng = np.random.default_rng(np.random.SeedSequence(2024,
                                                           spawn_key=(trial,)))
        prob = star_problem(np.abs(true_d + 0.25 * rng.standard_normal(3)))
        est = dl.ParallelLocalizer(eps_gradient=1e-10, max_iterations=10 ** 6,
                                   record_trace=False,
                                   keep_iterates=False).fit(prob)
        cert = gap_certificate(prob, est.estimate_, est.fhat_)
        true_gap = (eval_f(prob, est.estimate_).value
                    - min_f_1d(prob, -2.0, 9.0,
                               extra=[float(est.estimate_[0, 0])]))
        assert true_gap <= cert.tight_bound + 1e-9
        assert cert.tight_bound <= cert.apriori_bound + 1e-12
        tights.append(cert.tight_bound)
        aprioris.append(cert.apriori_bound)
    assert 0.0487 / 2 <= np.mean(tights) <= 0.0487 * 2
    assert 3.0871 * 0.75 <= np.mean(aprioris) <= 3.0871 * 1.25


@criterion(9, "broadcast counters match the iteration ledger")
def test_criterion_09_broadcast_accounting(instances, tmp_path):
    prob = instances[0]
    est = dl.ParallelLocalizer(stop_rule="fixed-iterations",
                               max_iterations=2000,
                               keep_iterates=False).fit(prob)
    trace = est.trace_
    assert trace.broadcasts_per_sensor[-1] == 2000.0
    assert est.broadcasts_ == 2000 * prob.n
    assert np.array_equal(trace.broadcasts,
                          np.arange(2001, dtype=np.int64) * prob.n)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2002
    assert lines[-1].split(",")[3] == "2000.0"


@criterion(10, "more range noise means more position error")
def test_criterion_10_rmse_noise_monotonicity():
    net = dl.generate_geometric(50, 2, target_avg_degree=6.1, rng_seed=0)
    assert abs(net.average_degree - 6.1) <= 1.0
    config = dl.ExperimentConfig(
        net, sigmas=[0.01, 0.1], n_trials=32,
        solvers=(("parallel", dl.ParallelLocalizer(eps_gradient=1e-8,
                                                   max_iterations=10 ** 5)),),
        master_seed=0)
    result = dl.run_experiment(config)
    assert not result.failures
    by_sigma = {g["sigma"]: g["rmse"] for g in result.summary}
    assert by_sigma[0.01] < by_sigma[0.1]


@criterion(11, "gossip iterate tails settle")
def test_criterion_11_iterate_tail_convergence(inexact_runs):
    for est in inexact_runs:
        it = est.trace_.iterates
        dists = np.sqrt(np.sum((it - it[-1]) ** 2, axis=(1, 2)))
        window = dists[int(0.9 * est.n_iterations_):]
        assert np.all(window <= np.minimum.accumulate(window) + 1e-8)


@criterion(12, "every command is byte-deterministic across reruns and pools")
def test_criterion_12_cli_determinism(tmp_path, capsys, monkeypatch):
    problem_path = tmp_path / "net.json"
    gen = ["generate", "--n", "12", "--target-avg-degree", "4.0",
           "--sigma", "0.05", "--seed", "3"]
    assert cli.main(gen + ["--out", str(problem_path)]) == 0
    assert cli.main(gen + ["--out", str(tmp_path / "net2.json")]) == 0
    assert problem_path.read_bytes() == (tmp_path / "net2.json").read_bytes()

    solve = ["solve", "--problem", str(problem_path), "--solver", "async-inexact",
             "--stop", "fixed-iterations", "--max-iterations", "400", "--seed", "9"]
    assert cli.main(solve + ["--out", str(tmp_path / "runA")]) == 0
    assert cli.main(solve + ["--out", str(tmp_path / "runB")]) == 0
    for suffix in (".trace.csv", ".estimate.json"):
        assert (tmp_path / f"runA{suffix}").read_bytes() \
            == (tmp_path / f"runB{suffix}").read_bytes()

    scenario = {
        "problem": {"file": str(problem_path)},
        "sigmas": [0.05],
        "trials": 4,
        "solvers": [{"name": "parallel",
                     "options": {"stop_rule": "fixed-iterations",
                                 "max_iterations": 200}}],
        "master_seed": 1,
        "output": {"csv": str(tmp_path / "records.csv"),
                   "summary": str(tmp_path / "summary.json")},
    }
    scenario_path = tmp_path / "scenario.json"
    scenario_path.write_text(json.dumps(scenario))
    outputs = {}
    for pool in ("1", "8"):
        monkeypatch.setenv("LOCNET_WORKERS", pool)
        assert cli.main(["experiment", "--scenario", str(scenario_path)]) == 0
        outputs[pool] = ((tmp_path / "records.csv").read_bytes(),
                         (tmp_path / "summary.json").read_bytes())
    assert outputs["1"] == outputs["8"]

    gap = ["gap", "--problem", str(problem_path),
           "--estimate", str(tmp_path / "runA.estimate.json")]
    assert cli.main(gap + ["--out", str(tmp_path / "certA.json")]) == 0
    assert cli.main(gap + ["--out", str(tmp_path / "certB.json")]) == 0
    assert (tmp_path / "certA.json").read_bytes() \
        == (tmp_path / "certB.json").read_bytes()
    capsys.readouterr()
