"""Column-generation tests for the spread-penalized problem.

Desk instances are small enough to enumerate every label-distinct
configuration, so optimality of converged runs is proved by the full dual
sweep rather than assumed.  Expected report values come from hand-solved
LPs over the complete column set.
"""

import json

import numpy as np
import pytest

from advrisk.data import LabeledDataset
from advrisk.gencol import (
    GencolParams,
    W2RiskReport,
    certify_optimality,
    gain,
    gencol_w2,
)
from advrisk.lp import LpStatus, ReducedProblem, check_solution, solve
from advrisk.search import EnumerationCapExceeded


def two_apart_ds():
    # two points at distance 2: pair cost 1 + 2/tau^2
    return LabeledDataset(
        np.array([[0.0, 0.0], [2.0, 0.0]]), np.array([1, 2]), ("a", "b")
    )


def desk_532_ds():
    """Ten points on a unit grid with class sizes (5, 3, 2)."""
    feats = np.array(
        [
            [0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0],
            [0.0, 1.0], [1.0, 1.0], [2.0, 1.0],
            [0.0, 2.0], [1.0, 2.0],
        ]
    )
    labels = np.array([1, 1, 1, 1, 1, 2, 2, 2, 3, 3])
    return LabeledDataset(feats, labels, ("a", "b", "c"))


def quick(tau, **kwargs):
    defaults = dict(stagnation_generations=15, time_limit=30.0, seed=0)
    defaults.update(kwargs)
    return GencolParams(tau=tau, **defaults)


class TestGain:
    def test_profitable_pair(self):
        ds = two_apart_ds()
        tau = np.sqrt(20.0)  # pair cost 1 + 2/20 = 1.1
        u = np.array([0.6, 0.6])
        assert gain((0, 1), u, ds, tau) == pytest.approx(0.1)

    def test_priced_out_pair(self):
        ds = two_apart_ds()
        u = np.array([0.5, 0.5])
        assert gain((0, 1), u, ds, 2.0) == pytest.approx(-0.5)

    def test_singleton_at_unit_dual(self):
        ds = two_apart_ds()
        assert gain((0,), np.array([1.0, 1.0]), ds, 2.0) == pytest.approx(0.0)


class TestParams:
    def test_samples_default_is_2n(self):
        p = GencolParams(tau=1.0)
        assert p.beta == 3
        assert p.resolve_samples(two_apart_ds()) == 4
        assert GencolParams(tau=1.0, samples_per_generation=5).resolve_samples(
            two_apart_ds()
        ) == 5

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"tau": 0.0},
            {"tau": -1.0},
            {"tau": 1.0, "beta": 1},
            {"tau": 1.0, "beta": 2.5},
            {"tau": 1.0, "samples_per_generation": 0},
            {"tau": 1.0, "time_limit": 0.0},
            {"tau": 1.0, "stagnation_generations": 0},
        ],
    )
    def test_rejects_bad_params(self, kwargs):
        with pytest.raises(ValueError):
            GencolParams(**kwargs)


class TestDeskRuns:
    def test_two_points_tau_two(self):
        ds = two_apart_ds()
        pool, sol, report, trace = gencol_w2(ds, quick(tau=2.0))
        assert (0, 1) in pool
        assert sol.objective == pytest.approx(1.5, abs=1e-9)
        assert report.regularized_value == pytest.approx(0.25, abs=1e-9)
        assert report.corrected_risk == pytest.approx(0.5, abs=1e-9)
        assert report.penalty_paid == pytest.approx(0.25, abs=1e-9)
        assert report.converged

    def test_two_points_tiny_tau_keeps_singletons(self):
        ds = two_apart_ds()
        pool, sol, report, trace = gencol_w2(ds, quick(tau=1e-3))
        assert set(pool) == {(0,), (1,)}
        assert report.corrected_risk == pytest.approx(0.0, abs=1e-12)
        assert report.penalty_paid == pytest.approx(0.0, abs=1e-12)
        assert report.regularized_value == pytest.approx(0.0, abs=1e-12)
        assert report.converged

    def test_desk_532_large_tau_reaches_max_risk(self):
        ds = desk_532_ds()
        pool, sol, report, trace = gencol_w2(ds, quick(tau=100.0))
        assert report.converged
        # merging is nearly free, so the mass drops to the largest class
        assert report.corrected_risk == pytest.approx(0.5, abs=1e-6)
        ok, violation = certify_optimality(sol, ds, 100.0)
        assert ok, violation
        assert violation <= 1e-8

    def test_desk_532_tiny_tau_risk_zero(self):
        ds = desk_532_ds()
        pool, sol, report, trace = gencol_w2(ds, quick(tau=1e-3))
        assert report.corrected_risk == pytest.approx(0.0, abs=1e-12)
        assert report.converged

    def test_report_identity_and_bounds(self):
        for tau in (0.5, 1.0, 2.0, 100.0):
            ds = desk_532_ds()
            pool, sol, report, trace = gencol_w2(ds, quick(tau=tau))
            mass = sum(sol.gamma.values())
            total = report.regularized_value + report.penalty_paid + mass / ds.n_points
            assert total == pytest.approx(1.0, abs=1e-10)
            n_max = int(ds.class_counts.max())
            assert -1e-12 <= report.corrected_risk <= 1 - n_max / ds.n_points + 1e-9

    def test_every_run_passes_audit(self):
        ds = desk_532_ds()
        pool, sol, report, trace = gencol_w2(ds, quick(tau=2.0))
        rep = check_solution(ReducedProblem.from_pool(pool), sol)
        assert rep.ok, rep
        objs = [r.objective for r in trace.records]
        for prev, cur in zip(objs, objs[1:]):
            assert cur <= prev + 1e-9

    def test_same_seed_same_run(self):
        ds = desk_532_ds()
        _, sol_a, rep_a, tr_a = gencol_w2(ds, quick(tau=2.0))
        _, sol_b, rep_b, tr_b = gencol_w2(ds, quick(tau=2.0))
        assert sol_a.objective == sol_b.objective
        assert rep_a == rep_b
        assert [r.objective for r in tr_a.records] == [
            r.objective for r in tr_b.records
        ]


class TestTrimming:
    def test_forced_growth_respects_cap(self):
        # 12 points, 3 classes: 4**3 - 1 = 63 possible columns, cap 24
        rng = np.random.default_rng(0)
        feats = rng.uniform(0.0, 4.0, size=(12, 2))
        labels = np.repeat([1, 2, 3], 4)
        ds = LabeledDataset(feats, labels, ("a", "b", "c"))
        n = ds.n_points
        params = GencolParams(
            tau=100.0,
            beta=2,
            samples_per_generation=n,
            stagnation_generations=10,
            time_limit=30.0,
            seed=3,
        )
        pool, sol, report, trace = gencol_w2(ds, params)
        for rec in trace.records:
            assert rec.pool_size <= params.beta * n + n
        # singletons are never evicted
        for i in range(n):
            assert (i,) in pool
        objs = [r.objective for r in trace.records]
        for prev, cur in zip(objs, objs[1:]):
            assert cur <= prev + 1e-9
        assert report.converged

    def test_trim_preserves_support_and_objective(self):
        rng = np.random.default_rng(1)
        feats = rng.uniform(0.0, 4.0, size=(12, 2))
        labels = np.repeat([1, 2, 3], 4)
        ds = LabeledDataset(feats, labels, ("a", "b", "c"))
        cm_pool, sol, _, _ = gencol_w2(
            ds,
            GencolParams(tau=100.0, beta=2, samples_per_generation=12,
                         stagnation_generations=8, time_limit=30.0, seed=5),
        )
        before = sol.objective
        removed = cm_pool.trim_inactive(set(sol.gamma) | set(sol.basis), 12)
        for r in sol.gamma:
            assert r in cm_pool
        resolved = solve(ReducedProblem.from_pool(cm_pool))
        assert resolved.status is LpStatus.OPTIMAL
        assert resolved.objective <= before + 1e-9


class TestCertify:
    def test_withheld_pair_is_detected(self):
        ds = two_apart_ds()
        # solve over singletons only; the pair at tau=2 has gain 0.5
        sol = solve(ReducedProblem.from_columns(2, [((0,), 1.0), ((1,), 1.0)]))
        ok, violation = certify_optimality(sol, ds, 2.0)
        assert not ok
        assert violation == pytest.approx(0.5, abs=1e-9)

    def test_single_point_trivially_optimal(self):
        ds = LabeledDataset(np.zeros((1, 2)), np.array([1]), ("a",))
        sol = solve(ReducedProblem.from_columns(1, [((0,), 1.0)]))
        ok, violation = certify_optimality(sol, ds, 1.0)
        assert ok
        assert violation <= 1e-8

    def test_cap_refusal(self):
        ds = desk_532_ds()
        sol = solve(
            ReducedProblem.from_columns(
                ds.n_points, [((i,), 1.0) for i in range(ds.n_points)]
            )
        )
        with pytest.raises(EnumerationCapExceeded):
            certify_optimality(sol, ds, 1.0, max_configs=5)


class TestReportJson:
    def test_round_trip(self):
        report = W2RiskReport(0.25, 0.5, 0.25, True)
        data = json.loads(report.to_json(tau=2.0, beta=3, elapsed_s=1.5))
        assert data == {
            "tau": 2.0,
            "beta": 3,
            "regularized_value": 0.25,
            "corrected_risk": 0.5,
            "penalty_paid": 0.25,
            "converged": True,
            "elapsed_s": 1.5,
        }
