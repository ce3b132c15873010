"""Configuration feasibility, cost coefficients, and pool behavior."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advrisk.configuration import (
    ConfigurationPool,
    CostModel,
    canonical,
    cost,
    insert,
    is_feasible,
    trim_inactive,
)
from advrisk.data import LabeledDataset, SyntheticSpec, generate_synthetic
from advrisk.geometry import Metric


@pytest.fixture
def ds4():
    # Four points on a line, labels 1,2,1,3.
    return LabeledDataset(
        np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]),
        np.array([1, 2, 1, 3]),
        ("a", "b", "c"),
    )


class TestCanonical:
    def test_sorts(self):
        assert canonical([3, 1, 2]) == (1, 2, 3)

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            canonical([1, 1])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            canonical([])


class TestFeasibility:
    def test_singleton(self, ds4):
        assert is_feasible((0,), ds4)

    def test_same_label_pair(self, ds4):
        assert not is_feasible((0, 2), ds4)

    def test_distinct_triple(self, ds4):
        assert is_feasible((0, 1, 3), ds4)

    def test_out_of_range(self, ds4):
        with pytest.raises(IndexError):
            is_feasible((0, 7), ds4)


class TestCost:
    def test_singleton_always_one(self, ds4):
        for cm in (CostModel.classical(0.001), CostModel.w2(0.5)):
            assert cost((0,), ds4, cm) == 1.0

    def test_classical_over_budget(self, ds4):
        # Points 0 and 3 are distance 3 apart: radius 1.5 > eps.
        assert cost((0, 3), ds4, CostModel.classical(0.9)) == math.inf

    def test_classical_within_budget(self, ds4):
        assert cost((0, 1), ds4, CostModel.classical(0.6)) == 1.0

    def test_classical_boundary_accepted(self, ds4):
        # radius exactly 0.5; float slack keeps it finite
        assert cost((0, 1), ds4, CostModel.classical(0.5)) == 1.0

    def test_w2_pair(self):
        ds = LabeledDataset(
            np.array([[0.0, 0.0], [2.0, 0.0]]), np.array([1, 2]), ("a", "b")
        )
        assert cost((0, 1), ds, CostModel.w2(2.0)) == pytest.approx(1.5)
        assert cost((0, 1), ds, CostModel.w2(1.0)) == pytest.approx(3.0)

    def test_infeasible_rejected(self, ds4):
        with pytest.raises(ValueError):
            cost((0, 2), ds4, CostModel.classical(1.0))

    def test_chebyshev_budget(self, ds4):
        cm = CostModel.classical(0.5, Metric.CHEBYSHEV)
        assert cost((0, 1), ds4, cm) == 1.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.05, 3.0))
    def test_subset_feasibility(self, seed, eps):
        # Finite cost of r implies finite cost of every nonempty subset.
        ds = generate_synthetic(SyntheticSpec(n_classes=4, n_points=12, seed=seed))
        cm = CostModel.classical(eps)
        rng = np.random.default_rng(seed)
        by_class = {}
        for i, lab in enumerate(ds.labels):
            by_class.setdefault(int(lab), []).append(i)
        classes = rng.permutation(list(by_class))[: rng.integers(2, 5)]
        r = canonical([int(rng.choice(by_class[int(c)])) for c in classes])
        if math.isfinite(cost(r, ds, cm)):
            for drop in range(len(r)):
                sub = r[:drop] + r[drop + 1 :]
                if sub:
                    assert math.isfinite(cost(sub, ds, cm))


class TestCostModelValidation:
    def test_classical_needs_positive_eps(self):
        with pytest.raises(ValueError):
            CostModel.classical(0.0)

    def test_w2_needs_positive_tau(self):
        with pytest.raises(ValueError):
            CostModel.w2(-1.0)

    def test_w2_chebyshev_rejected(self):
        with pytest.raises(ValueError):
            CostModel.w2(1.0, Metric.CHEBYSHEV)


class TestPool:
    def test_starts_with_singletons(self, ds4):
        pool = ConfigurationPool(ds4, CostModel.classical(1.0))
        assert len(pool) == 4
        assert all((i,) in pool for i in range(4))
        assert pool.cost_of((2,)) == 1.0

    def test_insert_new_then_duplicate(self, ds4):
        pool = ConfigurationPool(ds4, CostModel.classical(1.0))
        assert insert(pool, (0, 1)) is True
        assert len(pool) == 5
        assert insert(pool, (0, 1)) is False
        assert len(pool) == 5

    def test_insert_permutation_is_duplicate(self, ds4):
        pool = ConfigurationPool(ds4, CostModel.classical(1.0))
        assert pool.insert((1, 3))
        assert pool.insert((3, 1)) is False

    def test_insert_caches_cost(self, ds4):
        pool = ConfigurationPool(ds4, CostModel.classical(0.6))
        pool.insert((0, 1))
        pool.insert((0, 3))
        assert pool.cost_of((0, 1)) == 1.0
        assert pool.cost_of((0, 3)) == math.inf

    def test_insert_with_precomputed_cost_checks_feasibility(self, ds4):
        pool = ConfigurationPool(ds4, CostModel.classical(1.0))
        with pytest.raises(ValueError):
            pool.insert((0, 2), cost_value=1.0)

    def test_trim_removes_only_inactive_non_singletons(self, ds4):
        pool = ConfigurationPool(ds4, CostModel.classical(5.0))
        pool.insert((0, 1))
        pool.insert((1, 2))
        pool.insert((0, 3))
        removed = trim_inactive(pool, active={(0, 1)}, n_remove=10,
                                rng=np.random.default_rng(0))
        assert removed == 2
        assert (0, 1) in pool
        assert all((i,) in pool for i in range(4))

    def test_trim_all_active_removes_none(self, ds4):
        pool = ConfigurationPool(ds4, CostModel.classical(5.0))
        pool.insert((0, 1))
        assert trim_inactive(pool, active={(0, 1)}, n_remove=5) == 0

    def test_trim_zero_removes_none(self, ds4):
        pool = ConfigurationPool(ds4, CostModel.classical(5.0))
        pool.insert((0, 1))
        assert trim_inactive(pool, active=set(), n_remove=0) == 0

    def test_trim_batch_size(self):
        # Pool of 3N+1 members with >= N inactive pairs: removes exactly N.
        ds = generate_synthetic(SyntheticSpec(n_classes=4, n_points=8, seed=3))
        n = ds.n_points
        pool = ConfigurationPool(ds, CostModel.w2(1.0))
        added = []
        for i in range(n):
            for j in range(i + 1, n):
                if ds.labels[i] != ds.labels[j] and len(pool) < 3 * n + 1:
                    pool.insert((i, j))
                    added.append((i, j))
        assert len(pool) == 3 * n + 1
        active = set(added[: len(added) - n])
        removed = pool.trim_inactive(active, n, rng=np.random.default_rng(1))
        assert removed == n

    def test_trim_is_seed_deterministic(self, ds4):
        def build():
            pool = ConfigurationPool(ds4, CostModel.classical(5.0))
            for r in [(0, 1), (1, 2), (0, 3), (2, 3), (0, 1, 3)]:
                pool.insert(r)
            return pool

        a, b = build(), build()
        a.trim_inactive(set(), 2, rng=np.random.default_rng(7))
        b.trim_inactive(set(), 2, rng=np.random.default_rng(7))
        assert set(a) == set(b)

    def test_blocks_grouped_by_length(self, ds4):
        pool = ConfigurationPool(ds4, CostModel.classical(5.0))
        pool.insert((0, 1))
        pool.insert((0, 1, 3))
        blocks = pool.blocks()
        assert [b[0] for b in blocks] == [1, 2, 3]
        k1 = blocks[0]
        assert k1[1].shape == (4, 1) and k1[2].tolist() == [1.0] * 4
        assert blocks[2][1].tolist() == [[0, 1, 3]]

    def test_snapshot_round_trip(self, ds4):
        pool = ConfigurationPool(ds4, CostModel.classical(0.6))
        pool.insert((0, 1))
        pool.insert((0, 3))
        text = pool.snapshot()
        parsed = json.loads(text)
        assert {"indices": [0, 1], "cost": 1.0} in parsed
        back = ConfigurationPool.from_snapshot(text, ds4, CostModel.classical(0.6))
        assert set(back) == set(pool)
        assert back.cost_of((0, 3)) == math.inf

    def test_snapshot_is_json_with_inf_preserved(self, ds4):
        pool = ConfigurationPool(ds4, CostModel.classical(0.1))
        pool.insert((0, 1))
        back = ConfigurationPool.from_snapshot(
            pool.snapshot(), ds4, CostModel.classical(0.1)
        )
        assert back.cost_of((0, 1)) == math.inf
