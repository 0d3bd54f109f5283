import unittest
from fractions import Fraction
from hypothesis import given, settings, strategies as st
from specdfa.partition import WorkerProfile, compute_weights, chunk0_length, plan_chunks
from specdfa.partition import predicted_speedup


class TestWeights(unittest.TestCase):
    def test_weights(self):
        profile = compute_weights([50, 25, 25])
        self.assertEqual(profile.weights, [1.5, 0.75, 0.75])
        self.assertEqual(sum(profile.exact_weights), 3)
        self.assertEqual(WorkerProfile.uniform(4).weights, [1, 1, 1, 1])

    def test_errors(self):
        with self.assertRaises(ValueError):
            WorkerProfile([])
        with self.assertRaises(ValueError):
            WorkerProfile([1, 0])
        with self.assertRaises(ValueError):
            WorkerProfile([1, -2])

    def test_from_spec(self):
        profile = WorkerProfile([2, 1])
        self.assertIs(WorkerProfile.from_spec(profile, 2), profile)
        self.assertEqual(WorkerProfile.from_spec('uniform', 3).weights, [1, 1, 1])
        self.assertEqual(WorkerProfile.from_spec(None, 2).weights, [1, 1])
        self.assertEqual(WorkerProfile.from_spec([3, 1], 2).weights, [1.5, 0.5])
        with self.assertRaises(ValueError):
            WorkerProfile.from_spec([1, 1, 1], 2)
        with self.assertRaises(ValueError):
            WorkerProfile.from_spec('fastest', 2)

    def test_chunk0_length(self):
        self.assertEqual(chunk0_length(36, 4, compute_weights([50, 25, 25])), Fraction(96, 5))
        self.assertEqual(chunk0_length(36, 2, WorkerProfile.uniform(3)), 18)
        with self.assertRaises(ValueError):
            chunk0_length(36, 0, WorkerProfile.uniform(3))

    def test_predicted_speedup(self):
        self.assertEqual(predicted_speedup(1, 4), 4)
        self.assertEqual(predicted_speedup(2, 3), 2)


class TestPlan(unittest.TestCase):
    def test_weighted(self):
        # Capacities 50:25:25, n=36, m=4
        plan = plan_chunks(36, 4, compute_weights([50, 25, 25]))
        self.assertEqual(plan.l0, Fraction(96, 5))
        self.assertEqual(plan.l0 * plan.weights[0], Fraction(144, 5))
        self.assertEqual(plan.ranges, [(0, 27), (28, 31), (32, 35)])
        self.assertEqual([chunk.budget for chunk in plan], [1, 4, 4])
        self.assertEqual(plan.work_bound(), 36 + Fraction(144, 5) + 2 * 4)

    def test_uniform(self):
        # 36 symbols, m=2, three equal workers
        plan = plan_chunks(36, 2, WorkerProfile.uniform(3), r=1)
        self.assertEqual(plan.l0, 18)
        self.assertEqual(plan.ranges, [(0, 17), (18, 26), (27, 35)])
        self.assertEqual([chunk.lookahead_start for chunk in plan], [0, 17, 26])
        self.assertEqual(plan.work_bound(), 36 + 36 + 2 * 2 + 3)

    def test_lookahead_one(self):
        # 12 symbols, I_max=1, r=1: equal chunks of 4
        plan = plan_chunks(12, 1, WorkerProfile.uniform(3), r=1)
        self.assertEqual(plan.ranges, [(0, 3), (4, 7), (8, 11)])
        self.assertEqual([chunk.length for chunk in plan], [4, 4, 4])

    def test_anchored(self):
        # A chunk starting before r symbols are available is matched from the origin
        plan = plan_chunks(6, 2, WorkerProfile.uniform(4), r=3)
        chunks = list(plan)
        self.assertEqual(plan.ranges[0], (0, 1))
        anchored = [chunk for chunk in chunks if chunk.anchored]
        self.assertTrue(anchored)
        for chunk in anchored:
            self.assertLess(chunk.start, 3)
            self.assertEqual(chunk.budget, 1)
            self.assertEqual(chunk.lookahead_start, 0)
        for chunk in chunks[1:]:
            if not chunk.anchored:
                self.assertEqual(chunk.lookahead_start, chunk.start - 3)

    def test_empty(self):
        plan = plan_chunks(0, 3, WorkerProfile.uniform(3), r=1)
        self.assertEqual([chunk.length for chunk in plan], [0, 0, 0])
        with self.assertRaises(ValueError):
            plan_chunks(-1, 1, WorkerProfile.uniform(2))
        with self.assertRaises(ValueError):
            plan_chunks(10, 1, WorkerProfile.uniform(2), r=-1)

    def test_frame(self):
        plan = plan_chunks(36, 2, WorkerProfile.uniform(3), r=1)
        frame = plan.to_frame()
        self.assertEqual(list(frame.columns), ['worker', 'start', 'end', 'lookahead_start'])
        self.assertEqual(frame['end'].tolist(), [17, 26, 35])
        self.assertTrue(plan.to_csv().startswith('worker,start,end,lookahead_start'))

    @settings(max_examples=300, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(1, 64), st.integers(0, 4),
           st.lists(st.integers(1, 1000), min_size=1, max_size=16))
    def test_tiling(self, n, m, r, capacities):
        plan = plan_chunks(n, m, WorkerProfile(capacities), r=r)
        self.assertEqual(len(plan), len(capacities))
        self.assertEqual(plan[0].start, 0)
        self.assertEqual(plan[-1].end, n - 1)
        for before, after in zip(plan, plan[1:]):
            self.assertEqual(after.start, before.end + 1)
        self.assertEqual(sum(chunk.length for chunk in plan), n)
        # Boundaries sum to n exactly, so no start passes the end of the input
        weights = plan.weights
        self.assertEqual(plan.l0 * weights[0] + plan.l0 / m * sum(weights[1:]), n)
        self.assertTrue(all(0 <= chunk.start <= n for chunk in plan))
