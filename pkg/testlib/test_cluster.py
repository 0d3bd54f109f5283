import os
import shutil
import tempfile
import unittest
import numpy as np
from pandas.testing import assert_frame_equal
from specdfa.cluster import ClusterTopology, Delay, Node, TopologyError, simulate_cluster
from specdfa.cluster import binary_tree_latency, two_tier_merge
from specdfa.corpus import random_dfa, random_input
from specdfa.matching import merge_sequential
from specdfa.runtime import balance_report, run_parallel
from . import abc_dfa, abc_input, fixtures


def topology(nodes, allocated=15, capacity=1.0, seed=0, **kwargs):
    conf = {
        'nodes': [{'count': nodes, 'cores': allocated + 1, 'allocated': allocated,
                   'capacity': capacity}],
        'intra': {'mean': 2.68, 'std_pct': 0.14},
        'inter': {'mean': 362, 'std_pct': 3.6},
        'seed': seed,
        'compose_us': 0.1,
    }
    conf.update(kwargs)
    return ClusterTopology.from_config(conf)


class TestTopology(unittest.TestCase):
    def test_load(self):
        topo = ClusterTopology.load(os.path.join(fixtures, 'topology.yaml'))
        self.assertEqual(topo.worker_count, 6)
        self.assertEqual(topo.groups(), [[0, 1, 2], [3, 4, 5]])
        self.assertEqual(topo.node_of(), [0, 0, 0, 1, 1, 1])
        self.assertEqual(topo.capacities(), [1.0] * 6)
        self.assertEqual(topo.intra.mean, 2.68)
        self.assertAlmostEqual(topo.intra.std, 2.68 * 0.0014)
        self.assertAlmostEqual(topo.inter.std, 362 * 0.036)
        self.assertEqual(topo.compose_us, 0.1)

    def test_invalid(self):
        with self.assertRaises(TopologyError):
            ClusterTopology([])
        with self.assertRaises(TopologyError):
            ClusterTopology([Node(4, 4)])                       # no core left free
        with self.assertRaises(TopologyError):
            ClusterTopology([Node(4, 3, capacity=0)])
        with self.assertRaises(TopologyError):
            ClusterTopology([Node(1, 0)])                       # no workers
        with self.assertRaises(TopologyError):
            ClusterTopology([Node(4, 3)], compose_us=-1)
        with self.assertRaises(TopologyError):
            ClusterTopology.from_config([])
        with self.assertRaises(TopologyError):
            ClusterTopology.from_config({'nodes': [{'allocated': 3}]})
        with self.assertRaises(TopologyError):
            Delay(1, 0, 'uniform')
        with self.assertRaises(TopologyError):
            Delay(-1)
        # allocated defaults to cores - 1
        self.assertEqual(ClusterTopology.from_config({'nodes': [{'cores': 8}]}).worker_count, 7)

    def test_load_error(self):
        folder = tempfile.mkdtemp()
        try:
            path = os.path.join(folder, 'bad.yaml')
            with open(path, 'w') as handle:
                handle.write('nodes: [\n')
            with self.assertRaises(TopologyError):
                ClusterTopology.load(path)
        finally:
            shutil.rmtree(folder, ignore_errors=True)

    def test_delay(self):
        rng = np.random.default_rng(0)
        self.assertEqual(Delay(5, 1, 'fixed').sample(rng), 5)
        self.assertEqual(Delay(0, 1).sample(rng), 0)
        samples = [Delay(100, 10, 'lognormal').sample(rng) for index in range(2000)]
        self.assertAlmostEqual(np.mean(samples), 100, delta=2)
        self.assertTrue(all(Delay(1, 10).sample(rng) >= 0 for index in range(100)))


class TestSimulate(unittest.TestCase):
    def test_single_node(self):
        # One node with 3 of 4 cores and no delays matches like run_parallel
        topo = ClusterTopology.from_config({'nodes': [{'cores': 4}]})
        config = dict(mode='lookahead', r=1)
        outcome, report = simulate_cluster(abc_dfa(), abc_input, topo, config)
        expected = run_parallel(abc_dfa(), abc_input, dict(config, p=3, executor='inline'))
        self.assertEqual(outcome.last_state, expected.last_state)
        self.assertTrue(outcome.accepted)
        self.assertEqual(outcome.symbols, expected.symbols)
        self.assertEqual(outcome.reads, expected.reads)
        self.assertEqual(report.merge_us, 0)
        self.assertEqual(report.communication_fraction, 0)
        self.assertEqual(list(report.phases.columns),
                         ['phase', 'worker', 'node', 'start_us', 'end_us'])

    def test_two_tier_beats_binary(self):
        dfa = random_dfa(8, 4, seed=3)
        data = random_input(dfa, 60000, seed=3)
        for nodes in (4, 6):
            outcome, report = simulate_cluster(dfa, data, topology(nodes),
                                               dict(mode='basic', sink_shortcut=False))
            self.assertEqual(outcome.accepted, dfa.accepts(data))
            self.assertLess(report.two_tier_us, report.binary_us)
            self.assertEqual(len(outcome.maps), nodes * 15)

    def test_heterogeneous(self):
        # Profiled weights balance nodes of different speeds
        topo = ClusterTopology.from_config({
            'nodes': [{'cores': 4, 'allocated': 3, 'capacity': 1.0},
                      {'cores': 4, 'allocated': 3, 'capacity': 1.41}]})
        dfa = random_dfa(8, 4, seed=4)
        data = random_input(dfa, 30000, seed=4)
        config = dict(mode='basic', sink_shortcut=False, weights='profiled')
        outcome, report = simulate_cluster(dfa, data, topo, config)
        self.assertLessEqual(balance_report(outcome).max, 0.05)
        # Uniform weights leave the faster node idle
        uniform, report = simulate_cluster(dfa, data, topo, dict(config, weights='uniform'))
        self.assertGreater(balance_report(uniform).max, 0.05)

    def test_replay(self):
        dfa = random_dfa(16, 4, seed=5)
        data = random_input(dfa, 5000, seed=5)
        first = simulate_cluster(dfa, data, topology(2, 3, seed=7))[1]
        second = simulate_cluster(dfa, data, topology(2, 3, seed=7))[1]
        assert_frame_equal(first.phases, second.phases)
        self.assertEqual(first.binary_us, second.binary_us)
        other = simulate_cluster(dfa, data, topology(2, 3, seed=8))[1]
        # Send times carry the sampled delays
        self.assertFalse(first.phases.equals(other.phases))

    def test_communication_fraction(self):
        # More states mean more matching per worker, so communication matters less
        fractions = []
        for states in (8, 32, 128, 512):
            dfa = random_dfa(states, 4, seed=states)
            # A multiple of m + P - 1 symbols splits into chunks of equal work
            unit = dfa.live_count + 5
            data = random_input(dfa, unit * (20000 // unit), seed=states)
            outcome, report = simulate_cluster(dfa, data, topology(2, 3),
                                               dict(mode='basic', sink_shortcut=False))
            self.assertEqual(outcome.accepted, dfa.accepts(data))
            fractions.append(report.communication_fraction)
        for before, after in zip(fractions, fractions[1:]):
            self.assertGreater(before, after)

    def test_report(self):
        dfa = random_dfa(8, 4, seed=6)
        data = random_input(dfa, 3000, seed=6)
        outcome, report = simulate_cluster(dfa, data, topology(2, 3))
        summary = report.summary()
        self.assertAlmostEqual(summary.makespan_us, summary.match_us + summary.merge_us)
        self.assertGreaterEqual(summary.merge_us, 0)
        self.assertEqual(summary.two_tier_us, summary.merge_us)
        phases = report.phases
        self.assertEqual((phases.phase == 'match').sum(), 6)
        self.assertEqual((phases.phase == 'master').sum(), 1)
        self.assertTrue(report.to_csv().startswith('phase,worker,node,start_us,end_us'))

    def test_errors(self):
        topo = topology(1, 3)
        with self.assertRaises(ValueError):
            simulate_cluster(abc_dfa(), abc_input, topo, dict(mode='sequential'))
        outcome, report = simulate_cluster(abc_dfa(), b'abz', topo)
        self.assertFalse(outcome.accepted)
        self.assertEqual(report.makespan_us, 0)


class TestMerge(unittest.TestCase):
    def test_groups(self):
        dfa = random_dfa(16, 4, seed=7)
        data = random_input(dfa, 2000, seed=7)
        topo = topology(3, 3)
        outcome, report = simulate_cluster(dfa, data, topo)
        self.assertEqual(two_tier_merge(outcome.maps, topo.groups(), dfa.start, dfa.sink),
                         merge_sequential(outcome.maps, dfa.start, dfa.sink))

    def test_binary_latency(self):
        topo = ClusterTopology([Node(3, 2), Node(3, 2)], intra=Delay(1, 0), inter=Delay(10, 0),
                               compose_us=0.5)
        rng = np.random.default_rng(0)
        # Level 1: (0, 1) and (2, 3) pair on their nodes. Level 2 crosses nodes
        self.assertEqual(binary_tree_latency([0, 0, 0, 0], topo.node_of(), topo, rng), 12)
