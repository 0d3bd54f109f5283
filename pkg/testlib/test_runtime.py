import unittest
import numpy as np
import psutil
from orderedattrdict import AttrDict
from specdfa.automata import ForeignSymbolError, SymbolBuffer, flatten
from specdfa.corpus import random_dfa as corpus_dfa, random_input
from specdfa.partition import WorkerProfile, predicted_speedup
from specdfa.runtime import ProfileError, RunConfig, SimulatedWorker, WorkerPool
from specdfa.runtime import balance_report, default_workers, profile_workers, run_parallel
from specdfa.runtime import profiling_sample, resolve_profile
from specdfa.speculation import initial_state_sets, max_initial_states
from . import abc_dfa, abc_input, twosym_dfa, twosym_input, random_dfa, random_text
from . import bench_enabled


class TestRunConfig(unittest.TestCase):
    def test_defaults(self):
        config = RunConfig(p=2)
        self.assertEqual(config.mode, 'lookahead')
        self.assertEqual(config.r, 1)
        self.assertEqual(config.profile.reps, 5)
        # Each config gets its own profile section
        config.profile.reps = 3
        self.assertEqual(RunConfig().profile.reps, 5)
        self.assertGreaterEqual(RunConfig().validate().p, 1)
        self.assertGreaterEqual(default_workers(), 1)

    def test_validate(self):
        for kwargs in [dict(mode='fast'), dict(p=0), dict(p=1.5), dict(r=-1),
                       dict(mode='lookahead', r=0), dict(lanes=-1), dict(executor='gpu'),
                       dict(weights='fastest'), dict(p=2, weights=[1, 2, 3])]:
            with self.assertRaises(ValueError, msg=kwargs):
                RunConfig(**kwargs).validate()
        self.assertEqual(RunConfig(mode='basic', r=0, p=2).validate().p, 2)


class TestRunParallel(unittest.TestCase):
    def test_abc(self):
        config = RunConfig(mode='lookahead', p=3, r=1, executor='inline')
        outcome = run_parallel(abc_dfa(), abc_input, config)
        self.assertTrue(outcome.accepted)
        self.assertEqual(outcome.last_state, 1)
        self.assertEqual(outcome.plan.ranges, [(0, 3), (4, 7), (8, 11)])
        self.assertEqual(outcome.symbols, [4, 4, 4])
        self.assertEqual(outcome.reads, [0, 1, 1])
        for phase in ('encode', 'plan', 'match', 'merge', 'total'):
            self.assertIn(phase, outcome.timings)

    def test_twosym_input(self):
        dfa = twosym_dfa()
        for mode in ('basic', 'lookahead'):
            outcome = run_parallel(dfa, twosym_input, dict(mode=mode, p=3, executor='inline'))
            self.assertFalse(outcome.accepted)
            symbols = [dfa.symbol_of(byte) for byte in twosym_input]
            self.assertEqual(outcome.last_state, dfa.run(0, symbols))

    def test_single_worker(self):
        dfa = abc_dfa()
        for data in (abc_input, abc_input + b'a', b'', b'b'):
            sequential = run_parallel(dfa, data, dict(mode='sequential', p=1))
            parallel = run_parallel(dfa, data, dict(mode='lookahead', p=1, executor='inline'))
            self.assertEqual(parallel.last_state, sequential.last_state)
            self.assertEqual(parallel.accepted, sequential.accepted)
            self.assertEqual(len(parallel.plan), 1)

    def test_random(self):
        # Speculative runs agree with the reference matcher and stay within the work bound
        rng = np.random.default_rng(4)
        for trial in range(1000):
            dfa = random_dfa(rng, int(rng.integers(2, 65)), int(rng.integers(1, 17)))
            # Input lengths are log-uniform up to 10^5
            data = random_text(rng, dfa, int(10 ** rng.uniform(0, 5)))
            p, r = int(rng.integers(1, 17)), int(rng.integers(0, 3))
            mode = 'basic' if r == 0 or trial % 2 else 'lookahead'
            weights = rng.uniform(0.5, 4, size=p).tolist() if trial % 3 else 'uniform'
            # The lane model steps through numpy per symbol. Keep it to short inputs
            lanes = int(rng.integers(0, 4)) if len(data) < 2000 else 0
            config = RunConfig(mode=mode, p=p, r=r, weights=weights, executor='inline',
                               lanes=lanes, sink_shortcut=bool(trial % 4))
            outcome = run_parallel(dfa, data, config)
            expected = dfa.run(dfa.start, [dfa.symbol_of(byte) for byte in data])
            self.assertEqual(outcome.last_state, expected, (trial, config))
            self.assertEqual(outcome.accepted, dfa.accepts(data), (trial, config))
            total = sum(outcome.symbols) + sum(outcome.reads)
            self.assertLessEqual(total, outcome.plan.work_bound())

    def test_check(self):
        outcome = run_parallel(twosym_dfa(), twosym_input,
                               dict(mode='lookahead', p=3, executor='inline', check=True))
        self.assertEqual(outcome.last_state, 4)

    def test_foreign(self):
        dfa = abc_dfa()
        outcome = run_parallel(dfa, b'aaz' + abc_input, dict(p=3, executor='inline'))
        self.assertFalse(outcome.accepted)
        self.assertEqual(outcome.last_state, 2)
        self.assertEqual(outcome.symbols, [0, 0, 0])
        with self.assertRaises(ForeignSymbolError):
            run_parallel(dfa, b'aaz', dict(p=3, executor='inline', foreign='strict'))

    def test_thread(self):
        dfa = corpus_dfa(16, 4, seed=1)
        data = random_input(dfa, 20000, seed=1)
        with WorkerPool(3, 'thread') as pool:
            for mode in ('basic', 'lookahead'):
                outcome = run_parallel(dfa, data, dict(mode=mode, p=3), pool=pool)
                self.assertEqual(outcome.accepted, dfa.accepts(data))

    def test_process(self):
        dfa = corpus_dfa(16, 4, seed=2)
        data = random_input(dfa, 20000, seed=2)
        outcome = run_parallel(dfa, data, dict(mode='lookahead', p=2, r=2, executor='process'))
        self.assertEqual(outcome.accepted, dfa.accepts(data))
        self.assertEqual(len(outcome.maps), 2)

    def test_pool(self):
        with self.assertRaises(ValueError):
            WorkerPool(2, 'gpu')
        pool = WorkerPool(2, 'inline')
        self.assertIsNone(pool.executor)
        self.assertIsNone(pool.share(SymbolBuffer(b'\x00')))
        pool.shutdown()


class TestProfile(unittest.TestCase):
    sample = SymbolBuffer(bytes(1000))

    def test_simulated(self):
        workers = [SimulatedWorker(1.0, noise=0.02, seed=0),
                   SimulatedWorker(1.41, noise=0.02, seed=1)]
        capacities = profile_workers(None, self.sample, reps=5, workers=workers,
                                     min_sample=0)
        self.assertAlmostEqual(capacities[1] / capacities[0], 1.41, delta=1.41 * 0.05)

    def test_weights(self):
        workers = [SimulatedWorker(capacity) for capacity in (50, 25, 25)]
        capacities = profile_workers(None, self.sample, workers=workers, min_sample=0)
        self.assertEqual(WorkerProfile(capacities).weights, [1.5, 0.75, 0.75])

    def test_errors(self):
        workers = [SimulatedWorker(1.0)]
        with self.assertRaises(ProfileError):
            profile_workers(None, self.sample, reps=4, workers=workers, min_sample=0)
        with self.assertRaises(ProfileError):
            profile_workers(None, self.sample, workers=workers, min_sample=10000)
        table = flatten(twosym_dfa())
        with self.assertRaises(ProfileError):
            profile_workers(table, self.sample, reps=1, min_sample=0, min_elapsed=60)
        with self.assertRaises(ValueError):
            SimulatedWorker(0)

    def test_inline(self):
        table = flatten(twosym_dfa())
        sample = profiling_sample(table, 20000)
        self.assertEqual(len(sample), 20000)
        capacities = profile_workers(table, sample, reps=3, min_sample=0, min_elapsed=0)
        self.assertEqual(len(capacities), 1)
        self.assertGreater(capacities[0], 0)

    def test_resolve(self):
        table = flatten(twosym_dfa())
        config = RunConfig(p=3, weights='profiled').validate()
        config.profile.update(sample=1000, min_sample=0)
        workers = [SimulatedWorker(capacity) for capacity in (2, 1, 1)]
        profile = resolve_profile(table, config, workers=workers)
        self.assertEqual(profile.weights, [1.5, 0.75, 0.75])
        config = RunConfig(p=2, weights=[3, 1]).validate()
        self.assertEqual(resolve_profile(table, config).weights, [1.5, 0.5])


class TestBalance(unittest.TestCase):
    def test_report(self):
        report = balance_report([AttrDict(worker_times=[1, 1, 1]),
                                 AttrDict(worker_times=[1, 3])])
        self.assertEqual(report.runs, [0, 0.5])
        self.assertEqual(report.min, 0)
        self.assertEqual(report.max, 0.5)
        self.assertEqual(report.avg, 0.25)
        self.assertEqual(balance_report(AttrDict(worker_times=[0, 0])).runs, [0])


@unittest.skipUnless(bench_enabled(), 'set SPECDFA_BENCH=1 to run timing checks')
class TestSpeedup(unittest.TestCase):
    workers = 4
    mb = 10 ** 6

    @classmethod
    def setUpClass(cls):
        if (psutil.cpu_count(logical=False) or 1) < cls.workers:
            raise unittest.SkipTest('needs %d physical cores' % cls.workers)
        cls.pool = WorkerPool(cls.workers)

    @classmethod
    def tearDownClass(cls):
        cls.pool.shutdown()

    def speedup(self, dfa, data, **config):
        '''Sequential time / parallel time, after a warm-up run'''
        sequential = run_parallel(dfa, data, dict(mode='sequential', sink_shortcut=False))
        config.update(p=self.workers, sink_shortcut=False)
        run_parallel(dfa, data[:self.mb], config, pool=self.pool)
        outcome = run_parallel(dfa, data, config, pool=self.pool)
        self.assertEqual(outcome.last_state, sequential.last_state)
        return sequential.timings.total / outcome.timings.total

    def test_lookahead(self):
        # I_max,1 = 2 predicts 1 + 3 / 2 = 2.5
        dfa = twosym_dfa()
        self.assertLessEqual(max_initial_states(initial_state_sets(dfa, 1)), 2)
        data = random_text(np.random.default_rng(6), dfa, 100 * self.mb)
        self.assertGreaterEqual(self.speedup(dfa, data, mode='lookahead', r=1), 1.8)

    def test_basic_shape(self):
        # Basic speedup falls with |Q| and follows 1 + (p - 1) / |Q|
        speedups = []
        for states in (2, 4, 8, 16, 32):
            dfa = corpus_dfa(states, 4, seed=states, sink_rate=0, tolerance=0)
            self.assertEqual(dfa.live_count, states)
            speedup = self.speedup(dfa, random_input(dfa, 10 * self.mb, seed=states),
                                   mode='basic')
            predicted = predicted_speedup(states, self.workers)
            self.assertAlmostEqual(speedup, predicted, delta=0.35 * predicted)
            speedups.append(speedup)
        self.assertEqual(speedups, sorted(speedups, reverse=True))

    def test_input_size(self):
        # Speedup hardly changes from 1 MB to 100 MB
        dfa = twosym_dfa()
        data = random_text(np.random.default_rng(7), dfa, 100 * self.mb)
        speedups = [self.speedup(dfa, data[:size * self.mb], mode='lookahead', r=1)
                    for size in (1, 10, 100)]
        self.assertLess((max(speedups) - min(speedups)) / max(speedups), 0.15)
