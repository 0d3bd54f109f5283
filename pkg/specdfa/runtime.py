'''
Execution engine: worker pools, offline profiling, the shared-memory parallel runner
and load-balance statistics.

:func:`run_parallel` runs the whole pipeline::

    >>> from specdfa.runtime import RunConfig, run_parallel
    >>> outcome = run_parallel(dfa, data, RunConfig(mode='lookahead', p=4, r=1))
    >>> outcome.accepted, outcome.last_state, outcome.timings
'''
import sys
import timeit
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from multiprocessing import shared_memory
import numpy as np
import psutil
from orderedattrdict import AttrDict
from specdfa.automata import SymbolBuffer, flatten, encode_input
from specdfa.config import app_log
from specdfa.debug import Timer
from specdfa.matching import (
    SpeculationError, make_outcome, check_work_bound, match_sequential, merge_sequential,
    run_chunks, run_rows)
from specdfa.partition import WorkerProfile, plan_chunks
from specdfa.speculation import DEFAULT_CAP, lookahead_table

MODES = ('sequential', 'basic', 'lookahead')
EXECUTORS = ('process', 'thread', 'inline')


class ProfileError(ValueError):
    '''Raised when a profiling sample cannot be timed reliably'''
    pass


def default_workers():
    '''Physical cores minus one, at least 1. One core is left for the system'''
    cores = psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
    return max(cores - 1, 1)


class RunConfig(AttrDict):
    '''
    Settings for :func:`run_parallel`. Defaults are in the ``match:`` section of
    ``specdfa.yaml``. Keys:

    mode
        sequential, basic or lookahead
    p
        number of workers. None means :func:`default_workers`
    r
        reverse lookahead symbols. Used only in lookahead mode, where it must be >= 1
    lanes
        lane width of the batch matcher. 0 matches each candidate scalar
    weights
        ``uniform``, ``profiled``, or a list of capacities (one per worker)
    sink_shortcut
        stop a speculative row once it reaches the sink
    executor
        process, thread or inline
    foreign
        reject or strict. See :func:`specdfa.automata.encode_input`
    check
        compare every result with the sequential matcher
    '''
    defaults = AttrDict(
        mode='lookahead', p=None, r=1, lanes=0, weights='uniform', sink_shortcut=True,
        executor='process', foreign='reject', check=False, cap=DEFAULT_CAP,
        profile=AttrDict(reps=5, sample=1000000, min_sample=100000, min_elapsed=1e-3),
    )

    def __init__(self, *args, **kwargs):
        super(RunConfig, self).__init__()
        self.update(self.defaults)
        self.profile = AttrDict(self.defaults.profile)
        self.update(*args, **kwargs)

    def validate(self):
        '''Check values and fill in ``p``. Returns self. Raises ValueError'''
        if self.mode not in MODES:
            raise ValueError('mode must be one of %s, not %r' % ('/'.join(MODES), self.mode))
        if self.p is None:
            self.p = default_workers()
        if not isinstance(self.p, int) or self.p < 1:
            raise ValueError('p must be a positive integer, not %r' % (self.p,))
        if not isinstance(self.r, int) or self.r < 0:
            raise ValueError('r must be a non-negative integer, not %r' % (self.r,))
        if self.mode == 'lookahead' and self.r < 1:
            raise ValueError('lookahead mode needs r >= 1')
        if not isinstance(self.lanes, int) or self.lanes < 0:
            raise ValueError('lanes must be >= 0, not %r' % (self.lanes,))
        if self.executor not in EXECUTORS:
            raise ValueError('executor must be one of %s, not %r' % (
                '/'.join(EXECUTORS), self.executor))
        if isinstance(self.weights, (list, tuple)):
            WorkerProfile.from_spec(list(self.weights), self.p)
        elif self.weights not in {'uniform', 'profiled'}:
            raise ValueError('weights must be uniform, profiled or a list, not %r' % (
                self.weights,))
        return self


def _attach(name):
    '''Attach to an existing shared memory block without tracking it for cleanup'''
    if sys.version_info >= (3, 13):
        return shared_memory.SharedMemory(name=name, track=False)
    shm = shared_memory.SharedMemory(name=name)
    # Before 3.13, attaching registers the block with this process's resource
    # tracker, which would unlink it when the worker exits
    from multiprocessing import resource_tracker
    resource_tracker.unregister(shm._name, 'shared_memory')
    return shm


class SharedBuffer(object):
    '''
    A :class:`specdfa.automata.SymbolBuffer` published in shared memory. It pickles as
    its name, so process workers attach to the same pages instead of copying the input.
    The creating process must call :meth:`unlink`. Workers call :meth:`release`.
    '''
    def __init__(self, buf):
        self._shm = shared_memory.SharedMemory(create=True, size=max(buf.length, 1))
        self._shm.buf[:buf.length] = buf.symbols
        self.name = self._shm.name
        self.length = buf.length
        self.foreign_at = buf.foreign_at
        self.owner = True
        self.symbols = self._shm.buf[:self.length]

    def __getstate__(self):
        return {'name': self.name, 'length': self.length, 'foreign_at': self.foreign_at}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._shm = _attach(self.name)
        self.owner = False
        self.symbols = self._shm.buf[:self.length]

    def __len__(self):
        return self.length

    def read(self, start, stop):
        return bytes(self.symbols[start:stop])

    def release(self):
        '''Detach a worker's view'''
        if not self.owner and self._shm is not None:
            self.symbols.release()
            self._shm.close()
            self._shm = None

    def unlink(self):
        '''Free the shared memory. Only the creating process calls this'''
        if self.owner and self._shm is not None:
            self.symbols.release()
            self._shm.close()
            self._shm.unlink()
            self._shm = None


class WorkerPool(object):
    '''
    A persistent pool of ``workers`` matchers. ``executor`` is ``process`` (true
    parallelism, input shared via :class:`SharedBuffer`), ``thread`` or ``inline``
    (no pool: chunks run one after another in the caller). If a process pool cannot
    be created, the pool falls back to threads. Use as a context manager::

        with WorkerPool(4) as pool:
            outcome = run_parallel(dfa, data, config, pool=pool)
    '''
    def __init__(self, workers, executor='process'):
        self.workers = workers
        self.kind = executor
        self.executor = None
        if executor == 'process':
            try:
                self.executor = ProcessPoolExecutor(max_workers=workers)
            except (OSError, ImportError, NotImplementedError) as exc:
                app_log.warning('pool: process pool unavailable (%s). Using threads', exc)
                self.kind = 'thread'
        if self.kind == 'thread':
            self.executor = ThreadPoolExecutor(max_workers=workers)
        elif self.kind not in EXECUTORS:
            raise ValueError('executor must be one of %s, not %r' % (
                '/'.join(EXECUTORS), executor))

    def share(self, buf):
        '''Return a shared handle for ``buf`` if workers are processes, else None'''
        if self.kind != 'process':
            return None
        try:
            return SharedBuffer(buf)
        except OSError as exc:
            app_log.warning('pool: shared memory unavailable (%s). Input will be copied', exc)
            return None

    def shutdown(self):
        if self.executor is not None:
            self.executor.shutdown(wait=True)
            self.executor = None

    def __enter__(self):
        return self

    def __exit__(self, type, value, traceback):
        self.shutdown()


class SimulatedWorker(object):
    '''
    A worker with a known capacity in symbols per microsecond. ``noise`` is the
    relative standard deviation of its timings (0 for exact timings).
    '''
    def __init__(self, capacity, noise=0.0, seed=None):
        if not capacity > 0:
            raise ValueError('capacity must be > 0, not %r' % capacity)
        self.capacity = capacity
        self.noise = noise
        self.rng = np.random.default_rng(seed)

    def match_time(self, symbols):
        '''Microseconds to match ``symbols`` symbols'''
        elapsed = symbols / self.capacity
        if self.noise:
            elapsed *= max(1 + self.noise * self.rng.standard_normal(), 0.01)
        return elapsed


def _profile_task(table, buf):
    '''Time one sequential matching run of the sample. Returns seconds'''
    try:
        begin = timeit.default_timer()
        run_rows(table.rows, buf.read(0, len(buf)), table.row_of_start)
        return timeit.default_timer() - begin
    finally:
        release = getattr(buf, 'release', None)
        if release is not None:
            release()


def profiling_sample(table, size, seed=0):
    '''A SymbolBuffer of ``size`` uniformly random symbols'''
    rng = np.random.default_rng(seed)
    symbols = rng.integers(0, max(table.alphabet_size, 1), size=size, dtype=np.uint8)
    return SymbolBuffer(symbols.tobytes())


def profile_workers(table, sample, reps=5, workers=None, pool=None, min_sample=100000,
                    min_elapsed=1e-3):
    '''
    Measure each worker's capacity in symbols per microsecond as the median of ``reps``
    sequential matching runs over ``sample``.

    ``workers`` is a list of simulated workers (with a ``match_time(symbols)`` method).
    Otherwise every worker of ``pool`` is timed (a single inline worker if no pool).
    Each round submits one run per worker, so all workers are busy together as they
    are when matching. Raises :class:`ProfileError` for even ``reps``, a sample under
    ``min_sample`` symbols or a sample too fast to time.
    '''
    if reps < 1 or reps % 2 == 0:
        raise ProfileError('reps must be odd, not %r' % reps)
    if len(sample) < min_sample:
        raise ProfileError('profiling sample has %d symbols, need at least %d' % (
            len(sample), min_sample))
    if workers is not None:
        times = [[worker.match_time(len(sample)) for rep in range(reps)] for worker in workers]
        capacities = [len(sample) / float(np.median(runs)) for runs in times]
        app_log.debug('profile: simulated capacities %r', capacities)
        return capacities

    count = pool.workers if pool is not None and pool.executor is not None else 1
    seconds = [[] for worker in range(count)]
    shared = pool.share(sample) if pool is not None else None
    try:
        for rep in range(reps):
            if pool is None or pool.executor is None:
                seconds[0].append(_profile_task(table, sample))
                continue
            task_buf = sample if shared is None else shared
            futures = [pool.executor.submit(_profile_task, table, task_buf)
                       for worker in range(count)]
            for worker, future in enumerate(futures):
                seconds[worker].append(future.result())
    finally:
        if shared is not None:
            shared.unlink()
    medians = [float(np.median(runs)) for runs in seconds]
    if min(medians) < min_elapsed:
        raise ProfileError('profiling run took %.6fs. Enlarge the sample beyond %d symbols' % (
            min(medians), len(sample)))
    capacities = [len(sample) / (median * 1e6) for median in medians]
    app_log.debug('profile: capacities %r symbols/us', capacities)
    return capacities


def resolve_profile(table, config, pool=None, workers=None):
    '''Return the WorkerProfile for ``config.weights``'''
    if config.weights == 'profiled':
        if workers is None and table.alphabet_size == 0:
            return WorkerProfile.uniform(config.p)
        sample = profiling_sample(table, config.profile.sample)
        capacities = profile_workers(
            table, sample, config.profile.reps, workers=workers, pool=pool,
            min_sample=config.profile.min_sample, min_elapsed=config.profile.min_elapsed)
        if len(capacities) != config.p:
            capacities = (capacities * config.p)[:config.p]
        return WorkerProfile(capacities)
    return WorkerProfile.from_spec(config.weights, config.p)


def plan_for(dfa, n, config, profile, store=None):
    '''Return ``(plan, lookahead table or None)`` for a speculative run'''
    if config.mode == 'lookahead':
        lookahead = lookahead_table(dfa, config.r, store=store, cap=config.cap)
        return plan_chunks(n, lookahead.i_max, profile, config.r), lookahead
    return plan_chunks(n, max(dfa.live_count, 1), profile, 0), None


def run_parallel(dfa, data, config=None, pool=None, store=None, workers=None):
    '''
    Test whether ``data`` (bytes) is in the language of ``dfa``:
    encode, weigh workers, build the lookahead table (lookahead mode), plan chunks,
    match them concurrently, merge. Returns a :class:`specdfa.matching.MatchOutcome`.

    ``pool`` is a :class:`WorkerPool` to reuse. Without one, a pool is created for this
    run. ``store`` is an optional :class:`specdfa.cache.LookaheadStore`. ``workers``
    are simulated workers to profile instead of the pool.
    '''
    config = RunConfig(config or {}).validate()
    timings = AttrDict()
    begin = timeit.default_timer()
    with Timer(timings, 'encode'):
        table = flatten(dfa)
        buf = encode_input(data, table, config.foreign)

    if config.mode == 'sequential' or buf.foreign_at is not None:
        if config.mode == 'sequential':
            outcome = match_sequential(table, buf, config.sink_shortcut)
        else:
            outcome = make_outcome(table, table.sink, config.mode, symbols=[0] * config.p)
        timings.match = outcome.timings.get('match', 0.0)
        timings.total = timeit.default_timer() - begin
        outcome.timings = timings
        return outcome

    own_pool = pool is None
    if own_pool:
        pool = WorkerPool(config.p, config.executor)
    try:
        with Timer(timings, 'plan'):
            profile = resolve_profile(table, config, pool=pool, workers=workers)
            plan, lookahead = plan_for(dfa, buf.length, config, profile, store)
        with Timer(timings, 'match'):
            shared = pool.share(buf)
            try:
                results = run_chunks(table, buf, plan, config.mode, lookahead, pool.executor,
                                     config.sink_shortcut, config.lanes, shared)
            finally:
                if shared is not None:
                    shared.unlink()
    finally:
        if own_pool:
            pool.shutdown()
    maps = [result.state_map for result in results]
    with Timer(timings, 'merge'):
        last_state = merge_sequential(maps, dfa.start, dfa.sink)
    timings.total = timeit.default_timer() - begin
    outcome = make_outcome(
        table, last_state, config.mode,
        symbols=[result.state_map.work for result in results],
        reads=[result.reads for result in results],
        worker_times=[result.seconds * 1e6 for result in results],
        timings=timings, plan=plan, maps=maps)
    check_work_bound(outcome, plan)
    if config.check:
        expected = match_sequential(table, buf)
        if (expected.last_state, expected.accepted) != (outcome.last_state, outcome.accepted):
            raise SpeculationError('%s mode ended in %r, sequential in %r' % (
                config.mode, outcome.last_state, expected.last_state))
    app_log.debug('%s p=%d: %s in state %s (%.6fs)', config.mode, config.p,
                  'accept' if outcome.accepted else 'reject', last_state, timings.total)
    return outcome


def balance_report(outcomes):
    '''
    Relative standard deviation of per-worker matching times for one outcome or a
    list of outcomes. Returns an AttrDict with ``runs`` (one value per outcome) and
    their ``min``, ``avg`` and ``max``.
    '''
    if isinstance(outcomes, dict):
        outcomes = [outcomes]
    runs = []
    for outcome in outcomes:
        times = np.asarray(outcome.worker_times, dtype=float)
        mean = times.mean() if len(times) else 0.0
        runs.append(float(times.std() / mean) if mean > 0 else 0.0)
    return AttrDict(runs=runs, min=min(runs), avg=float(np.mean(runs)), max=max(runs))
