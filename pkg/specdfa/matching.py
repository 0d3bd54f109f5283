'''
Matching kernels, per-chunk state maps and merges.

- :func:`match_sequential` is the baseline: one pass from the start state.
- :func:`match_chunk` matches one chunk for a set of candidate initial states and
  returns a :class:`StateMap` from each candidate to the state reached at the chunk end.
- :func:`match_speculative_basic` matches every chunk after the first for every live
  state. :func:`match_speculative_lookahead` matches it only for the states the
  preceding ``r`` symbols allow.
- :func:`merge_sequential` folds the maps from the start state. :func:`compose_maps`
  and :func:`reduce_binary` combine maps associatively.

The scalar kernel works on row offsets (see :class:`specdfa.automata.FlatTable`)::

    for symbol in symbols:
        row = rows[row + symbol]
'''
import timeit
from collections import namedtuple
import numpy as np
from orderedattrdict import AttrDict
from specdfa.config import app_log

# Symbols matched between two checks for the sink
SINK_CHECK_BLOCK = 65536
UNSET = -1


class SpeculationError(AssertionError):
    '''A merge found no entry for the boundary state. This means an unsound candidate set'''
    pass


class StateMap(object):
    '''
    Partial map from a chunk's candidate initial states to the states reached at its
    end. Stored densely: ``entries[q]`` is the last state for candidate ``q``, or -1.
    ``work`` counts the symbols matched to build it.
    '''
    def __init__(self, entries, chunk=0, work=0):
        self.entries = np.asarray(entries, dtype=np.int64)
        self.chunk = chunk
        self.work = work

    @classmethod
    def identity(cls, states, state_count, chunk=0):
        '''Map every state in ``states`` to itself'''
        entries = np.full(state_count, UNSET, dtype=np.int64)
        states = list(states)
        if states:
            entries[states] = states
        return cls(entries, chunk)

    @classmethod
    def from_dict(cls, mapping, state_count, chunk=0):
        entries = np.full(state_count, UNSET, dtype=np.int64)
        for state, last in mapping.items():
            entries[state] = last
        return cls(entries, chunk)

    @property
    def candidates(self):
        '''Sorted tuple of states that have an entry'''
        return tuple(np.flatnonzero(self.entries >= 0).tolist())

    def __getitem__(self, state):
        value = self.entries[state]
        if value < 0:
            raise KeyError(state)
        return int(value)

    def __contains__(self, state):
        return 0 <= state < len(self.entries) and self.entries[state] >= 0

    def __len__(self):
        return int((self.entries >= 0).sum())

    def get(self, state, default=None):
        return self[state] if state in self else default

    def items(self):
        return [(state, int(self.entries[state])) for state in self.candidates]

    def to_dict(self):
        return dict(self.items())

    def __eq__(self, other):
        return isinstance(other, StateMap) and np.array_equal(self.entries, other.entries)

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return 'StateMap(chunk=%d, %r)' % (self.chunk, self.to_dict())


class MatchOutcome(AttrDict):
    '''
    Result of a membership test. Keys:

    - ``accepted``: True iff ``last_state`` is a final state
    - ``last_state``: the state after the whole input. None only if a foreign byte was
      rejected by a DFA that has no sink
    - ``mode``: sequential, basic or lookahead
    - ``symbols``: symbols matched per worker
    - ``reads``: extra symbols read per worker (lookahead windows, anchored prefixes)
    - ``worker_times``: matching time per worker in microseconds
    - ``timings``: seconds per phase (plan, match, merge, total)
    - ``plan``: the :class:`specdfa.partition.ChunkPlan`, or None
    - ``maps``: the :class:`StateMap` per chunk
    '''
    pass


def make_outcome(table, last_state, mode, **kwargs):
    kwargs.setdefault('symbols', [0])
    kwargs.setdefault('reads', [0] * len(kwargs['symbols']))
    kwargs.setdefault('worker_times', [0.0] * len(kwargs['symbols']))
    kwargs.setdefault('timings', AttrDict())
    kwargs.setdefault('plan', None)
    kwargs.setdefault('maps', [])
    accepted = last_state is not None and last_state in table.finals
    return MatchOutcome(accepted=accepted, last_state=last_state, mode=mode, **kwargs)


def run_rows(rows, symbols, row, sink_row=None):
    '''
    Scalar kernel. Match ``symbols`` from row offset ``row`` and return
    ``(last row, symbols matched)``. If ``sink_row`` is given, stop early once the
    sink is reached (checked every :data:`SINK_CHECK_BLOCK` symbols).
    '''
    if sink_row is None:
        for symbol in symbols:
            row = rows[row + symbol]
        return row, len(symbols)
    view = memoryview(symbols)
    for begin in range(0, len(view), SINK_CHECK_BLOCK):
        for symbol in view[begin:begin + SINK_CHECK_BLOCK]:
            row = rows[row + symbol]
        if row == sink_row:
            return row, min(begin + SINK_CHECK_BLOCK, len(view))
    return row, len(view)


def match_sequential(table, buf, sink_shortcut=True):
    '''Match the whole input from the start state'''
    if buf.foreign_at is not None:
        return make_outcome(table, table.sink, 'sequential')
    start = timeit.default_timer()
    sink_row = table.row_of_sink if sink_shortcut else None
    row, work = run_rows(table.rows, buf.symbols, table.row_of_start, sink_row)
    elapsed = timeit.default_timer() - start
    return make_outcome(table, table.state_of(row), 'sequential', symbols=[work],
                        worker_times=[elapsed * 1e6],
                        timings=AttrDict(match=elapsed, total=elapsed))


def match_lanes(table, symbols, lanes, steps):
    '''
    Advance several lanes in lockstep, like a vector gather. Each lane is an
    ``(input offset, initial row offset)``. Every step gathers each lane's next symbol,
    adds it to the lane's row and gathers the next row. Returns the list of row
    offsets after ``steps`` symbols.
    '''
    data = np.frombuffer(symbols, dtype=np.uint8) if not isinstance(symbols, np.ndarray) \
        else symbols
    offsets = np.array([offset for offset, row in lanes], dtype=np.intp)
    rows = np.array([row for offset, row in lanes], dtype=np.intp)
    if len(lanes) and (offsets.min() < 0 or offsets.max() + steps > len(data)):
        raise ValueError('every lane needs %d symbols after its offset' % steps)
    sbase = table.sbase
    for step in range(steps):
        rows = sbase[rows + data[offsets]]
        offsets += 1
    return rows.tolist()


def match_chunk(table, buf, start, end, candidates, chunk=0, sink_shortcut=True, lanes=0):
    '''
    Match ``buf[start:end + 1]`` from every state in ``candidates``. Returns the
    :class:`StateMap`. With ``lanes > 0``, full batches of ``lanes`` candidates run
    through :func:`match_lanes` and the remaining candidates run scalar.
    '''
    entries = np.full(table.state_count, UNSET, dtype=np.int64)
    candidates = list(candidates)
    steps = max(end - start + 1, 0)
    if not steps:
        if candidates:
            entries[candidates] = candidates
        return StateMap(entries, chunk, 0)
    symbols = buf.read(start, end + 1)
    work = 0
    stride = table.stride
    batched = len(candidates) - len(candidates) % lanes if lanes else 0
    if batched:
        data = np.frombuffer(symbols, dtype=np.uint8)
        for begin in range(0, batched, lanes):
            batch = candidates[begin:begin + lanes]
            rows = match_lanes(table, data, [(0, state * stride) for state in batch], steps)
            entries[batch] = np.asarray(rows) // stride
            work += steps * len(batch)
    sink_row = table.row_of_sink if sink_shortcut else None
    for state in candidates[batched:]:
        row, matched = run_rows(table.rows, symbols, state * stride, sink_row)
        entries[state] = row // stride
        work += matched
    return StateMap(entries, chunk, work)


ChunkResult = namedtuple('ChunkResult', ['state_map', 'reads', 'seconds'])


def chunk_candidates(table, buf, chunk, mode, lookahead=None):
    '''
    Return ``(candidates, reads)`` for a planned chunk: the start state for chunk 0,
    the exact state for an anchored chunk, every live state in basic mode, and the
    lookahead set of the preceding ``r`` symbols otherwise.
    '''
    if chunk.worker == 0:
        return (table.start,), 0
    if chunk.anchored:
        row, matched = run_rows(table.rows, buf.read(0, chunk.start), table.row_of_start)
        state = table.state_of(row)
        return (() if state == table.sink else (state,)), chunk.start
    if mode == 'basic':
        return tuple(q for q in range(table.state_count) if q != table.sink), 0
    window = buf.read(chunk.lookahead_start, chunk.start)
    return lookahead.candidates(lookahead.suffix_index(window)), len(window)


def match_task(table, buf, chunk, mode, lookahead=None, sink_shortcut=True, lanes=0):
    '''
    Match one planned chunk. This runs inside a worker. ``buf`` may be a shared
    buffer handle, which is released when done. Returns a :class:`ChunkResult`.
    '''
    try:
        begin = timeit.default_timer()
        candidates, reads = chunk_candidates(table, buf, chunk, mode, lookahead)
        state_map = match_chunk(table, buf, chunk.start, chunk.end, candidates, chunk.worker,
                                sink_shortcut, lanes)
        return ChunkResult(state_map, reads, timeit.default_timer() - begin)
    finally:
        release = getattr(buf, 'release', None)
        if release is not None:
            release()


def run_chunks(table, buf, plan, mode, lookahead=None, executor=None, sink_shortcut=True,
               lanes=0, shared=None):
    '''
    Match every chunk of ``plan`` and return the list of :class:`ChunkResult` in chunk
    order. Chunks run on ``executor`` (a ``concurrent.futures`` executor) if given,
    else inline. ``shared`` replaces ``buf`` in the submitted tasks (e.g. a shared
    memory handle for process pools).
    '''
    if mode not in {'basic', 'lookahead'}:
        raise ValueError('speculative mode must be basic or lookahead, not %r' % mode)
    if mode == 'lookahead' and lookahead is None:
        raise ValueError('lookahead mode needs a lookahead table')
    if executor is None:
        return [match_task(table, buf, chunk, mode, lookahead, sink_shortcut, lanes)
                for chunk in plan]
    task_buf = buf if shared is None else shared
    futures = [executor.submit(match_task, table, task_buf, chunk, mode, lookahead,
                               sink_shortcut, lanes) for chunk in plan]
    # Barrier: the coordinator merges only after every worker is done
    return [future.result() for future in futures]


def match_speculative_basic(table, buf, plan, executor=None, sink_shortcut=True, lanes=0):
    '''Match chunk 0 from the start state and every other chunk for every live state'''
    results = run_chunks(table, buf, plan, 'basic', None, executor, sink_shortcut, lanes)
    return [result.state_map for result in results]


def match_speculative_lookahead(table, buf, lookahead, plan, executor=None,
                                sink_shortcut=True, lanes=0):
    '''Match chunk 0 from the start state and every other chunk for its lookahead set'''
    results = run_chunks(table, buf, plan, 'lookahead', lookahead, executor, sink_shortcut,
                         lanes)
    return [result.state_map for result in results]


def merge_sequential(maps, q0, sink=None):
    '''
    Fold the maps from ``q0``: the state after chunk i is ``maps[i][state]``. Once the
    sink is reached it is the result. Raises :class:`SpeculationError` if a map has no
    entry for the incoming state.
    '''
    state = q0
    for state_map in maps:
        if state == sink:
            return sink
        if state not in state_map:
            raise SpeculationError('chunk %d has no entry for state %d (candidates %r)' % (
                state_map.chunk, state, state_map.candidates))
        state = state_map[state]
    return state


def compose_maps(first, second, sink=None):
    '''
    Return the map of ``first`` followed by ``second``: ``result[q] = second[first[q]]``
    for every candidate ``q`` of ``first``. States that reach the sink stay there.
    Raises :class:`SpeculationError` if ``second`` lacks an entry ``first`` needs.
    '''
    entries = first.entries.copy()
    mask = entries >= 0
    middle = entries[mask]
    if sink is not None:
        absorbed = middle == sink
        lookup = np.where(absorbed, 0, middle)
        result = np.where(absorbed, sink, second.entries[lookup])
    else:
        result = second.entries[middle]
    if (result < 0).any():
        missing = middle[result < 0]
        raise SpeculationError('chunk %d has no entry for state %d' % (
            second.chunk, int(missing[0])))
    entries[mask] = result
    return StateMap(entries, second.chunk, first.work + second.work)


def reduce_binary(maps, sink=None):
    '''Compose maps as a balanced binary tree. Equals the left fold by associativity'''
    maps = list(maps)
    if not maps:
        raise ValueError('reduce_binary needs at least one map')
    while len(maps) > 1:
        paired = [compose_maps(maps[i], maps[i + 1], sink) for i in range(0, len(maps) - 1, 2)]
        if len(maps) % 2:
            paired.append(maps[-1])
        maps = paired
    return maps[0]


def check_work_bound(outcome, plan):
    '''Raise :class:`SpeculationError` if the workers read more than the plan allows'''
    total = sum(outcome.symbols) + sum(outcome.reads)
    bound = plan.work_bound()
    if total > bound:
        raise SpeculationError('workers read %d symbols, above the bound %s' % (
            total, float(bound)))
    app_log.debug('work: %d symbols, bound %.1f', total, float(bound))
    return total
