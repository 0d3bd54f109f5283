'''
Capacity-weighted input partitioning.

Chunk 0 is matched for the start state only. Every other chunk is matched for up to
``m`` candidate states, so it is ``m`` times shorter than chunk 0 per unit of capacity.
With ``w`` the worker weights and ``n`` the input length, chunk 0's unweighted length is::

    l0 = n * m / (w[0] * m + sum(w[1:]))

and chunk ``k >= 1`` starts at ``floor(l0 * w[0] + l0 / m * sum(w[1:k]))``. All
boundaries are computed as exact fractions and floored once, so the chunks tile
``[0, n)`` with no gaps.
'''
from collections import namedtuple
from fractions import Fraction
from math import floor
import pandas as pd
from specdfa.config import app_log


class WorkerProfile(object):
    '''
    Capacities (symbols matched per microsecond) and weights of the workers. Weights
    are capacities divided by their mean, so they add up to the number of workers.
    ``exact_weights`` are the same as Fractions.
    '''
    def __init__(self, capacities):
        capacities = list(capacities)
        if not capacities:
            raise ValueError('need at least one worker capacity')
        for index, capacity in enumerate(capacities):
            if not capacity > 0:
                raise ValueError('worker %d capacity %r must be > 0' % (index, capacity))
        self.capacities = capacities
        exact = [Fraction(capacity) for capacity in capacities]
        total = sum(exact)
        self.exact_weights = [capacity * len(exact) / total for capacity in exact]
        self.weights = [float(weight) for weight in self.exact_weights]

    def __len__(self):
        return len(self.capacities)

    def __repr__(self):
        return 'WorkerProfile(capacities=%r, weights=%r)' % (self.capacities, self.weights)

    @classmethod
    def uniform(cls, p):
        return cls([1] * p)

    @classmethod
    def from_spec(cls, spec, p):
        '''
        Build a profile from a config value: ``'uniform'``, a list of capacities,
        or a WorkerProfile (returned as-is)
        '''
        if isinstance(spec, WorkerProfile):
            return spec
        if spec in (None, 'uniform'):
            return cls.uniform(p)
        if isinstance(spec, (list, tuple)):
            if len(spec) != p:
                raise ValueError('%d capacities given for %d workers' % (len(spec), p))
            return cls(spec)
        raise ValueError('weights must be uniform, profiled or a list, not %r' % (spec,))


def compute_weights(capacities):
    '''Return the :class:`WorkerProfile` for measured capacities'''
    return WorkerProfile(capacities)


def chunk0_length(n, m, profile):
    '''Exact unweighted length l0 of chunk 0 as a Fraction'''
    if m < 1:
        raise ValueError('state budget m must be >= 1, not %r' % m)
    weights = profile.exact_weights
    return Fraction(n * m) / (weights[0] * m + sum(weights[1:]))


def predicted_speedup(m, p):
    '''Speedup over sequential matching if every chunk costs its full budget'''
    return 1 + (p - 1) / m


_Chunk = namedtuple('Chunk', ['worker', 'start', 'end', 'budget', 'lookahead_start', 'anchored'])


class Chunk(_Chunk):
    '''
    A contiguous input range ``[start, end]`` (end inclusive, empty if end < start).
    ``budget`` is the most states the chunk is matched for. The preceding reverse
    lookahead symbols are ``[lookahead_start, start)``. An ``anchored`` chunk starts so
    close to the origin that its worker matches ``[0, start)`` from the start state.
    '''
    __slots__ = ()

    @property
    def length(self):
        return max(self.end - self.start + 1, 0)


class ChunkPlan(object):
    '''
    Chunks for every worker in order, with the planning inputs ``n``, ``m``, ``r``,
    ``l0`` (Fraction) and ``weights`` (Fractions).
    '''
    columns = ['worker', 'start', 'end', 'lookahead_start']

    def __init__(self, chunks, n, m, r, l0, weights):
        self.chunks = chunks
        self.n, self.m, self.r, self.l0 = n, m, r, l0
        self.weights = weights

    def __len__(self):
        return len(self.chunks)

    def __iter__(self):
        return iter(self.chunks)

    def __getitem__(self, index):
        return self.chunks[index]

    @property
    def ranges(self):
        '''List of (start, end) offsets'''
        return [(chunk.start, chunk.end) for chunk in self.chunks]

    def work_bound(self):
        '''
        Upper bound on symbols read by all workers: n for the chunks themselves,
        l0 * w_k extra for each speculative chunk's candidate rows, m per boundary for
        floor rounding, and r per worker for lookahead reads.
        '''
        extra = self.l0 * sum(self.weights[1:])
        return self.n + extra + (len(self.chunks) - 1) * self.m + len(self.chunks) * self.r

    def to_frame(self):
        return pd.DataFrame([[getattr(chunk, col) for col in self.columns]
                             for chunk in self.chunks], columns=self.columns)

    def to_csv(self, path=None):
        '''Write the plan as CSV to path. If path is None, return the CSV text'''
        return self.to_frame().to_csv(path, index=False)


def plan_chunks(n, m, profile, r=0):
    '''
    Plan one chunk per worker in ``profile`` for an input of length ``n``, with state
    budget ``m`` (|Q| for basic speculation, I_max,r with lookahead) and lookahead
    depth ``r`` (0 for basic speculation).
    '''
    if n < 0:
        raise ValueError('input length must be >= 0, not %r' % n)
    if r < 0:
        raise ValueError('lookahead depth must be >= 0, not %r' % r)
    weights = profile.exact_weights
    l0 = chunk0_length(n, m, profile)
    # l0 * w0 + l0 / m * sum(w[1:]) == n, so every start is at most n
    starts = [0]
    position = l0 * weights[0]
    for k in range(1, len(weights)):
        starts.append(floor(position))
        position += l0 / m * weights[k]
    starts.append(n)

    chunks = []
    for k in range(len(weights)):
        start, end = starts[k], starts[k + 1] - 1
        if k == 0:
            chunks.append(Chunk(k, start, end, 1, start, False))
        elif start < max(r, 1):
            chunks.append(Chunk(k, start, end, 1, 0, True))
        else:
            chunks.append(Chunk(k, start, end, m, start - r, False))
    app_log.debug('plan: n=%d m=%d r=%d l0=%s', n, m, r, l0)
    return ChunkPlan(chunks, n, m, r, l0, weights)
