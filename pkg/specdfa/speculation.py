'''
Reverse-lookahead initial-state sets.

If a chunk is preceded by the symbols ``w`` (its last ``r`` symbols), the DFA can only
be in a state of ``I_w = {delta(x, w) : x in Q}`` at the chunk start. Matching a chunk
for ``I_w`` instead of every state is what makes speculation cheap::

    >>> table = initial_state_sets(dfa, r=1)
    >>> candidate_set_for(table, [0])       # states entered on symbol 0
    (1, 3)
    >>> max_initial_states(table)
    2

The sink is never a candidate: a chunk that starts in the sink ends in the sink.
'''
import base64
from fractions import Fraction
import numpy as np
from orderedattrdict import AttrDict
from specdfa.config import app_log

TABLE_VERSION = 1
DEFAULT_CAP = 2 ** 20


class LookaheadCapError(ValueError):
    '''Raised when |alphabet|^r exceeds the configured table size'''
    pass


class LookaheadTable(object):
    '''
    Candidate initial-state sets for every length-``depth`` suffix.

    ``bits[index]`` is the packed bitset (``numpy.packbits``, one bit per state) of the
    suffix whose radix-|alphabet| index is ``index``. The first symbol of the suffix is
    the most significant digit. ``sizes[index]`` is the set's cardinality.
    '''
    def __init__(self, depth, alphabet_size, state_count, sink, bits):
        self.depth = depth
        self.alphabet_size = alphabet_size
        self.state_count = state_count
        self.sink = sink
        self.bits = bits
        unpacked = np.unpackbits(bits, axis=1, count=state_count) if len(bits) else \
            np.zeros((0, state_count), dtype=np.uint8)
        self.sizes = unpacked.sum(axis=1, dtype=np.int64)
        # A DFA whose every transition enters the sink has only empty sets. The planner
        # still needs a budget of at least one state
        self.i_max = max(1, int(self.sizes.max())) if len(self.sizes) else 1

    def __len__(self):
        return len(self.bits)

    def suffix_index(self, suffix):
        '''Radix index of a suffix given as symbol indices. Raises ValueError if invalid'''
        suffix = list(suffix)
        if len(suffix) != self.depth:
            raise ValueError('suffix has %d symbols, expected %d' % (len(suffix), self.depth))
        index = 0
        for symbol in suffix:
            if not 0 <= symbol < self.alphabet_size:
                raise ValueError('unknown symbol %r' % symbol)
            index = index * self.alphabet_size + symbol
        return index

    def candidates(self, index):
        '''Sorted tuple of candidate states for a suffix index'''
        bits = np.unpackbits(self.bits[index], count=self.state_count)
        return tuple(np.flatnonzero(bits).tolist())

    def items(self):
        '''Yield (suffix as a tuple of symbols, candidate states) for every suffix'''
        for index in range(len(self.bits)):
            suffix, rest = [], index
            for position in range(self.depth):
                rest, symbol = divmod(rest, self.alphabet_size)
                suffix.append(symbol)
            yield tuple(reversed(suffix)), self.candidates(index)

    def size_histogram(self):
        '''counts[k] = number of suffixes whose set has k states'''
        return np.bincount(self.sizes, minlength=self.state_count + 1)

    def to_json(self):
        '''Serializable dict. :meth:`from_json` restores it'''
        return {
            'version': TABLE_VERSION,
            'depth': self.depth,
            'alphabet_size': self.alphabet_size,
            'state_count': self.state_count,
            'sink': self.sink,
            'shape': list(self.bits.shape),
            'bits': base64.b64encode(self.bits.tobytes()).decode('ascii'),
        }

    @classmethod
    def from_json(cls, data):
        if data.get('version') != TABLE_VERSION:
            raise ValueError('lookahead table version %r is not %d' % (
                data.get('version'), TABLE_VERSION))
        bits = np.frombuffer(base64.b64decode(data['bits']), dtype=np.uint8)
        bits = bits.reshape(data['shape'])
        return cls(data['depth'], data['alphabet_size'], data['state_count'], data['sink'],
                   bits)


def initial_state_sets(dfa, r, cap=DEFAULT_CAP):
    '''
    Build the :class:`LookaheadTable` of ``dfa`` for depth ``r``: for every length-r
    suffix ``w``, the set of states ``delta(x, w)`` over all states ``x``, minus the sink.
    Costs O(|alphabet|^r * |Q|). Raises :class:`LookaheadCapError` if |alphabet|^r > cap.
    '''
    if r < 1:
        raise ValueError('lookahead depth r must be >= 1, not %r' % r)
    symbols, states = dfa.alphabet_size, dfa.state_count
    rows = symbols ** r
    if rows > cap:
        raise LookaheadCapError('%d^%d = %d lookahead rows exceed the cap of %d. Lower r' % (
            symbols, r, rows, cap))
    table = dfa.transitions
    # Suffixes of length 0: every state is possible
    current = np.ones((1, states), dtype=bool)
    for layer in range(r):
        grown = np.zeros((len(current) * symbols, states), dtype=bool)
        for symbol in range(symbols):
            # Row i * symbols + symbol extends suffix i by symbol
            block = grown[symbol::symbols]
            for state, target in enumerate(table[:, symbol].tolist()):
                block[:, target] |= current[:, state]
        current = grown
    if dfa.sink is not None:
        current[:, dfa.sink] = False
    bits = np.packbits(current, axis=1) if len(current) else \
        np.zeros((0, (states + 7) // 8), dtype=np.uint8)
    result = LookaheadTable(r, symbols, states, dfa.sink, bits)
    app_log.debug('lookahead r=%d: %d suffixes, i_max=%d of %d states', r, rows,
                  result.i_max, dfa.live_count)
    return result


def max_initial_states(table):
    '''I_max,r: the largest candidate set in the table'''
    return table.i_max


def candidate_set_for(table, suffix):
    '''
    Candidate initial states for a chunk whose preceding ``r`` symbols are ``suffix``.
    An empty result means the chunk necessarily starts in the sink.
    '''
    return table.candidates(table.suffix_index(suffix))


def gamma(dfa, r, cap=DEFAULT_CAP, table=None):
    '''
    gamma = I_max,r / |Q|, with |Q| the number of live (non-sink) states. Returns an
    AttrDict with ``ratio`` (exact Fraction), ``value`` (float), ``i_max`` and ``states``.
    '''
    if table is None:
        table = initial_state_sets(dfa, r, cap)
    states = max(dfa.live_count, 1)
    ratio = Fraction(table.i_max, states)
    return AttrDict(ratio=ratio, value=float(ratio), i_max=table.i_max, states=states)


def reduction_rate(dfa, r, cap=DEFAULT_CAP, table=None):
    '''Fraction of live states that speculation no longer has to match: 1 - gamma'''
    return 1 - gamma(dfa, r, cap, table).value


def lookahead_table(dfa, r, store=None, cap=DEFAULT_CAP):
    '''
    Return the lookahead table for ``dfa`` at depth ``r``. If ``store`` (a
    :class:`specdfa.cache.LookaheadStore`) is given, load it from there, or compute
    and save it.
    '''
    if store is None:
        return initial_state_sets(dfa, r, cap)
    key = '%s:%d' % (dfa.digest(), r)
    saved = store.load(key, None)
    if saved:
        try:
            return LookaheadTable.from_json(saved)
        except (ValueError, KeyError, TypeError):
            app_log.warning('lookahead: ignoring invalid cached table %s', key)
    table = initial_state_sets(dfa, r, cap)
    store.dump(key, table.to_json())
    store.flush()
    return table
