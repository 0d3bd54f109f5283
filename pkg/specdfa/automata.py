'''
Deterministic finite automata: construction, Grail+ interchange, sink detection,
minimization and the flattened table / input encoding the matchers consume.

A :class:`Dfa` is immutable once built. Symbols are dense indices ``0..|alphabet|-1``
into ``dfa.alphabet`` (a ``bytes`` object sorted by byte value). Transitions are a
read-only ``numpy`` array of shape ``(states, symbols)``. Example::

    >>> from specdfa.automata import parse_grail, flatten, encode_input
    >>> dfa = parse_grail(open('twosym.grail').read())
    >>> table = flatten(dfa)
    >>> buf = encode_input(b'babab', table)
'''
import hashlib
from collections import deque
import numpy as np
from specdfa.config import app_log

START_MARK = '(START)'
FINAL_MARK = '(FINAL)'


class GrailError(ValueError):
    '''Raised for malformed Grail+ text. ``.lineno`` is the 1-based line number'''
    def __init__(self, msg, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            msg = 'line %d: %s' % (lineno, msg)
        super(GrailError, self).__init__(msg)


class ForeignSymbolError(ValueError):
    '''Raised in strict mode when the input has a byte outside the alphabet'''
    def __init__(self, offset, byte):
        self.offset, self.byte = offset, byte
        super(ForeignSymbolError, self).__init__(
            'byte 0x%02x at offset %d is not in the alphabet' % (byte, offset))


def _as_alphabet(alphabet):
    if isinstance(alphabet, str):
        alphabet = alphabet.encode('latin-1')
    return bytes(alphabet)


class Dfa(object):
    '''
    A complete DFA ``(Q, alphabet, delta, start, finals)`` with an optional sink.

    :arg bytes alphabet: distinct input bytes, one per symbol index
    :arg transitions: ``(states, symbols)`` array. ``transitions[q, c]`` is the target
    :arg int start: start state
    :arg finals: accepting states
    :arg sink: the absorbing non-accepting state, if any

    Raises ``ValueError`` if the DFA is not complete and consistent.
    '''
    def __init__(self, alphabet, transitions, start, finals=(), sink=None):
        self.alphabet = _as_alphabet(alphabet)
        table = np.array(transitions, dtype=np.int64)
        if table.size == 0:
            table = table.reshape(len(table), len(self.alphabet))
        table.setflags(write=False)
        self.transitions = table
        self.start = int(start)
        self.finals = frozenset(int(f) for f in finals)
        self.sink = None if sink is None else int(sink)
        self._validate()
        self._symbol_index = {byte: index for index, byte in enumerate(self.alphabet)}

    def _validate(self):
        states, symbols = self.state_count, len(self.alphabet)
        if len(set(self.alphabet)) != symbols:
            raise ValueError('alphabet has duplicate bytes: %r' % self.alphabet)
        if self.transitions.ndim != 2 or self.transitions.shape[1] != symbols:
            raise ValueError('transitions must have shape (states, %d), not %r' % (
                symbols, self.transitions.shape))
        if states < 1:
            raise ValueError('a DFA needs at least one state')
        if self.transitions.size and (self.transitions.min() < 0 or
                                      self.transitions.max() >= states):
            raise ValueError('transition target out of range [0, %d)' % states)
        if not 0 <= self.start < states:
            raise ValueError('start state %d out of range [0, %d)' % (self.start, states))
        for final in self.finals:
            if not 0 <= final < states:
                raise ValueError('final state %d out of range [0, %d)' % (final, states))
        if self.sink is not None:
            if not 0 <= self.sink < states:
                raise ValueError('sink %d out of range [0, %d)' % (self.sink, states))
            if self.sink in self.finals:
                raise ValueError('sink %d cannot be a final state' % self.sink)
            if not (self.transitions[self.sink] == self.sink).all():
                raise ValueError('sink %d must loop to itself on every symbol' % self.sink)

    @property
    def state_count(self):
        return self.transitions.shape[0]

    @property
    def alphabet_size(self):
        return len(self.alphabet)

    @property
    def live_states(self):
        '''All states except the sink'''
        return [q for q in range(self.state_count) if q != self.sink]

    @property
    def live_count(self):
        '''Number of states except the sink. This is |Q| for planning and gamma'''
        return self.state_count - (self.sink is not None)

    def symbol_of(self, byte):
        '''Symbol index of an input byte, or None if it is not in the alphabet'''
        return self._symbol_index.get(byte)

    def delta(self, state, symbol):
        return int(self.transitions[state, symbol])

    def run(self, state, symbols):
        '''Reference interpreter: the state reached from ``state`` after ``symbols``'''
        rows = self.transitions
        for symbol in symbols:
            state = rows[state, symbol]
        return int(state)

    def accepts(self, data):
        '''Reference membership test on raw bytes. Foreign bytes reject'''
        state = self.start
        for byte in bytes(data):
            symbol = self._symbol_index.get(byte)
            if symbol is None:
                return False
            state = self.transitions[state, symbol]
        return int(state) in self.finals

    def canonical(self):
        '''
        Return an isomorphic DFA over the reachable states, numbered in
        breadth-first order from the start state (symbols in alphabet order).
        Two DFAs are isomorphic iff their canonical forms are equal.
        '''
        order = {self.start: 0}
        queue = deque([self.start])
        while queue:
            state = queue.popleft()
            for target in self.transitions[state].tolist():
                if target not in order:
                    order[target] = len(order)
                    queue.append(target)
        old = sorted(order, key=order.get)
        remap = np.zeros(self.state_count, dtype=np.int64)
        for new, state in enumerate(old):
            remap[state] = new
        transitions = remap[self.transitions[old]]
        finals = [order[f] for f in self.finals if f in order]
        sink = order.get(self.sink) if self.sink is not None else None
        return Dfa(self.alphabet, transitions, 0, finals, sink)

    def isomorphic(self, other):
        '''True if both DFAs have the same reachable structure up to renumbering'''
        a, b = self.canonical(), other.canonical()
        return (a.alphabet == b.alphabet and a.finals == b.finals and
                np.array_equal(a.transitions, b.transitions))

    def digest(self):
        '''
        SHA-256 hex digest of the DFA as numbered. Used to key persisted lookahead
        tables, which depend on the numbering. Compare ``canonical().digest()`` for
        equality up to renumbering.
        '''
        sha = hashlib.sha256()
        sha.update(self.alphabet)
        sha.update(np.ascontiguousarray(self.transitions, dtype='<i8').tobytes())
        sha.update(repr((self.start, sorted(self.finals), self.sink)).encode('utf-8'))
        return sha.hexdigest()

    def __repr__(self):
        return 'Dfa(states=%d, alphabet=%r, start=%d, finals=%r, sink=%r)' % (
            self.state_count, self.alphabet, self.start, sorted(self.finals), self.sink)


def detect_sink(dfa):
    '''
    Return the lowest-numbered non-final state whose every transition loops back
    to itself, or None. A minimal DFA has at most one such state.
    '''
    table = dfa.transitions
    loops = (table == np.arange(dfa.state_count)[:, None]).all(axis=1)
    for state in np.flatnonzero(loops).tolist():
        if state not in dfa.finals:
            return state
    return None


def _label(token, lineno):
    if len(token) != 1 or ord(token) > 255:
        raise GrailError('label %r must be a single byte' % token, lineno)
    return ord(token)


def _state_id(token, lineno):
    try:
        state = int(token)
    except ValueError:
        raise GrailError('state %r must be a non-negative integer' % token, lineno)
    if state < 0:
        raise GrailError('state %r must be a non-negative integer' % token, lineno)
    return state


def _explicit_sink(edges, finals, labels):
    '''Lowest non-final state with a self-loop on every label, or None'''
    loops = {}
    for (src, label), dst in edges.items():
        if src == dst and src not in finals:
            loops.setdefault(src, set()).add(label)
    candidates = [src for src, seen in loops.items() if seen == labels]
    return min(candidates) if candidates else None


def parse_grail(text):
    '''
    Parse one DFA in Grail+ format::

        (START) |- 0
        0 a 1
        1 b 2
        2 -| (FINAL)

    State ids are renumbered densely in ascending order. The alphabet is the sorted
    set of labels. Missing transitions are completed to the lowest non-final state
    that loops to itself on every label, or else to a synthesized sink state
    (numbered after the explicit states). Raises :class:`GrailError` for a malformed
    line, a missing or repeated start line, or a nondeterministic transition.
    '''
    if isinstance(text, (bytes, bytearray)):
        text = text.decode('latin-1')
    start, finals, edges = None, set(), {}
    states, labels = set(), set()
    for lineno, line in enumerate(text.splitlines(), 1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 3:
            raise GrailError('expected 3 tokens, got %d: %r' % (len(tokens), line), lineno)
        if tokens[0] == START_MARK and tokens[1] == '|-':
            if start is not None:
                raise GrailError('only one start state is allowed', lineno)
            start = _state_id(tokens[2], lineno)
            states.add(start)
        elif tokens[1] == '-|' and tokens[2] == FINAL_MARK:
            final = _state_id(tokens[0], lineno)
            finals.add(final)
            states.add(final)
        elif START_MARK in tokens or FINAL_MARK in tokens:
            raise GrailError('malformed marker line: %r' % line, lineno)
        else:
            src, label, dst = _state_id(tokens[0], lineno), tokens[1], _state_id(tokens[2], lineno)
            label = _label(label, lineno)
            old = edges.setdefault((src, label), dst)
            if old != dst:
                raise GrailError('state %d has two transitions on %r (%d and %d)' % (
                    src, chr(label), old, dst), lineno)
            states.update((src, dst))
            labels.add(label)
    if start is None:
        raise GrailError('no (START) line')

    number = {state: index for index, state in enumerate(sorted(states))}
    alphabet = bytes(sorted(labels))
    column = {byte: index for index, byte in enumerate(alphabet)}
    count = len(number)
    table = np.full((count + 1, len(alphabet)), count, dtype=np.int64)
    for (src, label), dst in edges.items():
        table[number[src], column[label]] = number[dst]
    missing = bool((table[:count] == count).any())
    explicit = _explicit_sink(edges, finals, labels)
    if missing and explicit is not None:
        # An explicit absorbing non-final state takes the missing transitions
        sink = number[explicit]
        table = table[:count]
        table[table == count] = sink
        table[sink] = sink
        dfa = Dfa(alphabet, table, number[start], [number[f] for f in finals], sink=sink)
    elif missing:
        app_log.debug('grail: synthesized sink %d for missing transitions', count)
        dfa = Dfa(alphabet, table, number[start], [number[f] for f in finals], sink=count)
    else:
        dfa = Dfa(alphabet, table[:count], number[start], [number[f] for f in finals])
        dfa = Dfa(alphabet, dfa.transitions, dfa.start, dfa.finals, detect_sink(dfa))
    return dfa


def emit_grail(dfa):
    '''
    Return the Grail+ text for a DFA. Transitions into or out of the sink are
    omitted since :func:`parse_grail` restores them. A symbol whose transitions
    all enter the sink makes the sink's self-loop row explicit, so the alphabet
    survives.
    '''
    lines = ['%s |- %d' % (START_MARK, dfa.start)]
    used = set()
    for src in range(dfa.state_count):
        if src == dfa.sink:
            continue
        for symbol, dst in enumerate(dfa.transitions[src].tolist()):
            if dst != dfa.sink:
                lines.append('%d %s %d' % (src, chr(dfa.alphabet[symbol]), dst))
                used.add(symbol)
    # If a symbol only leads to the sink, write the sink's full self-loop row
    if dfa.sink is not None and len(used) < dfa.alphabet_size:
        for symbol in range(dfa.alphabet_size):
            lines.append('%d %s %d' % (dfa.sink, chr(dfa.alphabet[symbol]), dfa.sink))
    lines.extend('%d -| %s' % (final, FINAL_MARK) for final in sorted(dfa.finals))
    return '\n'.join(lines) + '\n'


def reachable_states(dfa):
    '''Sorted list of states reachable from the start state'''
    seen = {dfa.start}
    queue = deque([dfa.start])
    while queue:
        for target in dfa.transitions[queue.popleft()].tolist():
            if target not in seen:
                seen.add(target)
                queue.append(target)
    return sorted(seen)


def _hopcroft(states, finals, symbols, inverse):
    '''Partition refinement. Returns a dict state -> block id'''
    final = frozenset(finals)
    other = frozenset(states) - final
    blocks = [block for block in (final, other) if block]
    if len(blocks) <= 1:
        return {state: 0 for state in states}
    block_of = {}
    for index, block in enumerate(blocks):
        for state in block:
            block_of[state] = index
    # Seed the worklist with the smaller block
    work = {0 if len(blocks[0]) <= len(blocks[1]) else 1}
    while work:
        splitter = blocks[work.pop()]
        for symbol in range(symbols):
            affected = {}
            for target in splitter:
                for pred in inverse[symbol].get(target, ()):
                    affected.setdefault(block_of[pred], set()).add(pred)
            for index, overlap in affected.items():
                block = blocks[index]
                if len(overlap) == len(block):
                    continue
                rest = block - overlap
                blocks[index] = frozenset(overlap)
                blocks.append(frozenset(rest))
                new = len(blocks) - 1
                for state in rest:
                    block_of[state] = new
                if index in work:
                    work.add(new)
                else:
                    work.add(index if len(overlap) <= len(rest) else new)
    return block_of


def minimize(dfa):
    '''
    Return the minimal DFA for the same language, with unreachable states removed,
    equivalent states merged (Hopcroft partition refinement), states numbered in
    canonical breadth-first order, and the sink detected.
    '''
    states = reachable_states(dfa)
    symbols = dfa.alphabet_size
    inverse = [{} for symbol in range(symbols)]
    for src in states:
        for symbol, dst in enumerate(dfa.transitions[src].tolist()):
            inverse[symbol].setdefault(dst, []).append(src)
    block_of = _hopcroft(states, dfa.finals & set(states), symbols, inverse)

    count = max(block_of.values()) + 1
    table = np.zeros((count, symbols), dtype=np.int64)
    for state in states:
        table[block_of[state]] = [block_of[dst] for dst in dfa.transitions[state].tolist()]
    finals = {block_of[f] for f in dfa.finals if f in block_of}
    quotient = Dfa(dfa.alphabet, table, block_of[dfa.start], finals)
    canon = quotient.canonical()
    result = Dfa(canon.alphabet, canon.transitions, canon.start, canon.finals, detect_sink(canon))
    if result.state_count < dfa.state_count:
        app_log.debug('minimize: %d -> %d states', dfa.state_count, result.state_count)
    return result


def complete(dfa):
    '''
    Return the DFA with a sink. If it has none, a sink is detected or appended.
    Used where the matcher needs a sink row, e.g. to absorb foreign bytes.
    '''
    if dfa.sink is not None:
        return dfa
    sink = detect_sink(dfa)
    if sink is not None:
        return Dfa(dfa.alphabet, dfa.transitions, dfa.start, dfa.finals, sink)
    count = dfa.state_count
    table = np.vstack([dfa.transitions, np.full((1, dfa.alphabet_size), count, np.int64)])
    return Dfa(dfa.alphabet, table, dfa.start, dfa.finals, count)


class FlatTable(object):
    '''
    One-dimensional, row-major transition table. Each state is represented by its
    row offset ``state * stride``, and ``sbase[row + symbol]`` is the row offset of the
    target. The matching loop is one add and one load per symbol::

        row = table.row_of_start
        for symbol in buf.symbols:
            row = table.rows[row + symbol]

    ``stride`` is ``max(|alphabet|, 1)`` so that row offsets stay distinct for the
    empty alphabet. ``symbol_map`` maps each of the 256 bytes to a symbol index, or
    ``-1`` for foreign bytes.
    '''
    def __init__(self, dfa):
        self.alphabet = dfa.alphabet
        self.state_count = dfa.state_count
        self.alphabet_size = dfa.alphabet_size
        self.stride = max(dfa.alphabet_size, 1)
        self.start, self.finals, self.sink = dfa.start, dfa.finals, dfa.sink
        sbase = (dfa.transitions * self.stride).ravel().astype(np.intp)
        sbase.setflags(write=False)
        self.sbase = sbase
        self.rows = sbase.tolist()
        symbol_map = np.full(256, -1, dtype=np.int16)
        symbol_map[np.frombuffer(dfa.alphabet, dtype=np.uint8)] = np.arange(dfa.alphabet_size)
        symbol_map.setflags(write=False)
        self.symbol_map = symbol_map
        self.translation = bytes(np.where(symbol_map < 0, 0, symbol_map).astype(np.uint8))
        self.row_of_start = self.start * self.stride
        self.rows_of_finals = frozenset(final * self.stride for final in self.finals)
        self.row_of_sink = None if self.sink is None else self.sink * self.stride

    def row_of(self, state):
        return state * self.stride

    def state_of(self, row):
        return row // self.stride

    def target(self, state, symbol):
        '''delta(state, symbol) via the flat table'''
        return self.rows[state * self.stride + symbol] // self.stride


def flatten(dfa):
    '''Return the :class:`FlatTable` for a DFA'''
    return FlatTable(dfa)


class SymbolBuffer(object):
    '''
    Encoded input. ``symbols`` holds one symbol index per input byte. ``foreign_at``
    is the offset of the first byte outside the alphabet, or None.
    '''
    def __init__(self, symbols, foreign_at=None):
        self.symbols = symbols
        self.length = len(symbols)
        self.foreign_at = foreign_at

    def __len__(self):
        return self.length

    @property
    def array(self):
        '''Read-only numpy uint8 view of the symbols'''
        return np.frombuffer(self.symbols, dtype=np.uint8)

    def read(self, start, stop):
        '''Symbols in ``[start, stop)`` as bytes'''
        return bytes(self.symbols[start:stop])


def encode_input(data, table, foreign='reject'):
    '''
    Map raw bytes to symbol indices through ``table.symbol_map``.

    If a byte is not in the alphabet, ``foreign='reject'`` records its offset in
    ``SymbolBuffer.foreign_at`` (matchers then reject without matching) and
    ``foreign='strict'`` raises :class:`ForeignSymbolError`.
    '''
    if foreign not in {'reject', 'strict'}:
        raise ValueError('foreign must be reject or strict, not %r' % foreign)
    data = bytes(data)
    symbols = data.translate(table.translation)
    foreign_at = None
    if table.alphabet_size < 256:
        leftover = data.translate(None, table.alphabet)
        if leftover:
            # leftover keeps input order, so its first byte is the earliest foreign byte
            foreign_at = data.find(leftover[:1])
            if foreign == 'strict':
                raise ForeignSymbolError(foreign_at, leftover[0])
            app_log.debug('encode: foreign byte 0x%02x at %d', leftover[0], foreign_at)
    return SymbolBuffer(symbols, foreign_at)
