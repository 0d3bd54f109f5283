'''
Synthetic benchmark corpora: random DFAs of a target size, PROSITE-like protein
patterns, uniform random inputs and inputs planted with a match.

Every generator takes a ``seed`` and is deterministic for a given seed.
'''
import io
import os
import string
import numpy as np
import pandas as pd
from specdfa.automata import Dfa, emit_grail, minimize
from specdfa.config import app_log
from specdfa.regex import compile_regex

SYMBOLS = string.ascii_lowercase + string.ascii_uppercase + string.digits
# One-letter amino acid codes
AMINO = 'ACDEFGHIKLMNPQRSTVWY'


def alphabet_of(size):
    '''The first ``size`` symbols of a-z, A-Z, 0-9'''
    if not 1 <= size <= len(SYMBOLS):
        raise ValueError('alphabet size must be in 1..%d, not %r' % (len(SYMBOLS), size))
    return SYMBOLS[:size]


def _within(count, target, tolerance):
    return abs(count - target) <= tolerance * target


def random_dfa(states, alphabet=4, seed=0, sink_rate=0.1, tolerance=0.2, retries=200):
    '''
    A minimal random DFA with about ``states`` live states over the first ``alphabet``
    symbols of :data:`SYMBOLS`. Each transition goes to the sink with probability
    ``sink_rate``. Every state is reachable. Drafts are minimized and retried until
    the live state count is within ``tolerance`` of ``states``.
    '''
    if states < 1:
        raise ValueError('states must be >= 1, not %r' % states)
    symbols = alphabet_of(alphabet)
    rng = np.random.default_rng(seed)
    for attempt in range(retries):
        sink = states
        table = rng.integers(0, states, size=(states + 1, alphabet))
        table[rng.random(size=table.shape) < sink_rate] = sink
        table[sink] = sink
        # A random spanning tree from state 0 keeps every state reachable
        for state in range(1, states):
            table[rng.integers(0, state), rng.integers(0, alphabet)] = state
        finals = np.flatnonzero(rng.random(states) < 0.5).tolist() or [states - 1]
        dfa = minimize(Dfa(symbols, table, 0, finals, sink))
        if _within(dfa.live_count, states, tolerance):
            return dfa
    raise ValueError('no DFA with %d states (+/- %d%%) in %d attempts' % (
        states, tolerance * 100, retries))


def random_prosite(elements, rng):
    '''
    A random PROSITE-style pattern of ``elements`` elements such as
    ``C-x(2,4)-[LIVM]-{P}-H``
    '''
    parts = []
    for index in range(elements):
        kind = rng.random()
        if kind < 0.45:
            parts.append(AMINO[rng.integers(len(AMINO))])
        elif kind < 0.7:
            members = rng.choice(len(AMINO), size=rng.integers(2, 5), replace=False)
            parts.append('[%s]' % ''.join(sorted(AMINO[i] for i in members)))
        elif kind < 0.8:
            parts.append('{%s}' % AMINO[rng.integers(len(AMINO))])
        else:
            low = int(rng.integers(1, 3))
            high = low + int(rng.integers(0, 3))
            parts.append('x(%d)' % low if low == high else 'x(%d,%d)' % (low, high))
    return '-'.join(parts)


def prosite_to_regex(pattern):
    '''Translate a PROSITE pattern into a regex that matches it anywhere in the input'''
    pieces = []
    for part in pattern.split('-'):
        if part.startswith('x'):
            count = part[2:-1] if part.startswith('x(') else '1'
            pieces.append('.{%s}' % count)
        elif part.startswith('{'):
            pieces.append('[^%s]' % part[1:-1])
        else:
            pieces.append(part)
    return '.*%s.*' % ''.join(pieces)


def prosite_dfa(states, seed=0, tolerance=0.2, retries=200):
    '''
    A minimal DFA for a random PROSITE-like pattern with about ``states`` states over
    the 20 amino acid letters. Returns ``(dfa, pattern)``.
    '''
    rng = np.random.default_rng(seed)
    for attempt in range(retries):
        for elements in range(1, 4 * states):
            pattern = random_prosite(elements, rng)
            dfa = compile_regex(prosite_to_regex(pattern), alphabet=AMINO)
            if _within(dfa.live_count, states, tolerance):
                return dfa, pattern
            if dfa.live_count > states * (1 + tolerance):
                break
    raise ValueError('no PROSITE DFA with %d states (+/- %d%%) in %d attempts' % (
        states, tolerance * 100, retries))


def random_input(dfa, n, seed=0):
    '''``n`` uniform random bytes from the DFA's alphabet'''
    rng = np.random.default_rng(seed)
    alphabet = np.frombuffer(dfa.alphabet, dtype=np.uint8)
    if not len(alphabet):
        return b''
    return alphabet[rng.integers(0, len(alphabet), size=n)].tobytes()


def _finishing_sets(dfa, steps):
    '''``sets[k][q]`` is True if some word of length k leads from q to a final state'''
    sets = np.zeros((steps + 1, dfa.state_count), dtype=bool)
    sets[0, list(dfa.finals)] = True
    for k in range(1, steps + 1):
        sets[k] = sets[k - 1][dfa.transitions].any(axis=1)
    return sets


def planted_input(dfa, n, seed=0, retries=20):
    '''
    An input of ``n`` bytes that the DFA accepts. A random walk is kept among states
    that can still reach a final state. The last symbols are chosen so that the walk
    ends in a final state after exactly ``n`` symbols. Raises ValueError if no such
    input is found.
    '''
    rng = np.random.default_rng(seed)
    tail = min(n, 2 * dfa.state_count)
    finishing = _finishing_sets(dfa, tail)
    live = finishing.any(axis=0)
    for attempt in range(retries):
        state, symbols = dfa.start, []
        for remaining in range(n, 0, -1):
            targets = dfa.transitions[state]
            allowed = finishing[remaining - 1][targets] if remaining <= tail else live[targets]
            choices = np.flatnonzero(allowed)
            if not len(choices):
                break
            symbol = int(choices[rng.integers(len(choices))])
            symbols.append(symbol)
            state = int(targets[symbol])
        else:
            if state in dfa.finals:
                return bytes(dfa.alphabet[symbol] for symbol in symbols)
    raise ValueError('no accepted input of length %d found' % n)


def gen_corpus(folder, count=20, alphabet=4, states=(8, 32), seed=0, n=100000,
               prosite=False, planted=False, tolerance=0.2, retries=200):
    '''
    Write ``count`` DFAs as ``dfaNNN.grail`` and one input per DFA as ``dfaNNN.input``
    into ``folder``, plus a ``corpus.csv`` index (``name,states,alphabet,seed``). DFA
    ``i`` targets ``states[i % len(states)]`` states and uses seed ``seed + i``.
    Returns the index as a DataFrame.
    '''
    if not os.path.exists(folder):
        os.makedirs(folder)
    states = list(states) if isinstance(states, (list, tuple)) else [states]
    rows = []
    for index in range(count):
        name, dfa_seed = 'dfa%03d' % index, seed + index
        target = states[index % len(states)]
        if prosite:
            dfa, pattern = prosite_dfa(target, dfa_seed, tolerance, retries)
            app_log.debug('corpus: %s = %s', name, pattern)
        else:
            dfa = random_dfa(target, alphabet, dfa_seed, tolerance=tolerance, retries=retries)
        data = planted_input(dfa, n, dfa_seed) if planted else random_input(dfa, n, dfa_seed)
        with io.open(os.path.join(folder, name + '.grail'), 'w', encoding='latin-1') as handle:
            handle.write(emit_grail(dfa))
        with io.open(os.path.join(folder, name + '.input'), 'wb') as handle:
            handle.write(data)
        rows.append([name, dfa.live_count, dfa.alphabet_size, dfa_seed])
    index = pd.DataFrame(rows, columns=['name', 'states', 'alphabet', 'seed'])
    index.to_csv(os.path.join(folder, 'corpus.csv'), index=False)
    app_log.info('corpus: %d DFAs in %s', count, folder)
    return index
