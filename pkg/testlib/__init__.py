import os
import numpy as np
from specdfa.automata import Dfa, parse_grail

folder = os.path.dirname(os.path.abspath(__file__))
fixtures = os.path.join(folder, 'fixtures')

# a*bc*: 0 -a-> 0, 0 -b-> 1, 1 -c-> 1. Everything else falls into the sink
abc_grail = '''(START) |- 0
0 a 0
0 b 1
1 c 1
1 -| (FINAL)
'''
abc_input = b'aaaaaaabcccc'

# 0 -a-> 1, 0 -b-> 2, 1 -b-> 3, 2 -a-> 1, 2 -b-> 3, 3 -a-> 3. 1 -a-> and 3 -b-> fall into sink 4
twosym_grail = '''(START) |- 0
0 a 1
0 b 2
1 b 3
2 a 1
2 b 3
3 a 3
3 -| (FINAL)
'''
twosym_sbase = [2, 4, 8, 6, 2, 6, 6, 8, 8, 8]
twosym_input = b'bababbababbababbaaabbababbbaabbaaaba'


def abc_dfa():
    return parse_grail(abc_grail)


def twosym_dfa():
    return parse_grail(twosym_grail)


def random_dfa(rng, states, symbols, sink=True):
    '''A random complete DFA (not minimized). With sink=True, state states-1 is a sink'''
    table = rng.integers(0, states, size=(states, symbols))
    finals = np.flatnonzero(rng.random(states) < 0.4).tolist()
    alphabet = bytes(range(ord('a'), ord('a') + symbols))
    if sink and states > 1:
        table[states - 1] = states - 1
        finals = [f for f in finals if f != states - 1]
        return Dfa(alphabet, table, 0, finals, states - 1)
    return Dfa(alphabet, table, 0, finals)


def random_text(rng, dfa, n):
    '''n random bytes from the DFA's alphabet'''
    alphabet = np.frombuffer(dfa.alphabet, dtype=np.uint8)
    return alphabet[rng.integers(0, len(alphabet), size=n)].tobytes()


def bench_enabled():
    '''Timing checks only run with SPECDFA_BENCH=1'''
    return os.environ.get('SPECDFA_BENCH', '') == '1'
