'''
Compile a regular expression into a minimal complete DFA::

    >>> from specdfa.regex import compile_regex
    >>> dfa = compile_regex('a*bc*')
    >>> dfa.state_count, dfa.sink
    (3, 2)

Supported syntax, over single bytes:

- literals, ``\\x`` escapes (any byte), ``\\xHH`` hex escapes, ``\\n``, ``\\t``, ``\\r``
- ``.`` and classes ``[a-z]``, ``[^ab]``. Negation and ``.`` are relative to the alphabet
- concatenation, alternation ``|``, groups ``( )``
- ``*``, ``+``, ``?``, ``{m}``, ``{m,}``, ``{m,n}``

The match is whole-string membership, so there are no anchors. The pipeline is
Thompson NFA, subset construction (with an explicit dead state, so the DFA is total),
then Hopcroft minimization.
'''
from specdfa.automata import Dfa, detect_sink, minimize as minimize_dfa
from specdfa.config import app_log

_ESCAPES = {'n': 0x0a, 't': 0x09, 'r': 0x0d, 'f': 0x0c, 'v': 0x0b, '0': 0x00}


class RegexSyntaxError(ValueError):
    '''Raised for an invalid pattern. ``.pos`` is the 0-based offset in the pattern'''
    def __init__(self, msg, pos):
        self.pos = pos
        super(RegexSyntaxError, self).__init__('position %d: %s' % (pos, msg))


class _Parser(object):
    '''
    Recursive-descent parser. Produces a tree of tuples:

    - ``('empty',)``
    - ``('bytes', frozenset)`` for literals and classes
    - ``('not', frozenset)`` for ``.`` and negated classes, resolved once the alphabet is known
    - ``('cat', [nodes])``, ``('alt', [nodes])``
    - ``('rep', node, low, high)`` where ``high`` is None for unbounded
    '''
    def __init__(self, pattern):
        self.text = pattern
        self.pos = 0
        self.mentioned = set()

    def error(self, msg, pos=None):
        raise RegexSyntaxError(msg, self.pos if pos is None else pos)

    def peek(self):
        return self.text[self.pos] if self.pos < len(self.text) else None

    def take(self):
        char = self.peek()
        if char is None:
            self.error('unexpected end of pattern')
        self.pos += 1
        return char

    def parse(self):
        node = self.alternation()
        if self.pos < len(self.text):
            self.error('unbalanced %r' % self.peek())
        return node

    def alternation(self):
        branches = [self.concat()]
        while self.peek() == '|':
            self.pos += 1
            branches.append(self.concat())
        return branches[0] if len(branches) == 1 else ('alt', branches)

    def concat(self):
        items = []
        while self.peek() is not None and self.peek() not in '|)':
            items.append(self.repeat())
        if not items:
            return ('empty',)
        return items[0] if len(items) == 1 else ('cat', items)

    def repeat(self):
        node = self.atom()
        while True:
            char = self.peek()
            if char == '*':
                node, self.pos = ('rep', node, 0, None), self.pos + 1
            elif char == '+':
                node, self.pos = ('rep', node, 1, None), self.pos + 1
            elif char == '?':
                node, self.pos = ('rep', node, 0, 1), self.pos + 1
            elif char == '{':
                low, high = self.bounds()
                node = ('rep', node, low, high)
            else:
                return node

    def number(self):
        start = self.pos
        while self.peek() is not None and self.peek().isdigit():
            self.pos += 1
        return int(self.text[start:self.pos]) if self.pos > start else None

    def bounds(self):
        begin = self.pos
        self.pos += 1
        low = self.number()
        if low is None:
            self.error('expected a number after {')
        high = low
        if self.peek() == ',':
            self.pos += 1
            high = self.number()
        if self.peek() != '}':
            self.error('expected } to close repetition')
        self.pos += 1
        if high is not None and high < low:
            self.error('repetition {%d,%d} has max < min' % (low, high), begin)
        return low, high

    def byte(self, char, pos):
        code = ord(char)
        if code > 255:
            self.error('%r is not a single byte' % char, pos)
        return code

    def escape(self):
        pos = self.pos
        self.pos += 1
        char = self.take()
        if char == 'x':
            digits = self.text[self.pos:self.pos + 2]
            try:
                code = int(digits, 16)
            except ValueError:
                self.error('\\x needs 2 hex digits', pos)
            if len(digits) != 2:
                self.error('\\x needs 2 hex digits', pos)
            self.pos += 2
            return code
        if char in _ESCAPES:
            return _ESCAPES[char]
        return self.byte(char, pos)

    def atom(self):
        pos, char = self.pos, self.peek()
        if char == '(':
            self.pos += 1
            node = self.alternation()
            if self.peek() != ')':
                self.error('missing ) for ( at %d' % pos)
            self.pos += 1
            return node
        if char == '[':
            return self.charclass()
        if char == '.':
            self.pos += 1
            return ('not', frozenset())
        if char == '\\':
            code = self.escape()
            self.mentioned.add(code)
            return ('bytes', frozenset([code]))
        if char in '*+?{':
            self.error('nothing to repeat before %r' % char)
        if char in ')]}':
            self.error('unbalanced %r' % char)
        self.pos += 1
        code = self.byte(char, pos)
        self.mentioned.add(code)
        return ('bytes', frozenset([code]))

    def class_byte(self):
        if self.peek() == '\\':
            return self.escape()
        pos = self.pos
        return self.byte(self.take(), pos)

    def charclass(self):
        begin = self.pos
        self.pos += 1
        negate = self.peek() == '^'
        if negate:
            self.pos += 1
        codes = set()
        while self.peek() != ']':
            if self.peek() is None:
                self.error('missing ] for [ at %d' % begin)
            low = self.class_byte()
            if self.peek() == '-' and self.text[self.pos + 1:self.pos + 2] not in ('', ']'):
                self.pos += 1
                high = self.class_byte()
                if high < low:
                    self.error('bad range %r-%r' % (chr(low), chr(high)))
                codes.update(range(low, high + 1))
            else:
                codes.add(low)
        self.pos += 1
        if not codes and not negate:
            self.error('empty character class', begin)
        self.mentioned.update(codes)
        return ('not' if negate else 'bytes', frozenset(codes))


class _Nfa(object):
    '''Thompson NFA. ``edges[s]`` is a list of (symbol set or None for epsilon, target)'''
    def __init__(self, column):
        self.column = column
        self.edges = []

    def state(self):
        self.edges.append([])
        return len(self.edges) - 1

    def edge(self, src, symbols, dst):
        self.edges[src].append((symbols, dst))

    def build(self, node):
        '''Return (start, accept) states of the fragment for node'''
        kind = node[0]
        start, accept = self.state(), self.state()
        if kind == 'empty':
            self.edge(start, None, accept)
        elif kind in {'bytes', 'not'}:
            codes = node[1]
            if kind == 'not':
                codes = frozenset(self.column) - codes
            symbols = frozenset(self.column[code] for code in codes if code in self.column)
            if symbols:
                self.edge(start, symbols, accept)
        elif kind == 'cat':
            current = start
            for item in node[1]:
                first, last = self.build(item)
                self.edge(current, None, first)
                current = last
            self.edge(current, None, accept)
        elif kind == 'alt':
            for item in node[1]:
                first, last = self.build(item)
                self.edge(start, None, first)
                self.edge(last, None, accept)
        elif kind == 'rep':
            _, item, low, high = node
            current = start
            for index in range(low):
                first, last = self.build(item)
                self.edge(current, None, first)
                current = last
            if high is None:
                first, last = self.build(item)
                self.edge(current, None, first)
                self.edge(last, None, first)
                self.edge(last, None, accept)
                self.edge(current, None, accept)
            else:
                for index in range(high - low):
                    first, last = self.build(item)
                    self.edge(current, None, first)
                    self.edge(current, None, accept)
                    current = last
                self.edge(current, None, accept)
        return start, accept

    def closure(self, states):
        stack, seen = list(states), set(states)
        while stack:
            for symbols, target in self.edges[stack.pop()]:
                if symbols is None and target not in seen:
                    seen.add(target)
                    stack.append(target)
        return frozenset(seen)


def _subset(nfa, start, accept, alphabet_size):
    '''Subset construction. The empty set is the dead state, so the result is total'''
    first = nfa.closure([start])
    number = {first: 0}
    order = [first]
    rows = []
    index = 0
    while index < len(order):
        moves = [(symbols, target) for state in order[index]
                 for symbols, target in nfa.edges[state] if symbols is not None]
        row = []
        for symbol in range(alphabet_size):
            moved = [target for symbols, target in moves if symbol in symbols]
            target = nfa.closure(moved)
            if target not in number:
                number[target] = len(order)
                order.append(target)
            row.append(number[target])
        rows.append(row)
        index += 1
    finals = [number[subset] for subset in order if accept in subset]
    return rows, finals


def compile_regex(pattern, alphabet=None, minimize=True):
    '''
    Compile ``pattern`` into a complete DFA over ``alphabet`` (bytes or str). If
    ``alphabet`` is None, it is the set of bytes the pattern mentions. The result is
    minimal unless ``minimize=False``. Raises :class:`RegexSyntaxError`.
    '''
    if isinstance(pattern, (bytes, bytearray)):
        pattern = pattern.decode('latin-1')
    parser = _Parser(pattern)
    tree = parser.parse()
    if alphabet is None:
        codes = sorted(parser.mentioned)
        if not codes and '.' in pattern:
            raise ValueError('pattern %r needs an explicit alphabet' % pattern)
    else:
        # Bytes outside an explicit alphabet can never match, so they drop out of every set
        codes = sorted(set(alphabet.encode('latin-1') if isinstance(alphabet, str)
                           else bytes(alphabet)))
    column = {code: index for index, code in enumerate(codes)}
    nfa = _Nfa(column)
    start, accept = nfa.build(tree)
    rows, finals = _subset(nfa, start, accept, len(codes))
    dfa = Dfa(bytes(codes), rows, 0, finals)
    dfa = Dfa(dfa.alphabet, dfa.transitions, 0, dfa.finals, detect_sink(dfa))
    app_log.debug('regex %r: %d NFA states, %d subset states', pattern, len(nfa.edges),
                  dfa.state_count)
    return minimize_dfa(dfa) if minimize else dfa
