import re
from itertools import product
import unittest
import numpy as np
from specdfa.automata import parse_grail
from specdfa.regex import RegexSyntaxError, compile_regex
from . import abc_dfa, abc_grail


class TestCompile(unittest.TestCase):
    def test_abc(self):
        dfa = compile_regex('a*bc*')
        self.assertEqual(dfa.state_count, 3)
        self.assertEqual(dfa.live_count, 2)
        self.assertEqual(dfa.sink, 2)
        self.assertTrue(dfa.isomorphic(abc_dfa()))
        self.assertTrue(dfa.isomorphic(parse_grail(abc_grail)))

    def test_no_minimize(self):
        raw = compile_regex('a*bc*', minimize=False)
        self.assertGreaterEqual(raw.state_count, 3)
        self.assertIsNotNone(raw.sink)
        for text in [b'b', b'ab', b'abc', b'aabcc', b'', b'ba', b'abcb']:
            self.assertEqual(raw.accepts(text), compile_regex('a*bc*').accepts(text))

    def test_alphabet(self):
        # Negation and . are relative to the alphabet
        dfa = compile_regex('[^a]+', alphabet='abc')
        self.assertEqual(dfa.alphabet, b'abc')
        self.assertTrue(dfa.accepts(b'bcb'))
        self.assertFalse(dfa.accepts(b'bab'))
        dfa = compile_regex('.{2}', alphabet='xy')
        self.assertTrue(dfa.accepts(b'xy'))
        self.assertFalse(dfa.accepts(b'xyx'))
        with self.assertRaises(ValueError):
            compile_regex('.*')
        # Bytes outside an explicit alphabet never match
        self.assertFalse(compile_regex('a|z', alphabet='ab').accepts(b'z'))

    def test_escapes(self):
        self.assertTrue(compile_regex(r'\x41\.\n').accepts(b'A.\n'))
        self.assertTrue(compile_regex(r'[\]a]+').accepts(b']a]'))
        self.assertTrue(compile_regex('a{2,}').accepts(b'aaaa'))
        self.assertFalse(compile_regex('a{2,}').accepts(b'a'))
        self.assertTrue(compile_regex('(ab|c)?d').accepts(b'd'))

    def test_errors(self):
        for pattern, pos in [('*a', 0), ('a(b', 3), ('[ab', 3), ('a)', 1), ('[]', 0),
                             ('[z-a]', 4), ('a{3,1}', 1), (r'\xZZ', 0)]:
            with self.assertRaises(RegexSyntaxError) as cm:
                compile_regex(pattern)
            self.assertEqual(cm.exception.pos, pos, pattern)
            self.assertIn('position', str(cm.exception))

    def test_python_re(self):
        # Whole-string membership agrees with re.fullmatch on random words
        rng = np.random.default_rng(0)
        patterns = ['a*bc*', '(ab|ba)*', 'a(b|c)+a?', '[ab]{2,3}c', '(a|b)*abb', 'c?(a+b)*',
                    '[^c]*c[^c]*', 'a{0,2}b{1}']
        for pattern in patterns:
            dfa = compile_regex(pattern, alphabet='abc')
            regex = re.compile(pattern)
            for count in range(200):
                word = ''.join(rng.choice(list('abc'), size=rng.integers(0, 8)))
                self.assertEqual(dfa.accepts(word.encode('ascii')),
                                 regex.fullmatch(word) is not None, (pattern, word))

    def test_exhaustive(self):
        # Every word over abc up to length 8
        dfa = compile_regex('(ab|ba)*', alphabet='abc')
        regex = re.compile('(ab|ba)*')
        for size in range(9):
            for letters in product('abc', repeat=size):
                word = ''.join(letters)
                self.assertEqual(dfa.accepts(word.encode('ascii')),
                                 regex.fullmatch(word) is not None, word)
