'''
Timing tools for specdfa
'''
import inspect
import logging
import timeit
from specdfa.config import app_log


def _caller():
    '''_caller() returns the "file:function:line" of the calling function'''
    parent = inspect.getouterframes(inspect.currentframe())[2]
    return '[%s:%s:%d]' % (parent[1], parent[3], parent[2])


class Timer(object):
    '''
    Find how long a code blocks takes to execute. Wrap any code block like this::

        >>> from specdfa.debug import Timer
        >>> timings = {}
        >>> with Timer(timings, 'match'):
        >>>     slow_running_code()
        DEBUG:specdfa:1.000s match [<file>:<func>:line]
        >>> timings
        {'match': 1.000}

    Repeated phases with the same name add up. ``timings`` may be ``None`` to
    only log. The elapsed time is also available as ``timer.elapsed``.
    '''
    def __init__(self, timings=None, phase='', level=logging.DEBUG):
        self.timings = timings
        self.phase = phase
        self.level = level
        self.elapsed = 0.0

    def __enter__(self):
        self.start = timeit.default_timer()
        return self

    def __exit__(self, type, value, traceback):
        self.elapsed = timeit.default_timer() - self.start
        if self.timings is not None:
            self.timings[self.phase] = self.timings.get(self.phase, 0.0) + self.elapsed
        if app_log.isEnabledFor(self.level):
            app_log.log(self.level, '%0.6fs %s %s', self.elapsed, self.phase, _caller())
