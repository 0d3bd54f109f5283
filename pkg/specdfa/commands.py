'''
Command line services: compile, analyze, match, bench, simulate and gen-corpus.

Each command is called as ``command(cmd, args)``. ``cmd`` is the list of positional
arguments and ``args`` the dict of ``--flags``. Commands return an exit code:
0 for accept or success, 1 for reject, 2 for an error.
'''
import io
import os
import glob
import timeit
import numpy as np
import pandas as pd
from copy import deepcopy
from orderedattrdict import AttrDict
import specdfa
from specdfa.automata import emit_grail, minimize, parse_grail
from specdfa.cache import LookaheadStore
from specdfa.cluster import ClusterTopology, simulate_cluster
from specdfa.config import app_log, load_yaml
from specdfa.corpus import gen_corpus as write_corpus, random_input
from specdfa.partition import WorkerProfile, plan_chunks, predicted_speedup
from specdfa.regex import compile_regex
from specdfa.runtime import RunConfig, WorkerPool, run_parallel
from specdfa.speculation import DEFAULT_CAP, LookaheadCapError, gamma, lookahead_table

usage = '''
compile: |
    usage: specdfa compile PATTERN [--grail=FILE] [--out=FILE] [--no-minimize] [--alphabet=abc]

    Compiles a regular expression (or ingests a Grail+ file with --grail) into a
    DFA and prints its states, alphabet size and sink. The DFA is minimized unless
    --no-minimize. --out writes the Grail+ text to FILE, else it is printed.

analyze: |
    usage: specdfa analyze DFA [--r=1..4] [--dist=FILE] [--plan] [--n=N] [--p=P] [--out=FILE]

    Prints, for each lookahead depth r, the CSV columns
        r,states,alphabet,i_max,gamma,reduction,mean_size
    --dist writes the initial state set size distribution (r,size,suffixes) to FILE.
    --plan also prints the chunk plan for an input of N symbols on P uniform workers
    (r,worker,start,end,lookahead_start).

match: |
    usage: specdfa match DFA INPUT [--mode=lookahead] [--p=4] [--r=1] [--lanes=0]
                               [--weights=uniform]

    Tests if the contents of INPUT are in the language of DFA. Prints
    "ACCEPT s<state>" or "REJECT s<state>" and a timing line.
    Exit code: 0 accept, 1 reject, 2 error.
    mode is sequential, basic or lookahead. weights is uniform, profiled, or a list
    of worker capacities like [50,25,25].

bench: |
    usage: specdfa bench CORPUS_DIR [--n=1000000] [--sizes=[...]] [--p=4] [--r=1]
                                    [--reps=3] [--out=FILE]

    Times every *.grail DFA in CORPUS_DIR in each mode and prints the CSV columns
        dfa,states,alphabet,r,i_max,gamma,mode,p,n,wall_us,sequential_us,
        speedup,speedup_signed,predicted,symbols,comm_fraction
    speedup_signed shows speed-downs as negative values (-1/speedup).

simulate: |
    usage: specdfa simulate TOPOLOGY DFA INPUT [--mode=lookahead] [--r=1] [--out=FILE]

    Matches INPUT on a simulated cluster described by the TOPOLOGY YAML file and
    prints the phase report CSV (phase,worker,node,start_us,end_us).

gen-corpus: |
    usage: specdfa gen-corpus [--out=DIR] [--count=20] [--alphabet=4] [--states=[8,32]]
                              [--prosite] [--planted] [--seed=0] [--n=100000]

    Writes random DFAs (dfaNNN.grail), one input per DFA (dfaNNN.input) and a
    corpus.csv index (name,states,alphabet,seed) to DIR.
'''
usage = load_yaml(usage)

# Flags that belong to the command, not to its config section
_command_flags = {'out', 'dist', 'plan', 'grail', 'no-minimize', 'alphabet', 'sizes'}


def show_usage(command):
    return 'specdfa {command}\n\n{desc}'.format(command=command, desc=usage[command].strip())


def _options(section, args):
    '''Return config section ``section`` updated with matching command line flags'''
    result = AttrDict(deepcopy(specdfa.conf.get(section, None) or {}))
    for key, value in args.items():
        if key not in _command_flags and not isinstance(value, dict):
            result[key] = value
    return result


def _run_config(section, args):
    '''RunConfig from the match: section, overridden by ``section`` and by flags'''
    config = RunConfig(deepcopy(specdfa.conf.get('match', None) or {}))
    config.update(cap=specdfa.conf.get('speculation', {}).get('cap', config.cap))
    config.profile.update(specdfa.conf.get('profile', None) or {})
    if section != 'match':
        overrides = specdfa.conf.get(section, None) or {}
        config.update((k, v) for k, v in overrides.items() if k in RunConfig.defaults)
    config.update((k, v) for k, v in args.items() if k in RunConfig.defaults)
    return config


def _store():
    path = (specdfa.conf.get('speculation', None) or {}).get('cache', None)
    return LookaheadStore(path) if path else None


def _write(text, path=None):
    '''Write text to path, or print it if path is None'''
    if path is None:
        specdfa.console(text.rstrip('\n'))
    else:
        with io.open(path, 'w', encoding='utf-8') as handle:
            handle.write(text)
        app_log.info('Saved %s', path)


def load_dfa(source, alphabet=None):
    '''Parse ``source`` as a Grail+ file if it exists, else compile it as a regex'''
    if os.path.isfile(source):
        with io.open(source, 'rb') as handle:
            return parse_grail(handle.read())
    return compile_regex(str(source), alphabet=alphabet)


def _read_input(path):
    with io.open(path, 'rb') as handle:
        return handle.read()


def _depths(value):
    '''Parse --r as an int, a list, or a range like "1..4"'''
    if isinstance(value, int):
        return [value]
    if isinstance(value, str) and '..' in value:
        low, high = value.split('..', 1)
        return list(range(int(low), int(high) + 1))
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    raise ValueError('--r must be an int, a list or a range like 1..4, not %r' % (value,))


def summary(dfa):
    return 'states: %d (live %d) alphabet: %d sink: %s' % (
        dfa.state_count, dfa.live_count, dfa.alphabet_size,
        '-' if dfa.sink is None else 's%d' % dfa.sink)


def compile(cmd, args):
    if not cmd and 'grail' not in args:
        app_log.error(show_usage('compile'))
        return 2
    alphabet = args.get('alphabet', None)
    alphabet = None if alphabet is None else str(alphabet)
    if 'grail' in args:
        dfa = load_dfa(args.grail)
        dfa = dfa if args.get('no-minimize') else minimize(dfa)
    else:
        dfa = compile_regex(str(cmd[0]), alphabet=alphabet,
                            minimize=not args.get('no-minimize', False))
    specdfa.console(summary(dfa))
    _write(emit_grail(dfa), args.get('out', None))
    return 0


def analyze(cmd, args):
    if len(cmd) < 1:
        app_log.error(show_usage('analyze'))
        return 2
    options = _options('analyze', args)
    dfa = load_dfa(cmd[0])
    cap = (specdfa.conf.get('speculation', None) or {}).get('cap', None) or DEFAULT_CAP
    store = _store()
    rows, dist, plans = [], [], []
    for r in _depths(options.r):
        table = lookahead_table(dfa, r, store=store, cap=cap)
        g = gamma(dfa, r, table=table)
        rows.append([r, dfa.live_count, dfa.alphabet_size, g.i_max, g.value, 1 - g.value,
                     float(table.sizes.mean()) if len(table) else 0.0])
        for size, count in enumerate(table.size_histogram().tolist()):
            if count:
                dist.append([r, size, count])
        if args.get('plan'):
            plan = plan_chunks(options.n, table.i_max, WorkerProfile.uniform(options.p), r)
            frame = plan.to_frame()
            frame.insert(0, 'r', r)
            plans.append(frame)
    if store is not None:
        store.close()
    columns = ['r', 'states', 'alphabet', 'i_max', 'gamma', 'reduction', 'mean_size']
    _write(pd.DataFrame(rows, columns=columns).to_csv(index=False), args.get('out', None))
    if 'dist' in args:
        _write(pd.DataFrame(dist, columns=['r', 'size', 'suffixes']).to_csv(index=False),
               args.dist)
    if plans:
        _write(pd.concat(plans, ignore_index=True).to_csv(index=False))
    return 0


def verdict(outcome):
    '''ACCEPT s<i>, REJECT s<i>, or REJECT if the last state is undefined'''
    if outcome.last_state is None:
        return 'REJECT'
    return '%s s%d' % ('ACCEPT' if outcome.accepted else 'REJECT', outcome.last_state)


def match(cmd, args):
    if len(cmd) < 2:
        app_log.error(show_usage('match'))
        return 2
    dfa = load_dfa(cmd[0])
    data = _read_input(cmd[1])
    config = _run_config('match', args)
    store = _store()
    try:
        outcome = run_parallel(dfa, data, config, store=store)
    finally:
        if store is not None:
            store.close()
    specdfa.console(verdict(outcome))
    timings = ' '.join('%s=%.6fs' % (phase, seconds)
                       for phase, seconds in outcome.timings.items())
    specdfa.console('mode=%s p=%d n=%d %s' % (config.mode, config.p, len(data), timings))
    return 0 if outcome.accepted else 1


def _bench_input(folder, name, dfa, n, seed):
    '''The corpus input for ``name`` resized to ``n`` bytes, or a random input'''
    path = os.path.join(folder, name + '.input')
    if os.path.isfile(path):
        data = _read_input(path)
        if data:
            return np.resize(np.frombuffer(data, dtype=np.uint8), n).tobytes()
    return random_input(dfa, n, seed)


def _median_us(dfa, data, config, pool, reps, store):
    '''Median wall time of ``reps`` runs in µs, and the last outcome'''
    times = []
    for rep in range(reps):
        begin = timeit.default_timer()
        outcome = run_parallel(dfa, data, config, pool=pool, store=store)
        times.append((timeit.default_timer() - begin) * 1e6)
    return float(np.median(times)), outcome


def bench(cmd, args):
    if len(cmd) < 1:
        app_log.error(show_usage('bench'))
        return 2
    folder = cmd[0]
    options = _options('bench', args)
    config = _run_config('bench', args)
    sizes = args.get('sizes', None) or [options.n]
    sizes = sizes if isinstance(sizes, list) else [sizes]
    files = sorted(glob.glob(os.path.join(folder, '*.grail')))
    if not files:
        raise ValueError('no *.grail files in %s' % folder)
    store = _store()
    records = []
    with WorkerPool(config.validate().p, config.executor) as pool:
        for path in files:
            name = os.path.splitext(os.path.basename(path))[0]
            dfa = load_dfa(path)
            try:
                g = gamma(dfa, config.r, config.cap)
                i_max, ratio = g.i_max, g.value
            except LookaheadCapError:
                i_max, ratio = np.nan, np.nan
            for n in sizes:
                data = _bench_input(folder, name, dfa, n, options.seed)
                seq_config = RunConfig(config, mode='sequential')
                sequential_us, expected = _median_us(
                    dfa, data, seq_config, pool, options.reps, store)
                for mode in options.modes:
                    if mode == 'lookahead' and np.isnan(i_max):
                        continue
                    run_config = RunConfig(config, mode=mode)
                    wall_us, outcome = _median_us(dfa, data, run_config, pool, options.reps,
                                                  store)
                    if outcome.accepted != expected.accepted:
                        raise AssertionError('%s: %s mode disagrees with sequential' % (
                            name, mode))
                    speedup = sequential_us / wall_us if wall_us else np.nan
                    predicted = {'sequential': 1.0,
                                 'basic': predicted_speedup(max(dfa.live_count, 1), config.p),
                                 'lookahead': predicted_speedup(i_max, config.p)}[mode]
                    records.append([
                        name, dfa.live_count, dfa.alphabet_size, config.r, i_max, ratio, mode,
                        1 if mode == 'sequential' else config.p, n, wall_us, sequential_us,
                        speedup, speedup if speedup >= 1 else -1 / speedup, predicted,
                        ';'.join(str(count) for count in outcome.symbols), np.nan])
            app_log.info('bench: %s done', name)
    if store is not None:
        store.close()
    columns = ['dfa', 'states', 'alphabet', 'r', 'i_max', 'gamma', 'mode', 'p', 'n',
               'wall_us', 'sequential_us', 'speedup', 'speedup_signed', 'predicted',
               'symbols', 'comm_fraction']
    _write(pd.DataFrame(records, columns=columns).to_csv(index=False), args.get('out', None))
    return 0


def simulate(cmd, args):
    if len(cmd) < 3:
        app_log.error(show_usage('simulate'))
        return 2
    topology = ClusterTopology.load(cmd[0])
    dfa = load_dfa(cmd[1])
    data = _read_input(cmd[2])
    config = _run_config('simulate', args)
    outcome, report = simulate_cluster(dfa, data, topology, config)
    _write(report.to_csv(), args.get('out', None))
    specdfa.console(verdict(outcome))
    specdfa.console(' '.join('%s=%.4f' % item for item in report.summary().items()))
    return 0 if outcome.accepted else 1


def gen_corpus(cmd, args):
    options = _options('corpus', args)
    folder = args.get('out', None) or 'corpus'
    write_corpus(folder, count=options.count, alphabet=options.alphabet, states=options.states,
                 seed=options.seed, n=options.n, prosite=options.prosite,
                 planted=options.planted, tolerance=options.tolerance,
                 retries=options.retries)
    return 0
