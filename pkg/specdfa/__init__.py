'''
specdfa {__version__}: failure-free speculative parallel DFA membership testing

Usage
  specdfa compile PATTERN       Compile a regex (or --grail=FILE) into a Grail+ DFA
  specdfa analyze DFA           Initial state set sizes, I_max and gamma for --r=1..4
  specdfa match DFA INPUT       Test if INPUT is in the language. Exit code 0 accept, 1 reject
  specdfa bench CORPUS_DIR      Time every DFA in a corpus in each mode (CSV)
  specdfa simulate TOPOLOGY DFA INPUT   Match on a simulated cluster (phase report CSV)
  specdfa gen-corpus            Write random DFAs and inputs

DFA is a Grail+ file, or a regular expression if no such file exists.
Run a command without arguments to see its options.

Options
  --conf=FILE                   Use FILE instead of ./specdfa.yaml
  --match.p=8                   Override any config key. See specdfa/specdfa.yaml
  --log.loggers.specdfa.level=DEBUG   Show per-phase timings
'''

import sys
import json
import yaml
from pathlib import Path
from orderedattrdict import AttrDict
from specdfa.config import ChainConfig, PathConfig, app_log, setup_log

paths = AttrDict()              # Paths where configurations are stored
conf = AttrDict()               # Final merged configurations
config_layers = ChainConfig()   # Loads all configurations. init() updates it

paths['source'] = Path(__file__).absolute().parent      # Where specdfa source code is
paths['base'] = Path('.')                               # Where specdfa is run from

# Populate __version__ from release.json
with (paths['source'] / 'release.json').open() as _release_file:
    release = json.load(_release_file, object_pairs_hook=AttrDict)
    __version__ = release.info.version

# Commands that map to specdfa.commands functions
_commands = {
    'compile': 'compile',
    'analyze': 'analyze',
    'match': 'match',
    'bench': 'bench',
    'simulate': 'simulate',
    'gen-corpus': 'gen_corpus',
}


def parse_command_line(commands):
    '''
    Parse command line arguments. For example:

        specdfa cmd1 cmd2 --a=1 2 -b x --c --p.q=4

    returns:

        {"_": ["cmd1", "cmd2"], "a": [1, 2], "b": "x", "c": True, "p": {"q": [4]}}

    Values are parsed as YAML. Arguments with '.' are split into subgroups. For
    example, ``specdfa --match.p 8`` returns ``{"match": {"p": 8}}``.
    '''
    group = '_'
    args = AttrDict({group: []})
    for arg in commands:
        if arg.startswith('-'):
            group, value = arg.lstrip('-'), 'True'
            if '=' in group:
                group, value = group.split('=', 1)
        else:
            value = arg

        value = yaml.safe_load(value)
        base = args
        keys = group.split('.')
        for key in keys[:-1]:
            base = base.setdefault(key, AttrDict())

        # Add the key to the base.
        # If it's already there, make it a list.
        # If it's already a list, append to it.
        if keys[-1] not in base or base[keys[-1]] is True:
            base[keys[-1]] = value
        elif not isinstance(base[keys[-1]], list):
            base[keys[-1]] = [base[keys[-1]], value]
        else:
            base[keys[-1]].append(value)

    return args


def init(**kwargs):
    '''
    Update the configuration layers and re-merge them into ``specdfa.conf``.

    ``specdfa.init(key=val)`` adds ``val`` as a configuration layer named ``key``.
    If ``val`` is a Path, it is loaded as a PathConfig. (If it is a directory, its
    ``specdfa.yaml`` is used.) The package defaults are always the first layer.
    Layers merge in the order they were first added. Logging is set up from ``log:``.
    '''
    if 'source' not in config_layers:
        config_layers['source'] = PathConfig(paths['source'] / 'specdfa.yaml')
    for key, val in kwargs.items():
        if isinstance(val, Path):
            if val.is_dir():
                val = val / 'specdfa.yaml'
            val = PathConfig(val)
        config_layers[key] = val
    conf.clear()
    conf.update(+config_layers)
    setup_log(conf.get('log', AttrDict()))
    return conf


def callback_commandline(commands_args):
    '''
    Find what method should be run based on the command line programs. This
    refactoring allows us to test specdfa.commandline() to see if it processes
    the command line correctly, without actually running the commands.

    Returns a callback method and kwargs for the callback method.
    '''
    # args has all optional command line args as a dict of values / lists.
    # cmd has all positional arguments as a list.
    args = parse_command_line(commands_args)
    cmd = args.pop('_')

    # If --help or -V --version is specified, print a message and end
    if args.get('V') is True or args.get('version') is True:
        return console, {'msg': 'specdfa %s' % __version__}
    if args.get('help') is True or not cmd:
        return console, {'msg': __doc__.strip().format(**globals())}

    # Layers: package defaults, ./specdfa.yaml (or --conf), dotted command line flags
    layers = {'base': AttrDict()}
    if 'conf' in args:
        layers['base'] = Path(args.pop('conf'))
    elif (paths['base'] / 'specdfa.yaml').exists():
        layers['base'] = paths['base']
    layers['cmd'] = AttrDict((k, v) for k, v in args.items() if isinstance(v, dict))
    init(**layers)

    base_command = str(cmd.pop(0)).lower()
    if base_command not in _commands:
        raise NotImplementedError('Unknown specdfa command: %s' % base_command)
    import specdfa.commands
    return getattr(specdfa.commands, _commands[base_command]), {'cmd': cmd, 'args': args}


def commandline(args=None):
    '''
    Run specdfa from the command line. Called via:

    - setup.py console_scripts when running specdfa
    - __main__.py when running python -m specdfa

    Returns the exit code: 0 for accept or success, 1 for reject, 2 for errors.
    '''
    try:
        callback, kwargs = callback_commandline(sys.argv[1:] if args is None else args)
        code = callback(**kwargs)
    except (ValueError, OSError, NotImplementedError, AssertionError) as e:
        app_log.error('%s: %s', type(e).__name__, e)
        app_log.debug('Traceback', exc_info=True)
        return 2
    return 0 if code is None else code


def console(msg):
    '''Write message to console'''
    print(msg)              # noqa
