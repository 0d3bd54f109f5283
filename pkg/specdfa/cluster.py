'''
Simulated cluster with two-tier merging.

Workers are the allocated cores of each node, numbered node by node, so workers on a
node own adjacent chunks. The first worker of a node is its leader. The leader of
node 0 is also the master. Matching is real (so the result is exact). Time is
simulated: each worker matches at its node's capacity, every worker-to-leader
message costs an intra-node delay and every leader-to-master message an inter-node
delay, sampled from the topology's delay distribution.

A topology is YAML::

    nodes:
      - {count: 2, cores: 16, allocated: 15, capacity: 1.0}
    intra: {mean: 2.68, std_pct: 0.14}     # microseconds per message
    inter: {mean: 362, std_pct: 3.6}
    distribution: normal                   # normal | lognormal | fixed
    seed: 0
    compose_us: 0.1                        # cost of one StateMap composition
'''
import io
import math
import numpy as np
import pandas as pd
import yaml
from orderedattrdict import AttrDict
from specdfa.automata import flatten, encode_input
from specdfa.config import app_log, load_yaml
from specdfa.matching import (
    make_outcome, check_work_bound, compose_maps, merge_sequential, run_chunks)
from specdfa.runtime import RunConfig, SimulatedWorker, plan_for, profile_workers, profiling_sample
from specdfa.partition import WorkerProfile

DISTRIBUTIONS = ('normal', 'lognormal', 'fixed')


class TopologyError(ValueError):
    '''Raised for an invalid cluster topology'''
    pass


class Delay(object):
    '''Message latency in microseconds with a mean and standard deviation'''
    def __init__(self, mean=0.0, std=0.0, distribution='normal'):
        if mean < 0 or std < 0:
            raise TopologyError('delay mean and std must be >= 0, not %r, %r' % (mean, std))
        if distribution not in DISTRIBUTIONS:
            raise TopologyError('distribution must be one of %s, not %r' % (
                '/'.join(DISTRIBUTIONS), distribution))
        self.mean, self.std, self.distribution = float(mean), float(std), distribution

    @classmethod
    def from_config(cls, conf, distribution):
        conf = conf or {}
        mean = conf.get('mean', 0.0)
        std = conf.get('std', None)
        if std is None:
            std = mean * conf.get('std_pct', 0.0) / 100
        return cls(mean, std, distribution)

    def sample(self, rng):
        if self.mean == 0 or self.distribution == 'fixed' or self.std == 0:
            return self.mean
        if self.distribution == 'lognormal':
            sigma2 = math.log(1 + (self.std / self.mean) ** 2)
            return float(rng.lognormal(math.log(self.mean) - sigma2 / 2, math.sqrt(sigma2)))
        # Normal, truncated at 0
        return max(float(rng.normal(self.mean, self.std)), 0.0)

    def __repr__(self):
        return 'Delay(%g, %g, %s)' % (self.mean, self.std, self.distribution)


class Node(object):
    def __init__(self, cores, allocated, capacity=1.0):
        self.cores, self.allocated, self.capacity = cores, allocated, capacity


class ClusterTopology(object):
    '''
    Nodes (``cores``, ``allocated`` cores, per-core ``capacity`` in symbols per µs) and
    ``intra`` / ``inter`` node :class:`Delay` objects. ``seed`` makes sampled delays
    reproducible.
    '''
    def __init__(self, nodes, intra=None, inter=None, seed=0, compose_us=0.0):
        self.nodes = list(nodes)
        self.intra = intra or Delay()
        self.inter = inter or Delay()
        self.seed = seed
        self.compose_us = float(compose_us)
        if not self.nodes:
            raise TopologyError('topology has no nodes')
        for index, node in enumerate(self.nodes):
            if node.allocated < 0:
                raise TopologyError('node %d allocates %d cores' % (index, node.allocated))
            if node.allocated > node.cores - 1:
                raise TopologyError('node %d allocates %d of %d cores. Leave 1 unallocated' % (
                    index, node.allocated, node.cores))
            if not node.capacity > 0:
                raise TopologyError('node %d capacity must be > 0, not %r' % (
                    index, node.capacity))
        if self.worker_count < 1:
            raise TopologyError('topology allocates no cores')
        if self.compose_us < 0:
            raise TopologyError('compose_us must be >= 0')

    @classmethod
    def from_config(cls, conf):
        '''Create a topology from a dict (e.g. parsed YAML)'''
        if not isinstance(conf, dict):
            raise TopologyError('topology must be a dict, not %r' % type(conf))
        distribution = conf.get('distribution', 'normal')
        nodes = []
        for spec in conf.get('nodes', []) or []:
            if not isinstance(spec, dict) or 'cores' not in spec:
                raise TopologyError('node needs "cores": %r' % (spec,))
            cores = spec['cores']
            node_args = (cores, spec.get('allocated', cores - 1), spec.get('capacity', 1.0))
            nodes.extend(Node(*node_args) for index in range(spec.get('count', 1)))
        return cls(
            nodes,
            intra=Delay.from_config(conf.get('intra'), distribution),
            inter=Delay.from_config(conf.get('inter'), distribution),
            seed=conf.get('seed', 0),
            compose_us=conf.get('compose_us', 0.0))

    @classmethod
    def load(cls, path):
        '''Load a topology YAML file. Raises TopologyError if it cannot be parsed'''
        with io.open(path, encoding='utf-8') as handle:
            try:
                conf = load_yaml(handle.read())
            except yaml.YAMLError as exc:
                raise TopologyError('%s: %s' % (path, exc))
        return cls.from_config(conf)

    @property
    def worker_count(self):
        return sum(node.allocated for node in self.nodes)

    def groups(self):
        '''List of worker indices per node. Empty nodes are skipped'''
        groups, worker = [], 0
        for node in self.nodes:
            if node.allocated:
                groups.append(list(range(worker, worker + node.allocated)))
                worker += node.allocated
        return groups

    def node_of(self):
        '''Node index of every worker'''
        return [index for index, node in enumerate(self.nodes) for core in range(node.allocated)]

    def capacities(self):
        return [node.capacity for node in self.nodes for core in range(node.allocated)]

    def workers(self):
        return [SimulatedWorker(capacity) for capacity in self.capacities()]


def two_tier_merge(maps, groups, q0, sink=None):
    '''
    Each node's leader composes its adjacent maps. The master folds the leader maps
    from ``q0``. Returns the final state. Equals :func:`merge_sequential` over ``maps``.
    '''
    leaders = []
    for group in groups:
        leader = maps[group[0]]
        for index in group[1:]:
            leader = compose_maps(leader, maps[index], sink)
        leaders.append(leader)
    return merge_sequential(leaders, q0, sink)


def binary_tree_latency(ready, node_of, topology, rng):
    '''
    Finish time (µs) of a binary-tree reduction where worker ``i``'s map is ready at
    ``ready[i]``. Each level pairs neighbours. The right map is sent to the left one's
    worker, with an inter-node delay if they are on different nodes.
    '''
    level = [(time, node_of[index]) for index, time in enumerate(ready)]
    while len(level) > 1:
        paired = []
        for index in range(0, len(level) - 1, 2):
            (left, left_node), (right, right_node) = level[index], level[index + 1]
            delay = topology.intra if left_node == right_node else topology.inter
            arrival = right + delay.sample(rng)
            paired.append((max(left, arrival) + topology.compose_us, left_node))
        if len(level) % 2:
            paired.append(level[-1])
        level = paired
    return level[0][0]


class ClusterReport(object):
    '''
    Simulated timings of a cluster run. ``phases`` is a DataFrame of
    ``phase,worker,node,start_us,end_us``.
    '''
    columns = ['phase', 'worker', 'node', 'start_us', 'end_us']

    def __init__(self, phases, match_us, makespan_us, binary_us=0.0):
        self.phases = pd.DataFrame(phases, columns=self.columns)
        self.match_us = match_us
        self.makespan_us = makespan_us
        self.merge_us = makespan_us - match_us
        self.two_tier_us = self.merge_us
        self.binary_us = binary_us

    @property
    def communication_fraction(self):
        '''Share of the makespan spent after matching, sending and composing maps'''
        return self.merge_us / self.makespan_us if self.makespan_us > 0 else 0.0

    def to_csv(self, path=None):
        return self.phases.to_csv(path, index=False)

    def summary(self):
        return AttrDict(match_us=self.match_us, merge_us=self.merge_us,
                        makespan_us=self.makespan_us, two_tier_us=self.two_tier_us,
                        binary_us=self.binary_us,
                        communication_fraction=self.communication_fraction)


def simulate_cluster(dfa, data, topology, config=None):
    '''
    Match ``data`` on the simulated ``topology``. ``config`` is a RunConfig-like dict
    (mode basic or lookahead). ``p`` is the topology's worker count. Returns
    ``(MatchOutcome, ClusterReport)``.
    '''
    config = RunConfig(config or {})
    config.update(p=topology.worker_count, executor='inline')
    config.validate()
    if config.mode == 'sequential':
        raise ValueError('simulate needs mode basic or lookahead')
    table = flatten(dfa)
    buf = encode_input(data, table, config.foreign)
    if buf.foreign_at is not None:
        return make_outcome(table, table.sink, config.mode), ClusterReport([], 0.0, 0.0)

    workers = topology.workers()
    if config.weights == 'profiled':
        sample = profiling_sample(table, config.profile.min_sample)
        profile = WorkerProfile(profile_workers(
            table, sample, config.profile.reps, workers=workers,
            min_sample=config.profile.min_sample))
    else:
        profile = WorkerProfile.from_spec(config.weights, config.p)
    plan, lookahead = plan_for(dfa, buf.length, config, profile)
    results = run_chunks(table, buf, plan, config.mode, lookahead, None,
                         config.sink_shortcut, config.lanes)
    maps = [result.state_map for result in results]

    rng = np.random.default_rng(topology.seed)
    node_of = topology.node_of()
    phases, match_end = [], []
    for index, (worker, result) in enumerate(zip(workers, results)):
        elapsed = worker.match_time(result.state_map.work + result.reads)
        match_end.append(elapsed)
        phases.append(('match', index, node_of[index], 0.0, elapsed))

    groups = topology.groups()
    leader_ready = []
    for group in groups:
        leader = group[0]
        node = node_of[leader]
        ready = match_end[leader]
        for index in group[1:]:
            arrival = match_end[index] + topology.intra.sample(rng)
            phases.append(('send', index, node, match_end[index], arrival))
            ready = max(ready, arrival)
        compose_end = ready + topology.compose_us * (len(group) - 1)
        phases.append(('compose', leader, node, ready, compose_end))
        leader_ready.append(compose_end)

    master = groups[0][0]
    ready = leader_ready[0]
    for group, leader_end in zip(groups[1:], leader_ready[1:]):
        arrival = leader_end + topology.inter.sample(rng)
        phases.append(('send', group[0], node_of[group[0]], leader_end, arrival))
        ready = max(ready, arrival)
    makespan = ready + topology.compose_us * len(groups)
    phases.append(('master', master, node_of[master], ready, makespan))

    last_state = two_tier_merge(maps, groups, dfa.start, dfa.sink)
    binary = binary_tree_latency(match_end, node_of, topology, rng) + topology.compose_us
    match_us = max(match_end)
    report = ClusterReport(phases, match_us, makespan, binary - match_us)
    outcome = make_outcome(
        table, last_state, config.mode,
        symbols=[result.state_map.work for result in results],
        reads=[result.reads for result in results],
        worker_times=match_end, plan=plan, maps=maps,
        timings=AttrDict(match=match_us / 1e6, merge=report.merge_us / 1e6,
                         total=makespan / 1e6))
    check_work_bound(outcome, plan)
    app_log.debug('simulate: %d nodes, %d workers, makespan %.2fus, comm %.4f',
                  len(groups), len(workers), makespan, report.communication_fraction)
    return outcome, report
