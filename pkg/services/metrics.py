"""
Cost instrumentation: group-exponentiation counters keyed by (node, phase),
per-channel byte counters and per-phase wall-clock time.
"""
import functools
import time
from collections import OrderedDict, defaultdict
from contextlib import contextmanager
from contextvars import ContextVar

# Phases left out of the per-node figure comparable to the DKG cost table.
# What stays in, per node in the good case:
#   deal (dealers only): n+1 commitments, 1 + n ElGamal exponentiations
#   verify, per accepted deal: n+1 for the low-degree test, one decryption,
#   one share-against-commitment check
# i.e. s(n+3) + 2n + 2. VRF work is charged to 'sortition' and is not part of it.
EXCLUDED_PHASES = ('sortition', 'audit')
CHANNELS = ('broadcast', 'pbb', 'multicast', 'ddn')

_active_scope = ContextVar('exp_scope', default=None)
_active_tally = ContextVar('exp_tally', default=None)


def count_exp(k=1):
    """Record k group exponentiations against the active (node, phase) scope"""
    tally = _active_tally.get()
    if tally is not None:
        tally[0] += k
    scope = _active_scope.get()
    if scope is not None:
        metrics, node, phase = scope
        metrics.exp[(node, phase)] += k


def replay_exps(maxsize=1 << 15):
    """
    Memoize a pure verifier on its arguments. A hit charges the active scope
    with the exponentiations the first evaluation counted.
    """
    def decorate(fn):
        cache = OrderedDict()

        @functools.wraps(fn)
        def wrapper(*args):
            try:
                hit = cache.get(args)
            except TypeError:
                return fn(*args)
            if hit is not None:
                cache.move_to_end(args)
                result, exps = hit
                count_exp(exps)
                return result
            tally = [0]
            token = _active_tally.set(tally)
            try:
                result = fn(*args)
            finally:
                _active_tally.reset(token)
            outer = _active_tally.get()
            if outer is not None:
                outer[0] += tally[0]
            cache[args] = (result, tally[0])
            if len(cache) > maxsize:
                cache.popitem(last=False)
            return result

        wrapper.cache_clear = cache.clear
        return wrapper
    return decorate


@contextmanager
def phase(name):
    """Re-key the active scope to another phase for the enclosed block"""
    scope = _active_scope.get()
    if scope is None:
        yield
        return
    token = _active_scope.set((scope[0], scope[1], name))
    try:
        yield
    finally:
        _active_scope.reset(token)


class Metrics:
    def __init__(self):
        self.exp = defaultdict(int)
        self.channel_bytes = defaultdict(int)
        self.channel_messages = defaultdict(int)
        self.phase_seconds = defaultdict(float)

    @contextmanager
    def scope(self, node, phase_name):
        token = _active_scope.set((self, node, phase_name))
        started = time.perf_counter()
        try:
            yield
        finally:
            self.phase_seconds[phase_name] += time.perf_counter() - started
            _active_scope.reset(token)

    def add_bytes(self, channel, size, messages=1):
        if channel not in CHANNELS:
            raise ValueError(f'unknown channel {channel}')
        self.channel_bytes[channel] += size
        self.channel_messages[channel] += messages

    def node_exp(self, node, exclude=EXCLUDED_PHASES):
        return sum(count for (who, ph), count in self.exp.items() if who == node and ph not in exclude)

    def max_node_exp(self, nodes, exclude=EXCLUDED_PHASES):
        return max((self.node_exp(node, exclude) for node in nodes), default=0)

    def phase_totals(self):
        totals = defaultdict(int)
        for (_, ph), count in self.exp.items():
            totals[ph] += count
        return dict(sorted(totals.items()))

    def __repr__(self):
        return f'<Metrics exp={sum(self.exp.values())} bytes={dict(self.channel_bytes)}>'
