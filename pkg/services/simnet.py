"""
Deterministic synchronous-round simulator.

All randomness derives from the configured seed; cross-node messages are
buffered and released at round barriers in (round, sender) order.
"""
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Optional

from config import Config
from services.errors import ConfigError

logger = logging.getLogger(__name__)

SCENARIOS = ('dkg', 'broadcast', 'checkpoint')
BROADCAST_MODES = ('extended', 'pbb')
SENDER_POLICIES = ('honest', 'partial', 'withhold')


@dataclass
class SimConfig:
    scenario: str = 'dkg'
    n: int = Config.SIM_N
    t: Optional[int] = None
    seed: int = Config.SIM_SEED
    adversary: str = 'honest'
    forced_sortition: bool = Config.SIM_FORCED_SORTITION
    s_expected: Optional[int] = None
    c_expected: Optional[int] = None
    ratio: Optional[Fraction] = None
    ratio_hm: Optional[Fraction] = None
    auto_ratio: bool = False
    failure_bound: float = Config.SIM_FAILURE_BOUND
    broadcast_mode: str = Config.SIM_BROADCAST_MODE
    pbb_backend: str = Config.PBB_BACKEND
    pbb_url: str = Config.PBB_DATABASE_URL
    latency_ms: float = Config.SIM_LATENCY_MS
    include_timings: bool = False
    # broadcast scenario
    senders: int = 4
    message_len: int = 1024
    sender_policy: str = 'honest'
    # checkpoint scenario
    epochs: int = 3
    weights: Optional[tuple] = None
    long_range_attack: bool = True

    def __post_init__(self):
        if self.t is None:
            self.t = Config.default_t(self.n)
        if self.weights is not None:
            self.weights = tuple(int(w) for w in self.weights)
        for name in ('ratio', 'ratio_hm'):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, Fraction(value))
        self.validate()

    def validate(self):
        from services.adversary import POLICY_NAMES

        if self.scenario not in SCENARIOS:
            raise ConfigError(f'unknown scenario {self.scenario!r}')
        Config.validate(self.n, self.t)
        if self.adversary not in POLICY_NAMES:
            raise ConfigError(f'unknown adversary policy {self.adversary!r}')
        if self.s_expected is not None and self.scenario == 'dkg' and self.s_expected > self.n:
            raise ConfigError(f's_expected={self.s_expected} exceeds n={self.n}')
        if any(size is not None and size < 1 for size in (self.s_expected, self.c_expected)):
            raise ConfigError('committee sizes must be positive')
        if self.broadcast_mode not in BROADCAST_MODES:
            raise ConfigError(f'unknown broadcast mode {self.broadcast_mode!r}')
        if self.sender_policy not in SENDER_POLICIES:
            raise ConfigError(f'unknown sender policy {self.sender_policy!r}')
        if self.scenario == 'broadcast' and not 1 <= self.senders <= self.n:
            raise ConfigError(f'need 1 <= senders <= n, got {self.senders}')
        if self.message_len < 0 or self.epochs < 1:
            raise ConfigError('message length and epoch count must be positive')
        for name in ('ratio', 'ratio_hm'):
            value = getattr(self, name)
            if value is not None and not 0 <= value <= 1:
                raise ConfigError(f'{name} must lie in [0, 1]')

    def deal_size(self, n=None):
        """Expected any-trust committee size, capped at the population"""
        n = self.n if n is None else n
        return min(Config.SIM_S_EXPECTED if self.s_expected is None else self.s_expected, n)

    def check_size(self, n=None):
        n = self.n if n is None else n
        return min(Config.SIM_C_EXPECTED if self.c_expected is None else self.c_expected, n)

    def with_overrides(self, **overrides):
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if 'n' in overrides and 't' not in overrides:
            overrides['t'] = None
        return replace(self, **overrides)


_INT_FIELDS = ('n', 't', 'seed', 's_expected', 'c_expected', 'senders', 'message_len', 'epochs')
_FLOAT_FIELDS = ('failure_bound', 'latency_ms')
_BOOL_FIELDS = ('forced_sortition', 'auto_ratio', 'include_timings', 'long_range_attack')
_FRACTION_FIELDS = ('ratio', 'ratio_hm')


def _coerce(name, text):
    text = text.strip()
    try:
        if name in _INT_FIELDS:
            return int(text)
        if name in _FLOAT_FIELDS:
            return float(text)
        if name in _BOOL_FIELDS:
            if text.lower() in ('1', 'true', 'yes', 'on'):
                return True
            if text.lower() in ('0', 'false', 'no', 'off'):
                return False
            raise ValueError(text)
        if name in _FRACTION_FIELDS:
            return Fraction(text)
        if name == 'weights':
            return tuple(int(part) for part in text.replace(',', ' ').split())
        return text
    except ValueError:
        raise ConfigError(f'bad value for {name}: {text!r}') from None


def parse_sim_config(text, source='<config>'):
    """Flat key=value lines into SimConfig keyword arguments"""
    known = {f.name for f in fields(SimConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'{source}:{lineno}: expected key=value')
        key, raw = (part.strip() for part in line.split('=', 1))
        key = key.replace('-', '_')
        if key not in known:
            raise ConfigError(f'{source}:{lineno}: unknown setting {key!r}')
        values[key] = _coerce(key, raw)
    return values


def load_sim_config(path, **overrides):
    with open(path, 'r') as f:
        values = parse_sim_config(f.read(), source=path)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig(**values)


@dataclass(frozen=True)
class TraceRecord:
    round: int
    sender: int
    to: object
    size: int
    kind: str

    def to_dict(self):
        return {'round': self.round, 'from': self.sender, 'to': self.to, 'bytes': self.size, 'type': self.kind}


@dataclass
class Network:
    """Point-to-point delivery held back until the next barrier"""
    metrics: object
    trace: list = field(default_factory=list)
    latency_ms: float = 0.0
    _pending: list = field(default_factory=list)
    _inboxes: dict = field(default_factory=lambda: defaultdict(list))

    def multicast(self, round_no, sender, payload, recipients, kind):
        for recipient in recipients:
            self._pending.append((round_no, sender, recipient, kind, payload))
            self.trace.append(TraceRecord(round_no, sender, recipient, len(payload), kind))
        self.metrics.add_bytes('multicast', len(payload) * len(recipients), messages=len(recipients))

    def note_post(self, round_no, sender, size, kind):
        self.trace.append(TraceRecord(round_no, sender, 'pbb', size, kind))

    def barrier(self):
        if self.latency_ms:
            time.sleep(self.latency_ms / 1000.0)
        for round_no, sender, recipient, kind, payload in sorted(self._pending, key=lambda p: (p[0], p[1])):
            self._inboxes[(recipient, kind)].append((sender, payload))
        self._pending = []

    def take(self, recipient, kind):
        return self._inboxes.pop((recipient, kind), [])


def run(config, strict=True):
    """Execute one scenario and return its Report; failed verdicts raise InvariantViolation"""
    from services import scenarios

    drivers = {
        'dkg': scenarios.run_dkg_scenario,
        'broadcast': scenarios.run_broadcast_scenario,
        'checkpoint': scenarios.run_checkpoint_scenario,
    }
    logger.info(f'running {config.scenario} n={config.n} t={config.t} seed={config.seed} adversary={config.adversary}')
    report = drivers[config.scenario](config)
    if strict:
        report.raise_on_failure()
    return report


def report_broadcast_bytes(report):
    from services.reporting import broadcast_bytes
    return broadcast_bytes(report)
