"""
Weighted sub-ID allocation: adjust each weight to a multiple of a common
divisor within a total budget of t, then hand out weight/divisor sub-IDs.
"""
import logging
import math
import random
from dataclasses import dataclass
from functools import reduce

from config import Config
from services.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightVector:
    w: tuple

    def __post_init__(self):
        if not self.w:
            raise ConfigError('weight vector is empty')
        for value in self.w:
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f'weights must be positive integers, got {value!r}')

    @classmethod
    def of(cls, values):
        return values if isinstance(values, cls) else cls(tuple(int(v) for v in values))

    @property
    def n(self):
        return len(self.w)

    @property
    def total(self):
        return sum(self.w)

    @property
    def t(self):
        return (self.total - 1) // 3


@dataclass(frozen=True)
class Allocation:
    d: tuple
    divisor: int
    adjusted: tuple
    t: int

    @property
    def sub_ids(self):
        return sum(self.d)

    def owners(self):
        """Validator index (1-based) of each sub-ID, sub-IDs numbered from 1"""
        return tuple(i + 1 for i, count in enumerate(self.d) for _ in range(count))


def f_gcd_adjust(w, gcd):
    if gcd < 1:
        raise ValueError('divisor must be at least 1')
    adjusted = []
    for value in WeightVector.of(w).w:
        r = value % gcd
        adjusted.append(value - r if 2 * r < gcd else value + gcd - r)
    return tuple(adjusted)


def adjustment(w, adjusted):
    return sum(abs(a - b) for a, b in zip(w, adjusted))


def is_t_bounded(w, adjusted, t):
    w = w.w if isinstance(w, WeightVector) else tuple(w)
    if len(w) != len(adjusted):
        raise ValueError('weight vectors differ in length')
    return adjustment(w, adjusted) <= t


def _feasible(w, gcd):
    return adjustment(w.w, f_gcd_adjust(w, gcd)) <= w.t


def find_divisor(w, scan_window=None):
    """
    Largest feasible divisor found by binary search over [1, max w], a linear
    scan just above the result, and the always-feasible floor(2t/n).
    """
    w = WeightVector.of(w)
    scan_window = Config.GCD_SCAN_WINDOW if scan_window is None else scan_window
    lo, hi = 1, max(w.w)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if _feasible(w, mid):
            lo = mid
        else:
            hi = mid - 1
    best = lo
    for gcd in range(lo + 1, min(lo + scan_window, max(w.w)) + 1):
        if _feasible(w, gcd):
            best = gcd
    witness = (2 * w.t) // w.n
    if witness > best and _feasible(w, witness):
        best = witness
    return best


def allocate_sub_ids(w):
    w = WeightVector.of(w)
    divisor = find_divisor(w)
    adjusted = f_gcd_adjust(w, divisor)
    d = tuple(a // divisor for a in adjusted)
    logger.info(f'allocated {sum(d)} sub-IDs to {w.n} validators (divisor {divisor}, t={w.t})')
    return Allocation(d=d, divisor=divisor, adjusted=adjusted, t=w.t)


def size_bound(w):
    """(4t+1) / floor(2t/n), meaningful when n <= 2t"""
    w = WeightVector.of(w)
    witness = (2 * w.t) // w.n
    if witness == 0:
        return None
    return (4 * w.t + 1) / witness


def _subset_sums(values):
    sums = [0] * (1 << len(values))
    for mask in range(1, len(sums)):
        low = mask & -mask
        sums[mask] = sums[mask ^ low] + values[low.bit_length() - 1]
    return sums


def check_qualified(w, d, max_exhaustive=None, samples=20000, rng=None):
    """
    For every split (A, B) with w(A) > 2 w(B), require d(A) > d(B).
    Exhaustive for up to `max_exhaustive` validators, sampled beyond.
    """
    w = WeightVector.of(w).w
    d = tuple(d)
    if len(w) != len(d):
        raise ValueError('weights and allocation differ in length')
    limit = Config.EXHAUSTIVE_PARTITION_LIMIT if max_exhaustive is None else max_exhaustive
    total_w, total_d = sum(w), sum(d)
    if len(w) <= limit:
        w_sums, d_sums = _subset_sums(w), _subset_sums(d)
        for mask in range(len(w_sums)):
            in_a_w = w_sums[mask]
            if in_a_w > 2 * (total_w - in_a_w) and d_sums[mask] <= total_d - d_sums[mask]:
                return False
        return True
    rng = rng or random.Random(0)
    for _ in range(samples):
        members = [rng.random() < 0.5 for _ in w]
        in_a_w = sum(v for v, m in zip(w, members) if m)
        in_a_d = sum(v for v, m in zip(d, members) if m)
        if in_a_w > 2 * (total_w - in_a_w) and in_a_d <= total_d - in_a_d:
            return False
    return True


def perfect_allocation_size(w):
    """Sub-IDs needed when every weight is divided by the exact gcd"""
    w = WeightVector.of(w).w
    return sum(w) // reduce(math.gcd, w)


def read_weights(path):
    """One decimal integer per line; blank lines and '#' comments are skipped"""
    values = []
    with open(path, 'r') as f:
        for lineno, line in enumerate(f, 1):
            text = line.split('#', 1)[0].strip()
            if not text:
                continue
            try:
                values.append(int(text))
            except ValueError:
                raise ConfigError(f'{path}:{lineno}: not an integer weight: {text!r}') from None
    return WeightVector.of(values)


def format_allocation(w, allocation):
    w = WeightVector.of(w).w
    lines = ['index\tw\tw_adj\td']
    for i, (value, adj, count) in enumerate(zip(w, allocation.adjusted, allocation.d), 1):
        lines.append(f'{i}\t{value}\t{adj}\t{count}')
    return '\n'.join(lines) + '\n'
