"""
Committee electors: who holds a credential for a sortition event.

RatioElector is the protocol's VRF sortition. ForcedElector is a
simulation-only mode that fixes each committee up front (exact size,
trust assumption guaranteed) while still attaching a real VRF proof.
"""
import logging
from fractions import Fraction

from services.group_crypto import sortition, sortition_verify, vrf_evaluate, vrf_input, vrf_verify
from services.metrics import phase

logger = logging.getLogger(__name__)

EVENTS = ('deal', 'agree', 'check')


class RatioElector:
    """Selection iff the VRF output falls below the event's ratio"""

    forced = False

    def __init__(self, ratios):
        unknown = set(ratios) - set(EVENTS)
        if unknown:
            raise ValueError(f'unknown sortition events {sorted(unknown)}')
        self.ratios = {event: Fraction(ratio) for event, ratio in ratios.items()}

    def ratio(self, event):
        try:
            return self.ratios[event]
        except KeyError:
            raise ValueError(f'no sortition ratio for event {event!r}') from None

    def select(self, keys, index, rand, event):
        with phase('sortition'):
            return sortition(keys, rand, event, self.ratio(event))

    def verify(self, index, rvk, rand, event, cred):
        with phase('sortition'):
            return sortition_verify(rvk, rand, self.ratio(event), event, cred)


class ForcedElector:
    """Seed-chosen committees; credentials are genuine VRF evaluations"""

    forced = True

    def __init__(self, committees):
        self.committees = {event: frozenset(members) for event, members in committees.items()}

    def members(self, event):
        return self.committees.get(event, frozenset())

    def select(self, keys, index, rand, event):
        if index not in self.members(event):
            return None
        with phase('sortition'):
            return vrf_evaluate(keys.vrf, vrf_input(rand, event))

    def verify(self, index, rvk, rand, event, cred):
        if cred is None or index not in self.members(event):
            return False
        with phase('sortition'):
            return vrf_verify(rvk, vrf_input(rand, event), cred)


def choose_committee(rng, n, size, corrupted=frozenset(), pinned=frozenset(), honest_majority=False):
    """
    Pick `size` members of [1, n] containing `pinned`, with at least one
    honest member (or an honest majority when requested).
    """
    size = min(size, n)
    pinned = set(pinned)
    if len(pinned) > size:
        raise ValueError(f'{len(pinned)} pinned members exceed committee size {size}')
    rest = [i for i in range(1, n + 1) if i not in pinned]
    members = pinned | set(rng.sample(rest, size - len(pinned)))
    honest_pool = [i for i in range(1, n + 1) if i not in corrupted and i not in members]

    def bad(ms):
        bad_count = len([i for i in ms if i in corrupted])
        if honest_majority:
            return bad_count * 2 >= len(ms)
        return bad_count == len(ms)

    while bad(members):
        swappable = sorted(i for i in members if i in corrupted and i not in pinned)
        if not swappable or not honest_pool:
            raise ValueError('cannot satisfy the committee trust assumption')
        members.remove(swappable[0])
        members.add(honest_pool.pop(rng.randrange(len(honest_pool))))
    logger.debug(f'forced committee of {len(members)}: {sorted(members)}')
    return frozenset(members)
