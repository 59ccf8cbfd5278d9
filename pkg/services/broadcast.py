"""
Extended broadcast channel: a keyword-indexed public bulletin board (PBB)
standing in for a blockchain, a content-addressed data dispersal network
(DDN), and the three-round digest-post / committee-vote / register
protocol that moves large payloads off the board.
"""
import hashlib
import logging
import threading
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

from models import PbbRecord, init_db
from services.errors import ConfigError, DecodingError, ProtocolFailure
from services.group_crypto import AUTH_SIG_BYTES, VrfCredential, auth_verify
from utils import pack_bits, u32, unpack_bits

logger = logging.getLogger(__name__)

BLOCK_ID_BYTES = 32
DIGEST_POST_BYTES = 4 + BLOCK_ID_BYTES + AUTH_SIG_BYTES


def block_id(block):
    return hashlib.sha256(block).digest()


@dataclass(frozen=True)
class PbbEntry:
    counter: int
    keyword: bytes
    value: bytes


class Pbb(ABC):
    """Append-only, totally ordered board; counters start at 1"""

    def __init__(self, metrics=None, delay=None):
        self.metrics = metrics
        self.delay = delay
        self._lock = threading.Lock()

    def post(self, kw, v):
        if self.delay is not None:
            self.delay(kw, v)
        with self._lock:
            counter = self._append(bytes(kw), bytes(v))
        if self.metrics is not None:
            self.metrics.add_bytes('pbb', len(kw) + len(v))
        return counter

    def retrieve(self, t_start, t_end, kw):
        """(value, counter) pairs with keyword kw and t_start <= counter <= t_end"""
        if t_start > t_end:
            return []
        with self._lock:
            return [(e.value, e.counter) for e in self._window(t_start, t_end, bytes(kw))]

    def get_counter(self):
        with self._lock:
            return self._counter()

    @abstractmethod
    def _append(self, kw, v):
        ...

    @abstractmethod
    def _window(self, t_start, t_end, kw):
        ...

    @abstractmethod
    def _counter(self):
        ...

    @abstractmethod
    def entries(self):
        ...

    @property
    def stored_bytes(self):
        return sum(len(e.keyword) + len(e.value) for e in self.entries())


class MemoryPbb(Pbb):
    def __init__(self, metrics=None, delay=None):
        super().__init__(metrics, delay)
        self._entries = []

    def _append(self, kw, v):
        entry = PbbEntry(len(self._entries) + 1, kw, v)
        self._entries.append(entry)
        return entry.counter

    def _window(self, t_start, t_end, kw):
        lo, hi = max(t_start, 1), min(t_end, len(self._entries))
        return [e for e in self._entries[lo - 1:hi] if e.keyword == kw]

    def _counter(self):
        return len(self._entries)

    def entries(self):
        with self._lock:
            return list(self._entries)


class SqlPbb(Pbb):
    """Board persisted through SQLAlchemy; the default URL is an in-memory SQLite database"""

    def __init__(self, url='sqlite://', metrics=None, delay=None, session_factory=None):
        super().__init__(metrics, delay)
        self.Session = session_factory or init_db(url)

    def _append(self, kw, v):
        with self.Session.begin() as session:
            counter = PbbRecord.max_counter(session) + 1
            session.add(PbbRecord(counter=counter, keyword=kw, value=v))
        return counter

    def _window(self, t_start, t_end, kw):
        with self.Session() as session:
            return [PbbEntry(r.counter, r.keyword, r.value) for r in PbbRecord.window(session, t_start, t_end, kw)]

    def _counter(self):
        with self.Session() as session:
            return PbbRecord.max_counter(session)

    def entries(self):
        with self._lock, self.Session() as session:
            records = session.query(PbbRecord).order_by(PbbRecord.counter).all()
            return [PbbEntry(r.counter, r.keyword, r.value) for r in records]


def make_pbb(backend='memory', url='sqlite://', metrics=None):
    if backend == 'memory':
        return MemoryPbb(metrics=metrics)
    if backend == 'sql':
        return SqlPbb(url, metrics=metrics)
    raise ConfigError(f'unknown PBB backend {backend!r}')


class Ddn:
    """Content-addressed provisioning; the simulator decides who is available"""

    def __init__(self, metrics=None, is_available=None):
        self.metrics = metrics
        self.is_available = is_available or (lambda nid: True)
        self.registry = defaultdict(list)
        self._held = defaultdict(dict)

    def register(self, nid, bid, block):
        if block_id(block) != bid:
            raise ValueError(f'node {nid} does not hold the block it registers')
        if nid not in self.registry[bid]:
            self.registry[bid].append(nid)
        self._held[nid][bid] = bytes(block)

    def providers(self, bid):
        return list(self.registry.get(bid, ()))

    def retrieve(self, bid) -> Optional[bytes]:
        for nid in self.registry.get(bid, ()):
            if not self.is_available(nid):
                continue
            block = self._held[nid].get(bid)
            if block is not None and block_id(block) == bid:
                if self.metrics is not None:
                    self.metrics.add_bytes('ddn', len(block))
                return block
        return None


@dataclass
class BroadcastSession:
    """
    One instance of the extended channel. The round checkpoints t1 and t2
    are taken at the round barriers, so every receiver reads the same
    PBB windows.
    """
    sid: bytes
    n: int
    rand: bytes
    roster: tuple
    elector: object
    t0: int = 0
    t1: Optional[int] = None
    t2: Optional[int] = None

    @classmethod
    def open(cls, pbb, sid, n, rand, roster, elector):
        return cls(sid, n, rand, tuple(roster), elector, t0=pbb.get_counter())

    @property
    def send_kw(self):
        return self.sid + b'send'

    @property
    def check_kw(self):
        return self.sid + b'check'

    def close_send_round(self, pbb):
        self.t1 = pbb.get_counter()

    def close_vote_round(self, pbb):
        self.t2 = pbb.get_counter()

    def posted_digests(self, pbb):
        """Block id per sender from the round-1 window; a sender's first authentic post counts"""
        if self.t1 is None:
            raise ValueError('round 1 of the broadcast session is still open')
        digests = {}
        for value, counter in pbb.retrieve(self.t0 + 1, self.t1, self.send_kw):
            opened = open_post(self.send_kw, value, self.roster)
            if opened is None:
                logger.warning(f'digest post at counter {counter} is not signed by its sender')
                continue
            sender, bid = opened
            if len(bid) == BLOCK_ID_BYTES and sender not in digests:
                digests[sender] = bid
        return dict(sorted(digests.items()))


def signed_post(kw, sender, auth, body):
    """Board value u32(sender) ‖ body ‖ signature over the keyword and both"""
    value = u32(sender) + body
    return value + auth.sign(kw + value)


def open_post(kw, value, roster):
    """(sender, body) of a post signed by the roster member it names, else None"""
    if len(value) < 4 + AUTH_SIG_BYTES:
        return None
    signed, sig = value[:-AUTH_SIG_BYTES], value[-AUTH_SIG_BYTES:]
    sender = int.from_bytes(signed[:4], 'big')
    if not 1 <= sender <= len(roster):
        return None
    if not auth_verify(roster[sender - 1].auth_vk, sig, kw + signed):
        return None
    return sender, signed[4:]


@dataclass
class ReceiverState:
    index: int
    keys: object
    received: dict = field(default_factory=dict)
    digests: dict = field(default_factory=dict)
    valid: dict = field(default_factory=dict)
    final: dict = field(default_factory=dict)


def ebc_send(session, pbb, sender, keys, v, multicast):
    """Post the signed block id on the board, hand the block to `multicast(sender, v)`"""
    bid = block_id(v)
    pbb.post(session.send_kw, signed_post(session.send_kw, sender, keys.auth, bid))
    multicast(sender, v)
    return bid


def encode_vote(session, voter, keys, cred, flags):
    return signed_post(session.check_kw, voter, keys.auth, cred.to_bytes() + pack_bits(flags))


def decode_vote(body, sender_count):
    """(credential, flags) from the body of an opened vote"""
    if len(body) < VrfCredential.SIZE:
        raise DecodingError('vote too short')
    cred = VrfCredential.from_bytes(body[:VrfCredential.SIZE])
    return cred, unpack_bits(body[VrfCredential.SIZE:], sender_count)


def ebc_vote(session, pbb, receiver, received):
    """Check received blocks against posted ids; vote on the board if in the check committee"""
    receiver.received = {j: v for j, v in received.items() if v is not None}
    receiver.digests = session.posted_digests(pbb)
    receiver.valid = {j: j in receiver.received and block_id(receiver.received[j]) == bid
                      for j, bid in receiver.digests.items()}
    cred = session.elector.select(receiver.keys, receiver.index, session.rand, 'check')
    if cred is None:
        return None
    vote = encode_vote(session, receiver.index, receiver.keys, cred, [receiver.valid[j] for j in receiver.digests])
    pbb.post(session.check_kw, vote)
    return vote


def tally_votes(session, pbb, senders):
    """Per-sender count of valid marks and the number of counted voters"""
    if session.t2 is None:
        raise ValueError('round 2 of the broadcast session is still open')
    counted = set()
    tally = dict.fromkeys(senders, 0)
    for value, counter in pbb.retrieve(session.t1 + 1, session.t2, session.check_kw):
        opened = open_post(session.check_kw, value, session.roster)
        if opened is None:
            logger.warning(f'vote at counter {counter} is not signed by its voter')
            continue
        voter, body = opened
        if voter in counted:
            continue
        try:
            cred, flags = decode_vote(body, len(senders))
        except DecodingError:
            continue
        if not session.elector.verify(voter, session.roster[voter - 1].rvk, session.rand, 'check', cred):
            logger.warning(f'vote at counter {counter} from {voter} has no check credential')
            continue
        counted.add(voter)
        for j, flag in zip(senders, flags):
            tally[j] += int(flag)
    return tally, len(counted)


def ebc_finalize(session, pbb, receiver, ddn):
    senders = list(receiver.digests)
    tally, voters = tally_votes(session, pbb, senders)
    threshold = voters // 2 + 1
    receiver.final = {j: voters > 0 and tally[j] >= threshold for j in senders}
    for j in senders:
        if receiver.final[j] and receiver.valid[j]:
            ddn.register(receiver.index, receiver.digests[j], receiver.received[j])
    return dict(receiver.final)


def ebc_output(session, receiver, ddn):
    outputs = {}
    for j, bid in receiver.digests.items():
        if not receiver.final.get(j):
            outputs[j] = None
        elif receiver.valid.get(j):
            outputs[j] = receiver.received[j]
        else:
            block = ddn.retrieve(bid)
            if block is None:
                logger.error(f'receiver {receiver.index}: block of sender {j} unavailable on the DDN')
                raise ProtocolFailure(f'DDN retrieval failed for sender {j}')
            outputs[j] = block
    return outputs
