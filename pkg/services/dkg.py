"""
Any-Trust DKG node logic.

Only members of a sortition-sampled dealer committee share a secret; every
node verifies the agreed deals, complains verifiably about bad shares, and
a second committee aggregates complaints into the disqualified set.
"""
import functools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from services.committee import RatioElector
from services.errors import ConfigError, DecodingError, ProtocolFailure
from services.group_crypto import (
    FS_SIG_BYTES, DecryptionProof, GroupElement, MreCiphertext, Scalar, VrfCredential,
    fs_sign, fs_update, fs_verify, mre_decrypt_block, mre_encrypt, prove_decryption,
    verify_decryption,
)
from services.metrics import phase
from services.sharing import (
    EvalCommitment, check_low_degree, commit_evals, dual_code_vector, sample_polynomial,
)
from utils import ByteReader, u32, validate_index

logger = logging.getLogger(__name__)

SESSION_ID_BYTES = 32
HEADER_BYTES = SESSION_ID_BYTES + 1 + 4

# Round byte carried in each signed payload
ROUND_DEAL = 1
ROUND_COMPLAIN = 2
ROUND_AGREE = 3
# Forward-secure key index used for each signed message kind
KEY_DEAL = 1
KEY_COMPLAINTS = 2


@dataclass(frozen=True)
class RosterEntry:
    ek: GroupElement
    rvk: GroupElement
    sig_vk: tuple
    auth_vk: bytes


@dataclass
class SessionParams:
    n: int
    t: int
    rand: bytes
    session_id: bytes
    roster: tuple
    ratio: Fraction = Fraction(1)
    elector: object = None

    def __post_init__(self):
        if self.t < 0 or self.n < 2 * self.t + 1:
            raise ConfigError(f'need n >= 2t+1, got n={self.n} t={self.t}')
        if len(self.roster) != self.n:
            raise ConfigError(f'roster has {len(self.roster)} entries for n={self.n}')
        if len(self.session_id) != SESSION_ID_BYTES:
            raise ConfigError('session id must be 32 bytes')
        self.roster = tuple(self.roster)
        if self.elector is None:
            self.elector = RatioElector({'deal': self.ratio, 'agree': self.ratio})

    def entry(self, index):
        return self.roster[validate_index(index, self.n, 'participant') - 1]

    @property
    def eks(self):
        return [entry.ek for entry in self.roster]


def _header(session_id, round_byte, sender):
    return session_id + bytes([round_byte]) + u32(sender)


def peek_header(data):
    """(session_id, round byte, sender) of a signed message, or None if too short"""
    if len(data) < HEADER_BYTES + FS_SIG_BYTES:
        return None
    return data[:SESSION_ID_BYTES], data[SESSION_ID_BYTES], int.from_bytes(data[SESSION_ID_BYTES + 1:HEADER_BYTES], 'big')


@dataclass(frozen=True)
class DealTranscript:
    session_id: bytes
    dealer: int
    cred: VrfCredential
    cm: EvalCommitment
    ct: MreCiphertext
    sig: bytes = b''

    def signed_bytes(self):
        return (_header(self.session_id, ROUND_DEAL, self.dealer) + self.cred.to_bytes()
                + self.cm.to_bytes() + self.ct.to_bytes())

    def to_bytes(self):
        return self.signed_bytes() + self.sig

    @classmethod
    def from_bytes(cls, data):
        reader = ByteReader(data)
        session_id = reader.read(SESSION_ID_BYTES)
        if reader.read_u8() != ROUND_DEAL:
            raise DecodingError('not a deal message')
        dealer = reader.read_u32()
        cred = VrfCredential.from_bytes(reader.read(VrfCredential.SIZE))
        cm = EvalCommitment.from_reader(reader)
        if len(cm) < 2:
            raise DecodingError('deal commits to fewer than two evaluations')
        ct = MreCiphertext.from_reader(reader, len(cm) - 1)
        sig = reader.read(FS_SIG_BYTES)
        reader.expect_end()
        return cls(session_id, dealer, cred, cm, ct, sig)

    def __repr__(self):
        return f'<DealTranscript dealer={self.dealer} n={self.ct.n}>'


@dataclass(frozen=True)
class Complaint:
    dealer: int
    complainer: int
    proof: DecryptionProof

    def to_bytes(self):
        return u32(self.dealer) + u32(self.complainer) + self.proof.to_bytes()

    @classmethod
    def from_reader(cls, reader):
        dealer = reader.read_u32()
        complainer = reader.read_u32()
        return cls(dealer, complainer, DecryptionProof.from_reader(reader))


def _complaints_bytes(complaints):
    return u32(len(complaints)) + b''.join(c.to_bytes() for c in complaints)


def _complaints_from_reader(reader):
    count = reader.read_u32()
    if count * (8 + DecryptionProof.SIZE) > reader.remaining:
        raise DecodingError(f'complaint count {count} exceeds the message')
    return tuple(Complaint.from_reader(reader) for _ in range(count))


@dataclass(frozen=True)
class ComplaintMulticast:
    """Round-2 point-to-point complaints of one node"""
    session_id: bytes
    sender: int
    complaints: tuple
    sig: bytes = b''

    def signed_bytes(self):
        return _header(self.session_id, ROUND_COMPLAIN, self.sender) + _complaints_bytes(self.complaints)

    def to_bytes(self):
        return self.signed_bytes() + self.sig

    @classmethod
    def from_bytes(cls, data):
        reader = ByteReader(data)
        session_id = reader.read(SESSION_ID_BYTES)
        if reader.read_u8() != ROUND_COMPLAIN:
            raise DecodingError('not a complaint multicast')
        sender = reader.read_u32()
        complaints = _complaints_from_reader(reader)
        sig = reader.read(FS_SIG_BYTES)
        reader.expect_end()
        return cls(session_id, sender, complaints, sig)


@dataclass(frozen=True)
class ComplaintList:
    """Round-3 broadcast of an agree-committee member"""
    session_id: bytes
    sender: int
    cred: VrfCredential
    complaints: tuple
    sig: bytes = b''

    def signed_bytes(self):
        return (_header(self.session_id, ROUND_AGREE, self.sender) + self.cred.to_bytes()
                + _complaints_bytes(self.complaints))

    def to_bytes(self):
        return self.signed_bytes() + self.sig

    @classmethod
    def from_bytes(cls, data):
        reader = ByteReader(data)
        session_id = reader.read(SESSION_ID_BYTES)
        if reader.read_u8() != ROUND_AGREE:
            raise DecodingError('not a complaint list')
        sender = reader.read_u32()
        cred = VrfCredential.from_bytes(reader.read(VrfCredential.SIZE))
        complaints = _complaints_from_reader(reader)
        sig = reader.read(FS_SIG_BYTES)
        reader.expect_end()
        return cls(session_id, sender, cred, complaints, sig)


@dataclass(frozen=True)
class DkgOutput:
    pk: GroupElement
    pk_shares: tuple
    sk_share: Scalar
    qual: frozenset
    index: int
    disqualified: frozenset = frozenset()

    def public_view(self):
        """Everything honest nodes must agree on, as bytes"""
        return (self.pk.to_bytes(), tuple(p.to_bytes() for p in self.pk_shares), tuple(sorted(self.qual)))

    def pk_share(self, index):
        return self.pk_shares[index - 1]

    def __repr__(self):
        return f'<DkgOutput node={self.index} qual={sorted(self.qual)} pk={self.pk.to_bytes().hex()[:16]}>'


@dataclass
class NodeState:
    params: SessionParams
    index: int
    keys: object
    rng: object = None
    round: int = 1
    deals: dict = field(default_factory=dict)
    d1: set = field(default_factory=set)
    d2: dict = field(default_factory=dict)
    d3: set = field(default_factory=set)
    candidates: dict = field(default_factory=dict)
    perp: object = None
    _dealing: object = field(default=None, repr=False)

    @property
    def n(self):
        return self.params.n

    def erasure_audit(self):
        """Names of secret material that should be gone but is still held"""
        leftovers = []
        if self._dealing is not None:
            leftovers.append('dealing polynomial and shares')
        if self.round > 1 and self.keys.sig.has_key(KEY_DEAL):
            leftovers.append('round-1 signing key')
        if self.round > 3 and self.keys.sig.has_key(KEY_COMPLAINTS):
            leftovers.append('round-2 signing key')
        return leftovers


def _require_round(state, expected):
    if state.round != expected:
        raise ValueError(f'node {state.index} is in round {state.round}, expected {expected}')


def round1_deal(state) -> Optional[DealTranscript]:
    _require_round(state, 1)
    params = state.params
    cred = params.elector.select(state.keys, state.index, params.rand, 'deal')
    if cred is None:
        fs_update(state.keys.sig)
        state.round = 2
        return None

    f = sample_polynomial(params.t, state.rng)
    shares = f.evaluations(params.n)[1:]
    r = Scalar.random(state.rng)
    state._dealing = (f, shares, r)
    cm = commit_evals(f, params.n)
    ct = mre_encrypt(params.eks, shares, r)
    unsigned = DealTranscript(params.session_id, state.index, cred, cm, ct)
    deal = DealTranscript(params.session_id, state.index, cred, cm, ct,
                          fs_sign(state.keys.sig, KEY_DEAL, unsigned.signed_bytes()))
    fs_update(state.keys.sig)
    state._dealing = None
    del f, shares, r
    state.round = 2
    logger.debug(f'node {state.index} dealt in session {params.session_id.hex()[:8]}')
    return deal


def verify_signed(params, data, round_byte, key_index):
    """Header fields of a signed message when session, round and signature check out"""
    header = peek_header(data)
    if header is None:
        return None
    session_id, got_round, sender = header
    if session_id != params.session_id or got_round != round_byte or not 1 <= sender <= params.n:
        return None
    body, sig = data[:-FS_SIG_BYTES], data[-FS_SIG_BYTES:]
    if not fs_verify(params.entry(sender).sig_vk, key_index, sig, body):
        return None
    return sender


@functools.lru_cache(maxsize=1 << 10)
def _parse_deal(data):
    return DealTranscript.from_bytes(data)


def _as_bytes(item):
    return item if isinstance(item, (bytes, bytearray)) else item.to_bytes()


def round2_verify(state, deals):
    _require_round(state, 2)
    params = state.params
    n, me = params.n, state.index
    with phase('verify'):
        state.perp = dual_code_vector(n, params.t, state.rng)

    for item in deals:
        data = bytes(_as_bytes(item))
        dealer = verify_signed(params, data, ROUND_DEAL, KEY_DEAL)
        if dealer is None:
            logger.warning(f'node {me}: dropping deal with bad header or signature')
            continue
        if dealer in state.deals or dealer in state.d1:
            logger.warning(f'node {me}: ignoring second deal from {dealer}')
            continue
        try:
            deal = _parse_deal(data)
        except DecodingError as exc:
            logger.warning(f'node {me}: deal from {dealer} does not parse: {exc}')
            state.d1.add(dealer)
            continue
        if len(deal.cm) != n + 1 or deal.ct.n != n:
            state.d1.add(dealer)
            continue
        if not params.elector.verify(dealer, params.entry(dealer).rvk, params.rand, 'deal', deal.cred):
            logger.warning(f'node {me}: dealer {dealer} has no valid deal credential')
            state.d1.add(dealer)
            continue
        with phase('verify'):
            low_degree = check_low_degree(deal.cm, state.perp)
        if not low_degree:
            logger.warning(f'node {me}: dealer {dealer} failed the low-degree test')
            state.d1.add(dealer)
            continue

        state.deals[dealer] = deal
        with phase('verify'):
            block, shared = mre_decrypt_block(deal.ct, me, state.keys.enc.dk)
            share = _decode_share(block)
            consistent = share is not None and GroupElement.base(share) == deal.cm[me]
        if consistent:
            state.d3.add(dealer)
            state.candidates[dealer] = share
            continue
        with phase('complain'):
            proof = prove_decryption(deal.ct.c0, deal.ct.payloads[me - 1], state.keys.enc.dk,
                                     state.keys.enc.ek, shared=shared)
        state.d2[dealer] = Complaint(dealer, me, proof)
        logger.info(f'node {me}: complaining about dealer {dealer}')

    state.round = 3
    complaints = [state.d2[d] for d in sorted(state.d2)]
    return complaints or None


def _decode_share(block):
    try:
        return Scalar.from_bytes(block)
    except DecodingError:
        return None


def sign_multicast(state, complaints):
    """Wrap round-2 complaints for point-to-point delivery"""
    params = state.params
    unsigned = ComplaintMulticast(params.session_id, state.index, tuple(complaints))
    return ComplaintMulticast(params.session_id, state.index, tuple(complaints),
                              fs_sign(state.keys.sig, KEY_COMPLAINTS, unsigned.signed_bytes()))


def sign_complaint_list(state, cred, complaints):
    params = state.params
    unsigned = ComplaintList(params.session_id, state.index, cred, tuple(complaints))
    return ComplaintList(params.session_id, state.index, cred, tuple(complaints),
                         fs_sign(state.keys.sig, KEY_COMPLAINTS, unsigned.signed_bytes()))


def verify_complaint(c, deal, ek_complainer):
    n = deal.ct.n
    if c.dealer != deal.dealer or not 1 <= c.complainer <= n:
        return False
    if not verify_decryption(deal.ct.c0, deal.ct.payloads[c.complainer - 1], ek_complainer, c.proof):
        return False
    m = c.proof.m
    return m is None or GroupElement.base(m) != deal.cm[c.complainer]


def round3_aggregate(state, multicast_complaints):
    _require_round(state, 3)
    params = state.params
    cred = params.elector.select(state.keys, state.index, params.rand, 'agree')
    if cred is None:
        fs_update(state.keys.sig)
        state.round = 4
        return None

    received = []
    for item in multicast_complaints:
        data = bytes(_as_bytes(item))
        sender = verify_signed(params, data, ROUND_COMPLAIN, KEY_COMPLAINTS)
        if sender is None:
            logger.warning(f'node {state.index}: dropping complaint multicast with bad signature')
            continue
        try:
            received.append(ComplaintMulticast.from_bytes(data))
        except DecodingError as exc:
            logger.warning(f'node {state.index}: complaint multicast from {sender} does not parse: {exc}')
    received.sort(key=lambda mc: mc.sender)

    disqual = {}
    for mc in received:
        for complaint in mc.complaints:
            if complaint.complainer != mc.sender:
                logger.warning(f'node {state.index}: {mc.sender} forwarded a complaint it did not make')
                continue
            deal = state.deals.get(complaint.dealer)
            if deal is None or complaint.dealer in disqual:
                continue
            with phase('aggregate'):
                valid = verify_complaint(complaint, deal, params.entry(mc.sender).ek)
            if valid:
                disqual[complaint.dealer] = complaint
            else:
                logger.warning(f'node {state.index}: invalid complaint by {mc.sender} against {complaint.dealer}')

    complaint_list = None
    if disqual:
        complaint_list = sign_complaint_list(state, cred, [disqual[d] for d in sorted(disqual)])
    fs_update(state.keys.sig)
    state.round = 4
    return complaint_list


def finalize(state, lists):
    _require_round(state, 4)
    params = state.params
    disqual = {}
    for item in lists:
        data = bytes(_as_bytes(item))
        sender = verify_signed(params, data, ROUND_AGREE, KEY_COMPLAINTS)
        if sender is None:
            logger.warning(f'node {state.index}: dropping complaint list with bad signature')
            continue
        try:
            complaint_list = ComplaintList.from_bytes(data)
        except DecodingError as exc:
            logger.warning(f'node {state.index}: complaint list from {sender} does not parse: {exc}')
            continue
        if not params.elector.verify(sender, params.entry(sender).rvk, params.rand, 'agree', complaint_list.cred):
            logger.warning(f'node {state.index}: complaint list from {sender} lacks an agree credential')
            continue
        for complaint in complaint_list.complaints:
            deal = state.deals.get(complaint.dealer)
            if deal is None or complaint.dealer in disqual or not 1 <= complaint.complainer <= params.n:
                continue
            with phase('finalize'):
                valid = verify_complaint(complaint, deal, params.entry(complaint.complainer).ek)
            if valid:
                disqual[complaint.dealer] = complaint

    qual = sorted(state.d3 - set(disqual))
    if not qual:
        logger.error(f'node {state.index}: no qualified dealer in session {params.session_id.hex()[:8]}')
        raise ProtocolFailure('qualified dealer set is empty')

    pk = GroupElement.sum([state.deals[j].cm[0] for j in qual])
    pk_shares = tuple(GroupElement.sum([state.deals[j].cm[i] for j in qual]) for i in range(1, params.n + 1))
    sk_share = sum((state.candidates[j] for j in qual), Scalar(0))
    state.round = 5
    logger.debug(f'node {state.index}: finalized with qual={qual} disqualified={sorted(disqual)}')
    return DkgOutput(pk, pk_shares, sk_share, frozenset(qual), state.index, frozenset(disqual))
