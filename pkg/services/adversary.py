"""
Adversary policies for the simulator: which nodes are corrupted, when, and
what they do instead of following the protocol.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from services.dkg import (
    KEY_DEAL, Complaint, DealTranscript, round1_deal, sign_complaint_list, sign_multicast,
)
from services.errors import ConfigError, CryptoError
from services.group_crypto import (
    DecryptionProof, Scalar, fs_sign, fs_update, mre_encrypt, prove_decryption,
)
from services.broadcast import block_id, ebc_vote, encode_vote
from services.checkpoint import PartialSig
from services.sharing import commit_evals, sample_polynomial

logger = logging.getLogger(__name__)


class Behavior(str, Enum):
    HONEST_BUT_CORRUPT = 'honest-but-corrupt'
    MALFORM_CIPHERTEXT = 'malform-ciphertext'
    WRONG_DEGREE = 'wrong-degree-commitment'
    WITHHOLD_MULTICAST = 'withhold-multicast'
    DOUBLE_VOTE = 'double-vote'
    SILENT = 'silent'
    FORGE_COMPLAINT = 'forge-complaint'


@dataclass(frozen=True)
class Misbehavior:
    kind: Behavior
    targets: Optional[frozenset] = None
    fraction: float = 1.0

    def hits(self, index):
        return self.targets is None or index in self.targets


@dataclass(frozen=True)
class AdversaryPolicy:
    name: str = 'honest'
    corrupted: frozenset = frozenset()
    adaptive: tuple = ()
    behaviors: dict = field(default_factory=dict)
    pinned: dict = field(default_factory=dict)

    def ever_corrupted(self):
        return frozenset(self.corrupted) | frozenset(node for node, _ in self.adaptive)

    def validate(self, n, t):
        nodes = self.ever_corrupted()
        if len(nodes) > t:
            raise ConfigError(f'policy {self.name} corrupts {len(nodes)} nodes, bound is {t}')
        if any(not 1 <= node <= n for node in nodes):
            raise ConfigError(f'policy {self.name} names a node outside [1, {n}]')

    def corrupted_at(self, node, round_no):
        if node in self.corrupted:
            return True
        return any(node == who and round_no >= when for who, when in self.adaptive)

    def adaptive_round(self, node):
        for who, when in self.adaptive:
            if who == node:
                return when
        return None

    def behavior_at(self, node, round_no) -> Optional[Misbehavior]:
        if not self.corrupted_at(node, round_no):
            return None
        return self.behaviors.get(node, Misbehavior(Behavior.HONEST_BUT_CORRUPT))

    def is_silent(self, node, round_no):
        behavior = self.behavior_at(node, round_no)
        return behavior is not None and behavior.kind == Behavior.SILENT

    def honest_nodes(self, n):
        corrupted = self.ever_corrupted()
        return tuple(i for i in range(1, n + 1) if i not in corrupted)

    def misbehaving_dealers(self):
        """Nodes whose deal is built against the protocol"""
        return frozenset(node for node, b in self.behaviors.items()
                         if node in self.corrupted and b.kind in (Behavior.MALFORM_CIPHERTEXT, Behavior.WRONG_DEGREE))


POLICY_NAMES = (
    'honest', 'honest-but-corrupt', 'malform-one', 'malform-targets', 'wrong-degree',
    'half-malform', 'withhold', 'withhold-all', 'double-vote', 'silent', 'forge-complaint',
    'adaptive',
)


def _group(rng, n, t, behavior):
    nodes = frozenset(rng.sample(range(1, n + 1), t))
    return nodes, {node: behavior for node in nodes}


def build_policy(name, n, t, rng):
    """Named policy from the suite; `rng` picks the corrupted nodes"""
    if name not in POLICY_NAMES:
        raise ConfigError(f'unknown adversary policy {name!r}; choose from {", ".join(POLICY_NAMES)}')
    if name == 'honest' or t == 0:
        return AdversaryPolicy(name)

    one = rng.randint(1, n)
    if name == 'honest-but-corrupt':
        nodes, behaviors = _group(rng, n, t, Misbehavior(Behavior.HONEST_BUT_CORRUPT))
        return AdversaryPolicy(name, nodes, behaviors=behaviors)
    if name == 'malform-one':
        return AdversaryPolicy(name, frozenset({one}), behaviors={one: Misbehavior(Behavior.MALFORM_CIPHERTEXT)},
                               pinned={'deal': frozenset({one})})
    if name == 'malform-targets':
        target = rng.choice([i for i in range(1, n + 1) if i != one])
        misbehavior = Misbehavior(Behavior.MALFORM_CIPHERTEXT, targets=frozenset({target}))
        return AdversaryPolicy(name, frozenset({one}), behaviors={one: misbehavior},
                               pinned={'deal': frozenset({one})})
    if name == 'wrong-degree':
        return AdversaryPolicy(name, frozenset({one}), behaviors={one: Misbehavior(Behavior.WRONG_DEGREE)},
                               pinned={'deal': frozenset({one})})
    if name == 'half-malform':
        nodes = frozenset(i for i in range(1, n + 1) if i < n / 2 and i <= t)
        return AdversaryPolicy(name, nodes, behaviors={i: Misbehavior(Behavior.MALFORM_CIPHERTEXT) for i in nodes})
    if name in ('withhold', 'withhold-all'):
        fraction = 0.6 if name == 'withhold' else 0.0
        return AdversaryPolicy(name, frozenset({one}),
                               behaviors={one: Misbehavior(Behavior.WITHHOLD_MULTICAST, fraction=fraction)},
                               pinned={'deal': frozenset({one})})
    if name == 'double-vote':
        nodes, behaviors = _group(rng, n, t, Misbehavior(Behavior.DOUBLE_VOTE))
        return AdversaryPolicy(name, nodes, behaviors=behaviors, pinned={'check': frozenset(sorted(nodes)[:1])})
    if name == 'silent':
        nodes, behaviors = _group(rng, n, t, Misbehavior(Behavior.SILENT))
        return AdversaryPolicy(name, nodes, behaviors=behaviors)
    if name == 'forge-complaint':
        nodes, behaviors = _group(rng, n, t, Misbehavior(Behavior.FORGE_COMPLAINT))
        return AdversaryPolicy(name, nodes, behaviors=behaviors, pinned={'agree': frozenset(sorted(nodes)[:1])})
    # adaptive: an honest dealer is taken over once its deal is out
    return AdversaryPolicy(name, frozenset(), adaptive=((one, 2),),
                           behaviors={one: Misbehavior(Behavior.SILENT)}, pinned={'deal': frozenset({one})})


def malicious_deal(state, misbehavior) -> Optional[DealTranscript]:
    """A correctly signed deal whose shares or commitment break the protocol"""
    if misbehavior.kind not in (Behavior.MALFORM_CIPHERTEXT, Behavior.WRONG_DEGREE):
        return round1_deal(state)
    params = state.params
    cred = params.elector.select(state.keys, state.index, params.rand, 'deal')
    if cred is None:
        fs_update(state.keys.sig)
        state.round = 2
        return None

    if misbehavior.kind == Behavior.WRONG_DEGREE:
        f = sample_polynomial(params.t + 1, state.rng)
        shares = f.evaluations(params.n)[1:]
    else:
        f = sample_polynomial(params.t, state.rng)
        shares = [s + 1 if misbehavior.hits(i) else s for i, s in enumerate(f.evaluations(params.n)[1:], 1)]
    cm = commit_evals(f, params.n)
    ct = mre_encrypt(params.eks, shares, Scalar.random(state.rng))
    unsigned = DealTranscript(params.session_id, state.index, cred, cm, ct)
    deal = DealTranscript(params.session_id, state.index, cred, cm, ct,
                          fs_sign(state.keys.sig, KEY_DEAL, unsigned.signed_bytes()))
    fs_update(state.keys.sig)
    state.round = 2
    logger.info(f'adversary: node {state.index} dealt a {misbehavior.kind.value} deal')
    return deal


def forged_complaints(state):
    """
    Complaints against every dealer this node accepted: one with an honest
    proof of a share that matches its commitment, one with a doctored
    plaintext. Neither should survive verification.
    """
    forged = []
    enc = state.keys.enc
    for dealer in sorted(state.d3):
        deal = state.deals[dealer]
        payload = deal.ct.payloads[state.index - 1]
        proof = prove_decryption(deal.ct.c0, payload, enc.dk, enc.ek)
        forged.append(Complaint(dealer, state.index, proof))
        doctored = bytes([proof.plaintext[0] ^ 1]) + proof.plaintext[1:]
        forged.append(Complaint(dealer, state.index, DecryptionProof(doctored, proof.shared, proof.c, proof.z)))
    return forged


def forged_multicast(state, genuine):
    complaints = list(genuine or []) + forged_complaints(state)
    return sign_multicast(state, complaints) if complaints else None


def forged_complaint_list(state):
    """Round 3 of an agree-committee member that broadcasts only forged complaints"""
    params = state.params
    cred = params.elector.select(state.keys, state.index, params.rand, 'agree')
    forged = None
    if cred is not None:
        complaints = [state.d2[d] for d in sorted(state.d2)] + forged_complaints(state)
        if complaints:
            forged = sign_complaint_list(state, cred, complaints)
    fs_update(state.keys.sig)
    state.round = 4
    return forged


def withheld_recipients(misbehavior, recipients, rng):
    """Subset of recipients a withholding sender actually serves"""
    keep = round(misbehavior.fraction * len(recipients))
    return sorted(rng.sample(list(recipients), keep))


def double_vote(session, pbb, receiver, received):
    """Post a vote with every flag inverted, then the genuine one"""
    digests = session.posted_digests(pbb)
    cred = session.elector.select(receiver.keys, receiver.index, session.rand, 'check')
    if cred is not None:
        inverted = [not (received.get(j) is not None and block_id(received[j]) == bid) for j, bid in digests.items()]
        pbb.post(session.check_kw, encode_vote(session, receiver.index, receiver.keys, cred, inverted))
        logger.info(f'adversary: node {receiver.index} posted an inverted vote')
    return ebc_vote(session, pbb, receiver, received)


def tamper_partial(ps):
    return PartialSig(ps.signer, ps.z_i + 1, ps.R)


def attempt_equivocation(state):
    """
    What a freshly corrupted node would try: rewind the key counter and sign
    a second round-1 deal. Returns True if a signature came out.
    """
    keys = state.keys.sig
    saved = keys.current
    keys.current = KEY_DEAL
    try:
        fs_sign(keys, KEY_DEAL, b'equivocating deal')
        return True
    except CryptoError:
        return False
    finally:
        keys.current = saved
