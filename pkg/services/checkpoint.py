"""
Checkpointing a PoS chain onto a Bitcoin-like chain: every epoch spends the
previous checkpoint output into a new output locked by the next epoch's
DKG key, carrying the block digest in an OP_RETURN-style field. The spend
is signed with a threshold Schnorr signature whose nonce comes from a
second DKG run.
"""
import hashlib
import logging
from collections import defaultdict
from dataclasses import dataclass

from config import Config
from services.errors import ChainVerificationError, DecodingError, ProtocolFailure
from services.group_crypto import POINT_BYTES, SCALAR_BYTES, GroupElement, Scalar, hash_to_scalar, tagged_hash
from services.sharing import lagrange_coeffs
from utils import ByteReader

logger = logging.getLogger(__name__)

CKP_KEYWORD = b'ckp'
TX_REF_BYTES = 32
DIGEST_BYTES = 32
GENESIS_INPUT = bytes(TX_REF_BYTES)


@dataclass(frozen=True)
class SchnorrSignature:
    R: GroupElement
    z: Scalar

    def to_bytes(self):
        return self.R.to_bytes() + self.z.to_bytes()

    @classmethod
    def empty(cls):
        return cls(GroupElement.identity(), Scalar(0))


def build_tx_body(prev, q_next, ckp):
    if len(ckp) > Config.MAX_OP_RETURN:
        raise ValueError(f'op_return of {len(ckp)} bytes exceeds {Config.MAX_OP_RETURN}')
    if len(ckp) != DIGEST_BYTES:
        raise ValueError(f'checkpoint digest must be {DIGEST_BYTES} bytes')
    if len(prev) != TX_REF_BYTES:
        raise ValueError(f'input reference must be {TX_REF_BYTES} bytes')
    return bytes(prev) + q_next.to_bytes() + bytes(ckp)


def body_message(body):
    return hashlib.sha256(body).digest()


@dataclass(frozen=True)
class CheckpointTx:
    input_ref: bytes
    output_key: GroupElement
    op_return: bytes
    sig: SchnorrSignature

    SIZE = TX_REF_BYTES + POINT_BYTES + DIGEST_BYTES + POINT_BYTES + SCALAR_BYTES

    @classmethod
    def genesis(cls, q0, digest):
        """Unsigned root output locked by the first configuration's key"""
        return cls(GENESIS_INPUT, q0, digest, SchnorrSignature.empty())

    @property
    def body(self):
        return build_tx_body(self.input_ref, self.output_key, self.op_return)

    @property
    def message(self):
        return body_message(self.body)

    @property
    def tx_id(self):
        return hashlib.sha256(self.to_bytes()).digest()

    def to_bytes(self):
        return self.body + self.sig.to_bytes()

    @classmethod
    def from_bytes(cls, data):
        reader = ByteReader(data)
        input_ref = reader.read(TX_REF_BYTES)
        output_key = GroupElement.from_bytes(reader.read(POINT_BYTES))
        op_return = reader.read(DIGEST_BYTES)
        R = GroupElement.from_bytes(reader.read(POINT_BYTES))
        z = Scalar.from_bytes(reader.read(SCALAR_BYTES))
        reader.expect_end()
        return cls(input_ref, output_key, op_return, SchnorrSignature(R, z))

    def __repr__(self):
        return f'<CheckpointTx {self.tx_id.hex()[:12]} spends {self.input_ref.hex()[:12]}>'


@dataclass(frozen=True)
class Configuration:
    epoch: int
    validators: tuple
    allocation: object
    q: GroupElement
    pk_shares: tuple

    @property
    def sub_ids(self):
        return len(self.pk_shares)

    @property
    def t(self):
        """Corruption bound over sub-IDs: an honest majority of sub-IDs is guaranteed"""
        return (self.sub_ids - 1) // 2


def build_configuration(epoch, validators, allocation, output):
    if len(output.pk_shares) != allocation.sub_ids:
        raise ValueError('DKG output does not match the allocation')
    return Configuration(epoch, tuple(validators), allocation, output.pk, output.pk_shares)


def checkpoint_digest(epoch, block):
    return tagged_hash(b'CKP-DIGEST', epoch.to_bytes(8, 'big'), block)


def challenge(R, pk, msg):
    return hash_to_scalar(b'SCHNORR', R.to_bytes() + pk.to_bytes() + msg)


@dataclass(frozen=True)
class PartialSig:
    signer: int
    z_i: Scalar
    R: GroupElement


def partial_sign(k_i, R, x_i, pk, msg, signer=1):
    c = challenge(R, pk, msg)
    return PartialSig(signer, k_i + c * x_i, R)


def verify_partial(ps, R_i, pk_i, c):
    return GroupElement.base(ps.z_i) == R_i + pk_i * c


def combine(partials, t):
    """Interpolate z at 0 from at least t+1 partial signatures with distinct signers"""
    by_signer = {}
    for ps in partials:
        by_signer.setdefault(ps.signer, ps)
    if len(by_signer) < t + 1:
        raise ProtocolFailure(f'insufficient partial signatures: {len(by_signer)} of {t + 1}')
    Rs = {ps.R.to_bytes() for ps in by_signer.values()}
    if len(Rs) != 1:
        raise ValueError('partial signatures disagree on the nonce commitment')
    chosen = sorted(by_signer)[:t + 1]
    coeffs = lagrange_coeffs(chosen, 0)
    z = sum((coeffs[i] * by_signer[i].z_i for i in chosen), Scalar(0))
    return SchnorrSignature(by_signer[chosen[0]].R, z)


def robust_combine(partials, nonce_shares, key_shares, pk, msg, t):
    """Drop partials that fail share verification, then combine the rest"""
    verified = []
    for ps in partials:
        c = challenge(ps.R, pk, msg)
        if 1 <= ps.signer <= len(key_shares) and verify_partial(ps, nonce_shares[ps.signer - 1],
                                                                key_shares[ps.signer - 1], c):
            verified.append(ps)
        else:
            logger.warning(f'dropping partial signature from sub-ID {ps.signer}')
    return combine(verified, t)


def schnorr_verify(pk, msg, sig):
    if sig.R.is_identity() or pk.is_identity():
        return False
    return GroupElement.base(sig.z) == sig.R + pk * challenge(sig.R, pk, msg)


def nonce_dkg(run_session, epoch):
    """Fresh DKG whose public key is the nonce commitment R and whose shares are the k_i"""
    session_id = tagged_hash(b'NONCE-SESSION', epoch.to_bytes(8, 'big'))
    return run_session(session_id)


class CheckpointChain:
    """
    Spend-chain rules over the bulletin board: a transaction is accepted
    only if it spends an unspent checkpoint output with a valid signature.
    """

    def __init__(self, pbb):
        self.pbb = pbb
        self.outputs = {}
        self.spent = set()

    def publish_genesis(self, tx):
        self.pbb.post(CKP_KEYWORD, tx.to_bytes())
        self.outputs[tx.tx_id] = tx
        return tx.tx_id

    def submit(self, tx):
        prev = self.outputs.get(tx.input_ref)
        if prev is None:
            logger.warning(f'rejecting {tx!r}: unknown input')
            return False
        if tx.input_ref in self.spent:
            logger.warning(f'rejecting {tx!r}: input already consumed')
            return False
        if not schnorr_verify(prev.output_key, tx.message, tx.sig):
            logger.warning(f'rejecting {tx!r}: signature does not verify')
            return False
        self.pbb.post(CKP_KEYWORD, tx.to_bytes())
        self.spent.add(tx.input_ref)
        self.outputs[tx.tx_id] = tx
        return True


def bootstrap_verify(pbb, genesis_tx_id):
    """Walk the spend chain from genesis and return the latest checkpoint digest"""
    txs = []
    for value, counter in pbb.retrieve(1, pbb.get_counter(), CKP_KEYWORD):
        try:
            txs.append(CheckpointTx.from_bytes(value))
        except DecodingError:
            logger.warning(f'skipping undecodable checkpoint record at counter {counter}')

    by_id = {tx.tx_id: tx for tx in txs}
    current = by_id.get(genesis_tx_id)
    if current is None:
        raise ChainVerificationError(0, 'genesis transaction not on the board')
    spends = defaultdict(list)
    for tx in txs:
        spends[tx.input_ref].append(tx)

    epoch = 0
    visited = {current.tx_id}
    while spends.get(current.tx_id):
        epoch += 1
        children = spends[current.tx_id]
        if len(children) > 1:
            raise ChainVerificationError(epoch, 'fork: checkpoint output spent twice')
        child = children[0]
        if not schnorr_verify(current.output_key, child.message, child.sig):
            raise ChainVerificationError(epoch, 'signature does not verify under the previous key')
        current = child
        visited.add(current.tx_id)

    unlinked = [tx for tx in txs if tx.tx_id not in visited]
    if unlinked:
        raise ChainVerificationError(epoch + 1, f'broken chain: {len(unlinked)} transaction(s) not linked to genesis')
    logger.info(f'bootstrap verified {epoch} checkpoint(s)')
    return current.op_return
