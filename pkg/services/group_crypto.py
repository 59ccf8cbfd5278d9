"""
secp256k1 group arithmetic and the per-node primitives built on it:
sortition VRF, multi-recipient hybrid ElGamal with decryption proofs and
round-indexed forward-secure signing keys, plus the long-lived key that
authenticates bulletin-board posts.

Scalar multiplications go through coincurve (libsecp256k1); every one of
them is reported to services.metrics so per-node costs can be audited.
"""
import functools
import hashlib
import logging
import math
import secrets
from dataclasses import dataclass
from fractions import Fraction

from coincurve import PrivateKey as _SK, PublicKey as _PK
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from services.errors import CryptoError, ConfigError, DecodingError
from services.metrics import count_exp, replay_exps
from utils import length_prefixed, xor_bytes

logger = logging.getLogger(__name__)

ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
SCALAR_BYTES = 32
POINT_BYTES = 33
FS_SIG_BYTES = 64
AUTH_VK_BYTES = 32
AUTH_SIG_BYTES = 64
VRF_OUTPUT_MAX = (1 << 256) - 1
RATIO_GRID = 1 << 40


# Hashing

def tagged_hash(tag, *parts):
    """SHA-256 over a 1-byte tag length, the ASCII tag and the concatenated parts"""
    if isinstance(tag, str):
        tag = tag.encode('ascii')
    if len(tag) > 255:
        raise ValueError('domain tag longer than 255 bytes')
    h = hashlib.sha256(bytes([len(tag)]) + tag)
    for part in parts:
        h.update(part)
    return h.digest()


def expand(tag, data, length):
    """Counter-mode expansion of a tagged hash to `length` bytes"""
    out = bytearray()
    counter = 0
    while len(out) < length:
        out += tagged_hash(tag, counter.to_bytes(4, 'big'), data)
        counter += 1
    return bytes(out[:length])


def hash_to_scalar(domain_tag, data):
    """Deterministic map into Z_p; 48 expanded bytes keep the modular bias negligible"""
    return Scalar(int.from_bytes(expand(domain_tag, data, 48), 'big'))


# Group types

class Scalar:
    """Element of Z_p, p the secp256k1 group order"""

    __slots__ = ('_v',)

    def __init__(self, value):
        self._v = value % ORDER

    @classmethod
    def random(cls, rng=None):
        """Uniform in [1, p-1]; `rng` is a random.Random for seeded simulation"""
        if rng is None:
            return cls(secrets.randbelow(ORDER - 1) + 1)
        return cls(rng.randrange(1, ORDER))

    @classmethod
    def from_bytes(cls, data):
        """Strict 32-byte big-endian decoding; values >= p are rejected, not reduced"""
        if len(data) != SCALAR_BYTES:
            raise DecodingError(f'scalar needs {SCALAR_BYTES} bytes, got {len(data)}')
        value = int.from_bytes(data, 'big')
        if value >= ORDER:
            raise DecodingError('scalar out of range')
        return cls(value)

    def to_bytes(self):
        return self._v.to_bytes(SCALAR_BYTES, 'big')

    @property
    def value(self):
        return self._v

    def is_zero(self):
        return self._v == 0

    def inv(self):
        if self._v == 0:
            raise ZeroDivisionError('cannot invert zero scalar')
        return Scalar(pow(self._v, ORDER - 2, ORDER))

    def __add__(self, other):
        if isinstance(other, int):
            other = Scalar(other)
        if not isinstance(other, Scalar):
            return NotImplemented
        return Scalar(self._v + other._v)

    def __radd__(self, other):
        if isinstance(other, int):
            return Scalar(self._v + other)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, int):
            other = Scalar(other)
        if not isinstance(other, Scalar):
            return NotImplemented
        return Scalar(self._v - other._v)

    def __rsub__(self, other):
        if isinstance(other, int):
            return Scalar(other - self._v)
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, Scalar):
            return Scalar(self._v * other._v)
        if isinstance(other, int):
            return Scalar(self._v * other)
        if isinstance(other, GroupElement):
            return other * self
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, int):
            return Scalar(self._v * other)
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, int):
            other = Scalar(other)
        if not isinstance(other, Scalar):
            return NotImplemented
        return self * other.inv()

    def __neg__(self):
        return Scalar(-self._v)

    def __eq__(self, other):
        if isinstance(other, Scalar):
            return self._v == other._v
        if isinstance(other, int):
            return self._v == other % ORDER
        return NotImplemented

    def __hash__(self):
        return hash(self._v)

    def __bool__(self):
        return self._v != 0

    def __repr__(self):
        return f'Scalar(0x{self._v:064x})'


class GroupElement:
    """
    Point of the secp256k1 group.

    The identity is a flag and encodes as 33 zero bytes so that every
    element has exactly one 33-byte encoding.
    """

    __slots__ = ('_pk',)

    def __init__(self, pk=None):
        self._pk = pk

    @classmethod
    def identity(cls):
        return cls(None)

    @classmethod
    def base(cls, s):
        """g^s"""
        count_exp()
        if s.is_zero():
            return cls.identity()
        return cls(_SK(s.to_bytes()).public_key)

    @classmethod
    def from_bytes(cls, data):
        if len(data) != POINT_BYTES:
            raise DecodingError(f'group element needs {POINT_BYTES} bytes, got {len(data)}')
        if data == bytes(POINT_BYTES):
            return cls.identity()
        if data[0] not in (2, 3):
            raise DecodingError('group element is not in compressed form')
        try:
            return cls(_PK(bytes(data)))
        except ValueError as exc:
            raise DecodingError(f'bytes are not a curve point: {exc}') from exc

    @classmethod
    def sum(cls, elements):
        """Sum of many elements with one libsecp256k1 call"""
        real = [e._pk for e in elements if e._pk is not None]
        if not real:
            return cls.identity()
        if len(real) == 1:
            return cls(real[0])
        try:
            return cls(_PK.combine_keys(real))
        except ValueError:
            # libsecp256k1 refuses to return the point at infinity
            return cls.identity()

    def to_bytes(self):
        if self._pk is None:
            return bytes(POINT_BYTES)
        return self._pk.format(compressed=True)

    def is_identity(self):
        return self._pk is None

    def __mul__(self, s):
        """self^s in multiplicative notation"""
        if isinstance(s, int):
            s = Scalar(s)
        if not isinstance(s, Scalar):
            return NotImplemented
        count_exp()
        if self._pk is None or s.is_zero():
            return GroupElement.identity()
        return GroupElement(self._pk.multiply(s.to_bytes()))

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return GroupElement.sum([self, other])

    def __neg__(self):
        if self._pk is None:
            return self
        raw = bytearray(self.to_bytes())
        raw[0] ^= 0x01
        return GroupElement(_PK(bytes(raw)))

    def __sub__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self + (-other)

    def __eq__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def __hash__(self):
        return hash(self.to_bytes())

    def __repr__(self):
        if self._pk is None:
            return 'GroupElement(identity)'
        return f'GroupElement({self.to_bytes().hex()[:18]}...)'


G = GroupElement(_SK(b'\x00' * 31 + b'\x01').public_key)


@functools.lru_cache(maxsize=1 << 12)
def hash_to_group(tag, data):
    """Try-and-increment: the first candidate x with a curve point, even y"""
    for counter in range(1 << 16):
        x = tagged_hash(tag, counter.to_bytes(4, 'big'), data)
        try:
            return GroupElement(_PK(b'\x02' + x))
        except ValueError:
            continue
    raise CryptoError('hash_to_group found no curve point')


def nonce(tag, secret, *parts):
    """Deterministic proof nonce derived from the secret and the statement"""
    k = hash_to_scalar(tag, secret.to_bytes() + b''.join(parts))
    if k.is_zero():
        k = Scalar(1)
    return k


# Board authentication

class AuthKey:
    """
    Long-lived Ed25519 key a node signs its bulletin-board posts with.
    It is never erased; every signed post carries the session keyword.
    """

    def __init__(self, private):
        self._private = private
        self.vk = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)

    @classmethod
    def generate(cls, rng=None):
        return cls(_ed25519_key(rng))

    def sign(self, msg):
        return self._private.sign(tagged_hash(b'BOARD-AUTH', msg))

    def __repr__(self):
        return f'<AuthKey vk={self.vk.hex()[:16]}>'


@functools.lru_cache(maxsize=1 << 14)
def _auth_verify(vk, sig, msg):
    try:
        Ed25519PublicKey.from_public_bytes(vk).verify(sig, tagged_hash(b'BOARD-AUTH', msg))
        return True
    except (InvalidSignature, ValueError):
        return False


def auth_verify(vk, sig, msg):
    if len(vk) != AUTH_VK_BYTES or len(sig) != AUTH_SIG_BYTES:
        return False
    return _auth_verify(bytes(vk), bytes(sig), bytes(msg))


# Node keys

@dataclass(frozen=True)
class EncKeyPair:
    ek: GroupElement
    dk: Scalar

    def __repr__(self):
        return f'EncKeyPair(ek={self.ek!r})'


@dataclass(frozen=True)
class VrfKeyPair:
    rvk: GroupElement
    rsk: Scalar

    def __repr__(self):
        return f'VrfKeyPair(rvk={self.rvk!r})'


class EpochSigKeys:
    """
    Bounded-round forward-secure signing: one Ed25519 key per protocol round,
    all bound into a single verification record (the tuple of public keys).
    fs_update drops the current round key.
    """

    def __init__(self, vk, per_round):
        self.vk = tuple(vk)
        self._per_round = list(per_round)
        self.current = 1

    @property
    def rounds(self):
        return len(self.vk)

    def has_key(self, round_index):
        return 1 <= round_index <= self.rounds and self._per_round[round_index - 1] is not None

    def held_rounds(self):
        """Round indices whose signing key is still present"""
        return [i + 1 for i, key in enumerate(self._per_round) if key is not None]

    def __repr__(self):
        return f'<EpochSigKeys rounds={self.rounds} current={self.current}>'


@dataclass(frozen=True)
class NodeKeys:
    enc: EncKeyPair
    vrf: VrfKeyPair
    sig: EpochSigKeys
    auth: AuthKey

    @classmethod
    def generate(cls, rng=None, rounds=3, enc=None):
        """Fresh node keys; `enc` lets several sub-IDs share one encryption pair"""
        if enc is None:
            dk = Scalar.random(rng)
            enc = EncKeyPair(GroupElement.base(dk), dk)
        rsk = Scalar.random(rng)
        keys = cls(enc=enc, vrf=VrfKeyPair(GroupElement.base(rsk), rsk), sig=fs_keygen(rounds, rng),
                   auth=AuthKey.generate(rng))
        keys.check()
        return keys

    def check(self):
        if GroupElement.base(self.enc.dk) != self.enc.ek:
            raise CryptoError('encryption key pair mismatch')
        if GroupElement.base(self.vrf.rsk) != self.vrf.rvk:
            raise CryptoError('VRF key pair mismatch')


# Sortition VRF

@dataclass(frozen=True)
class VrfCredential:
    output: bytes
    gamma: GroupElement
    c: Scalar
    s: Scalar

    SIZE = POINT_BYTES + 2 * SCALAR_BYTES

    @property
    def proof(self):
        return (self.gamma, self.c, self.s)

    def to_bytes(self):
        return self.gamma.to_bytes() + self.c.to_bytes() + self.s.to_bytes()

    @classmethod
    def from_bytes(cls, data):
        if len(data) != cls.SIZE:
            raise DecodingError(f'credential needs {cls.SIZE} bytes, got {len(data)}')
        gamma = GroupElement.from_bytes(data[:POINT_BYTES])
        c = Scalar.from_bytes(data[POINT_BYTES:POINT_BYTES + SCALAR_BYTES])
        s = Scalar.from_bytes(data[POINT_BYTES + SCALAR_BYTES:])
        return cls(vrf_output(gamma), gamma, c, s)


def vrf_input(rand, event):
    return length_prefixed(rand) + event.encode('utf-8')


def vrf_output(gamma):
    return tagged_hash(b'VRF-OUT', gamma.to_bytes())


def _vrf_challenge(h, rvk, gamma, u, v):
    return hash_to_scalar(b'VRF-CHAL', G.to_bytes() + h.to_bytes() + rvk.to_bytes()
                          + gamma.to_bytes() + u.to_bytes() + v.to_bytes())


def vrf_evaluate(vrf_keys, alpha):
    """DDH VRF: gamma = H(alpha)^rsk with a DLEQ proof against rvk"""
    h = hash_to_group(b'VRF-H2G', vrf_keys.rvk.to_bytes() + alpha)
    gamma = h * vrf_keys.rsk
    k = nonce(b'VRF-NONCE', vrf_keys.rsk, h.to_bytes())
    c = _vrf_challenge(h, vrf_keys.rvk, gamma, GroupElement.base(k), h * k)
    s = k - c * vrf_keys.rsk
    return VrfCredential(vrf_output(gamma), gamma, c, s)


@replay_exps()
def vrf_verify(rvk, alpha, cred):
    if cred.gamma.is_identity() or cred.output != vrf_output(cred.gamma):
        return False
    h = hash_to_group(b'VRF-H2G', rvk.to_bytes() + alpha)
    u = GroupElement.base(cred.s) + rvk * cred.c
    v = h * cred.s + cred.gamma * cred.c
    return _vrf_challenge(h, rvk, cred.gamma, u, v) == cred.c


def passes_ratio(output, ratio):
    """y / max <= ratio, evaluated exactly"""
    ratio = Fraction(ratio)
    y = int.from_bytes(output, 'big')
    return y * ratio.denominator <= ratio.numerator * VRF_OUTPUT_MAX


def sortition(keys, rand, event, ratio):
    ratio = Fraction(ratio)
    if not 0 <= ratio <= 1:
        raise ValueError(f'sortition ratio {ratio} outside [0, 1]')
    cred = vrf_evaluate(keys.vrf, vrf_input(rand, event))
    if passes_ratio(cred.output, ratio):
        return cred
    return None


def sortition_verify(rvk, rand, ratio, event, cred):
    if cred is None:
        return False
    return passes_ratio(cred.output, Fraction(ratio)) and vrf_verify(rvk, vrf_input(rand, event), cred)


def _grid_ratio(numerator):
    return Fraction(numerator, RATIO_GRID)


def any_trust_ratio(n, t, failure_bound):
    """Smallest ratio on a 2^-40 grid with (1 - p)^(n - t) <= failure_bound"""
    if not 0 <= t < n:
        raise ConfigError(f'need 0 <= t < n, got n={n} t={t}')
    if not 0 < failure_bound < 1:
        raise ConfigError(f'failure bound {failure_bound} outside (0, 1)')
    honest = n - t
    p = -math.expm1(math.log(failure_bound) / honest)
    grid = min(math.ceil(p * RATIO_GRID), RATIO_GRID)
    while grid < RATIO_GRID and (1 - grid / RATIO_GRID) ** honest > failure_bound:
        grid += 1
    if (1 - grid / RATIO_GRID) ** honest > failure_bound:
        raise ConfigError(f'failure bound {failure_bound} unreachable for n={n} t={t}')
    return _grid_ratio(grid)


def _binomial_pmf(trials, p):
    if p <= 0:
        return [1.0] + [0.0] * trials
    if p >= 1:
        return [0.0] * trials + [1.0]
    lp, lq = math.log(p), math.log1p(-p)
    lf = math.lgamma(trials + 1)
    return [math.exp(lf - math.lgamma(k + 1) - math.lgamma(trials - k + 1) + k * lp + (trials - k) * lq)
            for k in range(trials + 1)]


def majority_failure(n, t, p):
    """Pr[corrupted members >= honest members] for a committee sampled with ratio p"""
    corrupted = _binomial_pmf(t, p)
    honest = _binomial_pmf(n - t, p)
    failure = 0.0
    honest_cdf = 0.0
    for x, weight in enumerate(corrupted):
        if x < len(honest):
            honest_cdf += honest[x]
        failure += weight * min(honest_cdf, 1.0)
    return failure


def honest_majority_ratio(n, t, failure_bound):
    """Smallest grid ratio whose committee has an honest majority except w.p. <= failure_bound"""
    if not 0 <= t < n:
        raise ConfigError(f'need 0 <= t < n, got n={n} t={t}')
    if not 0 < failure_bound < 1:
        raise ConfigError(f'failure bound {failure_bound} outside (0, 1)')
    if majority_failure(n, t, 1.0) > failure_bound:
        raise ConfigError(f'honest majority unreachable for n={n} t={t}')
    lo, hi = 0, RATIO_GRID
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if majority_failure(n, t, mid / RATIO_GRID) <= failure_bound:
            hi = mid
        else:
            lo = mid
    return _grid_ratio(hi)


# Multi-recipient encryption

@dataclass(frozen=True)
class MreCiphertext:
    c0: GroupElement
    payloads: tuple

    def __post_init__(self):
        for payload in self.payloads:
            if len(payload) != SCALAR_BYTES:
                raise DecodingError('MRE payload block has the wrong length')

    @property
    def n(self):
        return len(self.payloads)

    def to_bytes(self):
        return self.c0.to_bytes() + b''.join(self.payloads)

    @classmethod
    def from_reader(cls, reader, n):
        c0 = GroupElement.from_bytes(reader.read(POINT_BYTES))
        return cls(c0, tuple(reader.read(SCALAR_BYTES) for _ in range(n)))


def mre_pad(shared):
    return expand(b'MRE-PAD', shared.to_bytes(), SCALAR_BYTES)


def mre_encrypt(eks, msgs, r):
    """One ElGamal randomness r for all recipients: c0 = g^r, payload_i = pad(ek_i^r) xor m_i"""
    if len(eks) != len(msgs):
        raise ValueError(f'{len(eks)} keys for {len(msgs)} messages')
    c0 = GroupElement.base(r)
    payloads = tuple(xor_bytes(mre_pad(ek * r), m.to_bytes()) for ek, m in zip(eks, msgs))
    return MreCiphertext(c0, payloads)


def mre_decrypt_block(ct, i, dk):
    """Raw 32-byte plaintext block for recipient i plus the shared point"""
    if not 1 <= i <= ct.n:
        raise ValueError(f'recipient index {i} outside [1, {ct.n}]')
    shared = ct.c0 * dk
    return xor_bytes(mre_pad(shared), ct.payloads[i - 1]), shared


def mre_decrypt(ct, i, dk):
    block, _ = mre_decrypt_block(ct, i, dk)
    return Scalar.from_bytes(block)


@dataclass(frozen=True)
class DecryptionProof:
    """
    Claimed plaintext block, the shared point c0^dk and a DLEQ transcript.
    The block is kept as raw bytes so a non-canonical decryption can still
    be proven and complained about.
    """
    plaintext: bytes
    shared: GroupElement
    c: Scalar
    z: Scalar

    SIZE = SCALAR_BYTES + POINT_BYTES + 2 * SCALAR_BYTES

    @property
    def m(self):
        """Decoded plaintext, or None when the block is not a canonical scalar"""
        try:
            return Scalar.from_bytes(self.plaintext)
        except DecodingError:
            return None

    @property
    def dleq(self):
        return (self.c, self.z)

    def to_bytes(self):
        return self.plaintext + self.shared.to_bytes() + self.c.to_bytes() + self.z.to_bytes()

    @classmethod
    def from_reader(cls, reader):
        plaintext = reader.read(SCALAR_BYTES)
        shared = GroupElement.from_bytes(reader.read(POINT_BYTES))
        c = Scalar.from_bytes(reader.read(SCALAR_BYTES))
        z = Scalar.from_bytes(reader.read(SCALAR_BYTES))
        return cls(plaintext, shared, c, z)


def _dleq_challenge(ek, c0, shared, a, b):
    return hash_to_scalar(b'DLEQ', G.to_bytes() + ek.to_bytes() + c0.to_bytes()
                          + shared.to_bytes() + a.to_bytes() + b.to_bytes())


def prove_decryption(c0, payload_i, dk, ek, shared=None):
    """Decrypt one block and prove log_g(ek) = log_c0(shared); pass `shared` to reuse c0^dk"""
    if shared is None:
        shared = c0 * dk
    plaintext = xor_bytes(mre_pad(shared), payload_i)
    k = nonce(b'DLEQ-NONCE', dk, c0.to_bytes(), payload_i)
    c = _dleq_challenge(ek, c0, shared, GroupElement.base(k), c0 * k)
    return DecryptionProof(plaintext, shared, c, k + c * dk)


@replay_exps()
def verify_decryption(c0, payload_i, ek, proof):
    if len(payload_i) != SCALAR_BYTES:
        return False
    a = GroupElement.base(proof.z) - ek * proof.c
    b = c0 * proof.z - proof.shared * proof.c
    if _dleq_challenge(ek, c0, proof.shared, a, b) != proof.c:
        return False
    return proof.plaintext == xor_bytes(mre_pad(proof.shared), payload_i)


# Forward-secure signatures

def _ed25519_key(rng):
    if rng is None:
        return Ed25519PrivateKey.generate()
    return Ed25519PrivateKey.from_private_bytes(rng.randbytes(32))


def fs_keygen(rounds, rng=None):
    if rounds < 1:
        raise ValueError('need at least one round')
    per_round = [_ed25519_key(rng) for _ in range(rounds)]
    vk = [key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw) for key in per_round]
    return EpochSigKeys(vk, per_round)


def _fs_message(round_index, msg):
    return tagged_hash(b'FS-SIG', round_index.to_bytes(4, 'big'), msg)


def fs_sign(keys, round_index, msg):
    if round_index != keys.current:
        raise CryptoError(f'cannot sign for round {round_index}, key is at round {keys.current}')
    if not keys.has_key(round_index):
        raise CryptoError(f'signing key for round {round_index} has been erased')
    return keys._per_round[round_index - 1].sign(_fs_message(round_index, msg))


def fs_update(keys):
    """Erase the current round key and move to the next round"""
    if 1 <= keys.current <= keys.rounds:
        keys._per_round[keys.current - 1] = None
    keys.current += 1
    logger.debug(f'signing key advanced to round {keys.current}')


def fs_verify(vk, round_index, sig, msg):
    if not 1 <= round_index <= len(vk) or len(sig) != FS_SIG_BYTES:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(vk[round_index - 1]).verify(sig, _fs_message(round_index, msg))
        return True
    except (InvalidSignature, ValueError):
        return False
