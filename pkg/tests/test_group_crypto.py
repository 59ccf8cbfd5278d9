import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from services.errors import ConfigError, CryptoError, DecodingError
from services.group_crypto import (
    G, ORDER, POINT_BYTES, RATIO_GRID, GroupElement, NodeKeys, Scalar, VrfCredential, any_trust_ratio,
    auth_verify, expand, fs_keygen, fs_sign, fs_update, fs_verify, hash_to_group,
    hash_to_scalar, honest_majority_ratio, majority_failure, mre_decrypt, mre_decrypt_block, mre_encrypt,
    mre_pad, passes_ratio, prove_decryption, sortition, sortition_verify, tagged_hash, verify_decryption,
    vrf_evaluate, vrf_input, vrf_verify,
)
from services.metrics import Metrics, replay_exps
from utils import xor_bytes


def test_scalar_decoding_is_strict():
    assert Scalar.from_bytes((ORDER - 1).to_bytes(32, 'big')) == Scalar(-1)
    with pytest.raises(DecodingError):
        Scalar.from_bytes(ORDER.to_bytes(32, 'big'))
    with pytest.raises(DecodingError):
        Scalar.from_bytes(b'\x01' * 31)


def test_scalar_arithmetic_wraps_modulo_order():
    a = Scalar(ORDER - 1)
    assert a + 1 == Scalar(0)
    assert (a * a) == Scalar(1)
    assert Scalar(5) / 5 == Scalar(1)
    with pytest.raises(ZeroDivisionError):
        Scalar(0).inv()


def test_identity_encoding_and_group_laws(rng):
    identity = GroupElement.identity()
    assert identity.to_bytes() == bytes(POINT_BYTES)
    assert GroupElement.from_bytes(bytes(POINT_BYTES)).is_identity()
    assert GroupElement.base(Scalar(0)).is_identity()

    a, b = Scalar.random(rng), Scalar.random(rng)
    assert GroupElement.base(a) + GroupElement.base(b) == GroupElement.base(a + b)
    assert G * a == GroupElement.base(a)
    assert (GroupElement.base(a) - GroupElement.base(a)).is_identity()
    assert GroupElement.sum([GroupElement.base(a), -GroupElement.base(a)]).is_identity()


def test_group_element_rejects_garbage():
    with pytest.raises(DecodingError):
        GroupElement.from_bytes(b'\x04' + bytes(32))
    with pytest.raises(DecodingError):
        GroupElement.from_bytes(b'\x02' * 10)


def test_hashes_are_deterministic_and_domain_separated():
    assert hash_to_scalar(b'A', b'data') == hash_to_scalar(b'A', b'data')
    assert hash_to_scalar(b'A', b'data') != hash_to_scalar(b'B', b'data')
    assert tagged_hash('T', b'ab', b'c') == tagged_hash(b'T', b'abc')
    assert len(expand(b'T', b'x', 100)) == 100
    assert expand(b'T', b'x', 100)[:32] == expand(b'T', b'x', 32)
    assert hash_to_group(b'H', b'x') == hash_to_group(b'H', b'x')
    assert hash_to_group(b'H', b'x') != hash_to_group(b'H', b'y')


def test_exponentiations_are_counted_per_node_and_phase(rng):
    metrics = Metrics()
    s = Scalar.random(rng)
    with metrics.scope(4, 'deal'):
        GroupElement.base(s)
        G * s
    assert metrics.exp[(4, 'deal')] == 2
    assert metrics.node_exp(4) == 2


def test_cached_verification_charges_every_caller(rng):
    keys = NodeKeys.generate(rng)
    alpha = vrf_input(b'rand-replay', 'check')
    cred = vrf_evaluate(keys.vrf, alpha)
    vrf_verify.cache_clear()
    metrics = Metrics()
    with metrics.scope(1, 'sortition'):
        assert vrf_verify(keys.vrf.rvk, alpha, cred)
    with metrics.scope(2, 'sortition'):
        assert vrf_verify(keys.vrf.rvk, alpha, cred)
    assert metrics.exp[(1, 'sortition')] == metrics.exp[(2, 'sortition')] == 4


def test_replayed_exponentiations_reach_enclosing_caches():
    @replay_exps()
    def inner(x):
        G * Scalar(x)
        return x

    @replay_exps()
    def outer(x):
        inner(x)
        G * Scalar(x)
        return x

    metrics = Metrics()
    with metrics.scope(1, 'verify'):
        inner(5)
        outer(5)
    with metrics.scope(2, 'verify'):
        outer(5)
    assert metrics.exp[(1, 'verify')] == 3
    assert metrics.exp[(2, 'verify')] == 2


def test_vrf_completeness_and_soundness(rng):
    keys = NodeKeys.generate(rng)
    other = NodeKeys.generate(rng)
    alpha = vrf_input(b'rand', 'deal')
    cred = vrf_evaluate(keys.vrf, alpha)
    assert vrf_verify(keys.vrf.rvk, alpha, cred)
    assert not vrf_verify(other.vrf.rvk, alpha, cred)
    assert not vrf_verify(keys.vrf.rvk, vrf_input(b'rand', 'agree'), cred)
    assert vrf_evaluate(keys.vrf, alpha).output == cred.output
    assert VrfCredential.from_bytes(cred.to_bytes()) == cred
    assert len(cred.to_bytes()) == VrfCredential.SIZE


def test_sortition_extreme_ratios(rng):
    keys = NodeKeys.generate(rng)
    assert sortition(keys, b'r', 'deal', 0) is None
    cred = sortition(keys, b'r', 'deal', 1)
    assert cred is not None
    assert sortition_verify(keys.vrf.rvk, b'r', 1, 'deal', cred)
    assert not sortition_verify(keys.vrf.rvk, b'r', 0, 'deal', cred)
    with pytest.raises(ValueError):
        sortition(keys, b'r', 'deal', Fraction(3, 2))


def test_passes_ratio_is_exact():
    top = (1 << 256) - 1
    assert passes_ratio(top.to_bytes(32, 'big'), 1)
    assert not passes_ratio(top.to_bytes(32, 'big'), Fraction(RATIO_GRID - 1, RATIO_GRID))
    assert passes_ratio(bytes(32), 0)


@pytest.mark.parametrize('n,t', [(64, 31), (512, 255), (1000, 333)])
def test_any_trust_ratio_is_smallest_on_grid(n, t):
    fb = 5e-9
    ratio = any_trust_ratio(n, t, fb)
    p = ratio.numerator / ratio.denominator
    assert (1 - p) ** (n - t) <= fb
    assert (1 - (p - 1 / RATIO_GRID)) ** (n - t) > fb


def test_any_trust_ratio_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        any_trust_ratio(4, 4, 1e-9)
    with pytest.raises(ConfigError):
        any_trust_ratio(10, 3, 0)


def test_honest_majority_ratio_meets_bound():
    ratio = honest_majority_ratio(512, 170, 1e-6)
    assert majority_failure(512, 170, ratio.numerator / ratio.denominator) <= 1e-6
    with pytest.raises(ConfigError):
        honest_majority_ratio(10, 5, 1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=2 ** 32))
def test_mre_roundtrip(n, seed):
    rng = random.Random(seed)
    keys = [NodeKeys.generate(rng).enc for _ in range(n)]
    msgs = [Scalar.random(rng) for _ in range(n)]
    ct = mre_encrypt([k.ek for k in keys], msgs, Scalar.random(rng))
    assert [mre_decrypt(ct, i, k.dk) for i, k in enumerate(keys, 1)] == msgs


def test_mre_argument_checks(rng):
    enc = NodeKeys.generate(rng).enc
    with pytest.raises(ValueError):
        mre_encrypt([enc.ek], [Scalar(1), Scalar(2)], Scalar(3))
    ct = mre_encrypt([enc.ek], [Scalar(1)], Scalar(3))
    with pytest.raises(ValueError):
        mre_decrypt_block(ct, 2, enc.dk)


def test_decryption_proof(rng):
    enc = NodeKeys.generate(rng).enc
    other = NodeKeys.generate(rng).enc
    ct = mre_encrypt([other.ek, enc.ek], [Scalar(11), Scalar(22)], Scalar.random(rng))
    proof = prove_decryption(ct.c0, ct.payloads[1], enc.dk, enc.ek)
    assert proof.m == Scalar(22)
    assert verify_decryption(ct.c0, ct.payloads[1], enc.ek, proof)
    assert not verify_decryption(ct.c0, ct.payloads[0], enc.ek, proof)
    assert not verify_decryption(ct.c0, ct.payloads[1], other.ek, proof)
    doctored = type(proof)(Scalar(23).to_bytes(), proof.shared, proof.c, proof.z)
    assert not verify_decryption(ct.c0, ct.payloads[1], enc.ek, doctored)


def test_decryption_proof_for_non_canonical_block(rng):
    enc = NodeKeys.generate(rng).enc
    r = Scalar.random(rng)
    c0 = GroupElement.base(r)
    payload = xor_bytes(mre_pad(enc.ek * r), ORDER.to_bytes(32, 'big'))
    proof = prove_decryption(c0, payload, enc.dk, enc.ek)
    assert proof.m is None
    assert verify_decryption(c0, payload, enc.ek, proof)


def test_forward_secure_signatures(rng):
    keys = fs_keygen(3, rng)
    sig = fs_sign(keys, 1, b'deal')
    assert fs_verify(keys.vk, 1, sig, b'deal')
    assert not fs_verify(keys.vk, 2, sig, b'deal')
    assert not fs_verify(keys.vk, 1, sig, b'other')

    fs_update(keys)
    assert keys.held_rounds() == [2, 3]
    with pytest.raises(CryptoError):
        fs_sign(keys, 1, b'equivocation')
    keys.current = 1
    with pytest.raises(CryptoError):
        fs_sign(keys, 1, b'equivocation')


def test_node_key_check(rng):
    keys = NodeKeys.generate(rng)
    keys.check()
    shared = NodeKeys.generate(rng, enc=keys.enc)
    assert shared.enc == keys.enc
    assert shared.vrf != keys.vrf


def test_board_authentication_key(rng):
    keys = NodeKeys.generate(rng)
    other = NodeKeys.generate(rng)
    sig = keys.auth.sign(b'post')
    assert auth_verify(keys.auth.vk, sig, b'post')
    assert not auth_verify(other.auth.vk, sig, b'post')
    assert not auth_verify(keys.auth.vk, sig, b'another post')
    assert not auth_verify(keys.auth.vk, sig[:-1], b'post')
    assert NodeKeys.generate(random.Random(1)).auth.vk == NodeKeys.generate(random.Random(1)).auth.vk
