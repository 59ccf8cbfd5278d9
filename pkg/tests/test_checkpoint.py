import itertools

import pytest

from services.adversary import tamper_partial
from services.broadcast import MemoryPbb
from services.checkpoint import (
    CKP_KEYWORD, CheckpointChain, CheckpointTx, SchnorrSignature, body_message, bootstrap_verify, build_tx_body,
    checkpoint_digest, challenge, combine, nonce_dkg, partial_sign, robust_combine, schnorr_verify, verify_partial,
)
from services.errors import ChainVerificationError, DecodingError, ProtocolFailure
from services.group_crypto import GroupElement, Scalar, tagged_hash
from services.sharing import sample_polynomial
from services.simnet import SimConfig, run


class SharedKey:
    """A dealer-shared scalar with per-signer public shares, standing in for a DKG output"""

    def __init__(self, n, t, rng):
        self.f = sample_polynomial(t, rng)
        self.shares = [self.f.evaluate(i) for i in range(1, n + 1)]
        self.public = GroupElement.base(self.f.secret)
        self.public_shares = [GroupElement.base(s) for s in self.shares]


def _sign(msg, n, t, rng):
    key, nonce = SharedKey(n, t, rng), SharedKey(n, t, rng)
    partials = [partial_sign(nonce.shares[i - 1], nonce.public, key.shares[i - 1], key.public, msg, signer=i)
                for i in range(1, n + 1)]
    return key, nonce, partials


def _signed_tx(prev_tx, key, rng, digest):
    """Single-signer spend of prev_tx's output (t = 0)"""
    next_key = SharedKey(1, 0, rng)
    body = build_tx_body(prev_tx.tx_id, next_key.public, digest)
    msg = body_message(body)
    k = Scalar.random(rng)
    R = GroupElement.base(k)
    sig = combine([partial_sign(k, R, key.f.secret, key.public, msg)], 0)
    return CheckpointTx(prev_tx.tx_id, next_key.public, digest, sig), next_key


def test_tx_body_is_deterministic(rng):
    q = GroupElement.base(Scalar.random(rng))
    digest = checkpoint_digest(1, b'block-1')
    body = build_tx_body(bytes(32), q, digest)
    assert body == build_tx_body(bytes(32), q, digest)
    assert body_message(body) != body_message(build_tx_body(bytes(32), q, checkpoint_digest(2, b'block-1')))
    with pytest.raises(ValueError):
        build_tx_body(bytes(32), q, bytes(81))
    with pytest.raises(ValueError):
        build_tx_body(bytes(32), q, bytes(16))
    with pytest.raises(ValueError):
        build_tx_body(bytes(31), q, digest)


def test_single_signer_schnorr(rng):
    key = SharedKey(1, 0, rng)
    k = Scalar.random(rng)
    sig = combine([partial_sign(k, GroupElement.base(k), key.f.secret, key.public, b'm')], 0)
    assert schnorr_verify(key.public, b'm', sig)
    assert not schnorr_verify(key.public, b'n', sig)
    assert not schnorr_verify(key.public, b'm', SchnorrSignature.empty())


def test_partials_verify_against_public_shares(rng):
    key, nonce, partials = _sign(b'msg', 5, 2, rng)
    c = challenge(nonce.public, key.public, b'msg')
    for ps in partials:
        assert verify_partial(ps, nonce.public_shares[ps.signer - 1], key.public_shares[ps.signer - 1], c)
    bad = tamper_partial(partials[0])
    assert not verify_partial(bad, nonce.public_shares[0], key.public_shares[0], c)


def test_any_t_plus_one_subset_gives_the_same_signature(rng):
    n, t = 5, 2
    key, nonce, partials = _sign(b'msg', n, t, rng)
    sigs = {combine(list(subset), t).to_bytes() for subset in itertools.combinations(partials, t + 1)}
    assert len(sigs) == 1
    sig = combine(partials, t)
    assert schnorr_verify(key.public, b'msg', sig)
    assert sig.R == nonce.public


def test_robust_combine_drops_tampered_partials(rng):
    n, t = 5, 2
    key, nonce, partials = _sign(b'msg', n, t, rng)
    partials[0] = tamper_partial(partials[0])
    sig = robust_combine(partials, nonce.public_shares, key.public_shares, key.public, b'msg', t)
    assert schnorr_verify(key.public, b'msg', sig)
    with pytest.raises(ProtocolFailure):
        robust_combine([tamper_partial(ps) for ps in partials[:3]] + partials[3:],
                       nonce.public_shares, key.public_shares, key.public, b'msg', t)


def test_combine_needs_distinct_signers(rng):
    _, _, partials = _sign(b'msg', 5, 2, rng)
    with pytest.raises(ProtocolFailure):
        combine([partials[0], partials[0], partials[1]], 2)


def test_tx_codec(rng):
    key = SharedKey(1, 0, rng)
    genesis = CheckpointTx.genesis(key.public, checkpoint_digest(0, b'genesis'))
    tx, _ = _signed_tx(genesis, key, rng, checkpoint_digest(1, b'b1'))
    data = tx.to_bytes()
    assert len(data) == CheckpointTx.SIZE
    assert CheckpointTx.from_bytes(data) == tx
    with pytest.raises(DecodingError):
        CheckpointTx.from_bytes(data + b'\x00')


def test_nonce_session_is_bound_to_the_epoch():
    seen = []
    assert nonce_dkg(lambda sid: seen.append(sid) or 'out', 3) == 'out'
    nonce_dkg(seen.append, 4)
    assert seen[0] == tagged_hash(b'NONCE-SESSION', (3).to_bytes(8, 'big'))
    assert seen[0] != seen[1]


def _chain(rng, epochs):
    pbb = MemoryPbb()
    chain = CheckpointChain(pbb)
    key = SharedKey(1, 0, rng)
    genesis = CheckpointTx.genesis(key.public, checkpoint_digest(0, b'genesis'))
    chain.publish_genesis(genesis)
    prev, txs, keys = genesis, [genesis], [key]
    for epoch in range(1, epochs + 1):
        tx, key = _signed_tx(prev, key, rng, checkpoint_digest(epoch, f'block-{epoch}'.encode()))
        assert chain.submit(tx)
        prev = tx
        txs.append(tx)
        keys.append(key)
    return pbb, chain, txs, keys


def test_bootstrap_follows_the_chain(rng):
    pbb, _, txs, _ = _chain(rng, 3)
    assert bootstrap_verify(pbb, txs[0].tx_id) == checkpoint_digest(3, b'block-3')


def test_bootstrap_with_genesis_only(rng):
    pbb, _, txs, _ = _chain(rng, 0)
    assert bootstrap_verify(pbb, txs[0].tx_id) == checkpoint_digest(0, b'genesis')


def test_bootstrap_requires_genesis(rng):
    pbb, _, _, _ = _chain(rng, 1)
    with pytest.raises(ChainVerificationError) as excinfo:
        bootstrap_verify(pbb, bytes(32))
    assert excinfo.value.epoch == 0


def test_double_spend_is_rejected_and_forks_are_detected(rng):
    pbb, chain, txs, keys = _chain(rng, 2)
    # stale epoch-1 key spends the genesis successor a second time
    stale, _ = _signed_tx(txs[1], keys[1], rng, checkpoint_digest(2, b'rewritten'))
    assert not chain.submit(stale)
    assert bootstrap_verify(pbb, txs[0].tx_id) == checkpoint_digest(2, b'block-2')

    pbb.post(CKP_KEYWORD, stale.to_bytes())
    with pytest.raises(ChainVerificationError) as excinfo:
        bootstrap_verify(pbb, txs[0].tx_id)
    assert excinfo.value.epoch == 2


def test_unknown_input_and_bad_signature_are_rejected(rng):
    pbb, chain, txs, keys = _chain(rng, 1)
    orphan, _ = _signed_tx(CheckpointTx.genesis(keys[1].public, bytes(32)), keys[1], rng, bytes(32))
    assert not chain.submit(orphan)
    forged, _ = _signed_tx(txs[1], keys[0], rng, checkpoint_digest(2, b'b2'))
    assert not chain.submit(forged)

    pbb.post(CKP_KEYWORD, forged.to_bytes())
    with pytest.raises(ChainVerificationError) as excinfo:
        bootstrap_verify(pbb, txs[0].tx_id)
    assert excinfo.value.epoch == 2


@pytest.mark.slow
def test_long_range_spend_rejected_in_every_run():
    for seed in range(100):
        report = run(SimConfig(scenario='checkpoint', n=16, seed=seed, epochs=2, s_expected=4))
        assert report.verdicts['long_range_rejected'], seed
        assert report.ok, (seed, report.failures)
