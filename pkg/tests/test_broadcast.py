import pytest

from services.broadcast import (
    BroadcastSession, Ddn, MemoryPbb, ReceiverState, SqlPbb, block_id, decode_vote, ebc_finalize, ebc_output,
    ebc_send, ebc_vote, encode_vote, make_pbb, open_post, signed_post, tally_votes,
)
from services.committee import ForcedElector
from services.errors import ConfigError, DecodingError, ProtocolFailure
from services.metrics import Metrics
from services.scenarios import make_roster
from utils import pack_bits, u32


@pytest.fixture(params=['memory', 'sql'])
def pbb(request, session_factory):
    if request.param == 'memory':
        return MemoryPbb(metrics=Metrics())
    return SqlPbb(metrics=Metrics(), session_factory=session_factory)


def test_board_is_append_only_and_windowed(pbb):
    assert pbb.get_counter() == 0
    assert pbb.post(b'a', b'1') == 1
    assert pbb.post(b'b', b'2') == 2
    assert pbb.post(b'a', b'3') == 3
    assert pbb.retrieve(1, 3, b'a') == [(b'1', 1), (b'3', 3)]
    assert pbb.retrieve(2, 3, b'a') == [(b'3', 3)]
    assert pbb.retrieve(3, 2, b'a') == []
    assert pbb.stored_bytes == 6
    assert pbb.metrics.channel_bytes['pbb'] == 6
    assert [e.counter for e in pbb.entries()] == [1, 2, 3]


def test_make_pbb_backends():
    assert isinstance(make_pbb('memory'), MemoryPbb)
    assert isinstance(make_pbb('sql'), SqlPbb)
    with pytest.raises(ConfigError):
        make_pbb('redis')


def test_ddn_serves_registered_available_blocks():
    ddn = Ddn(is_available=lambda nid: nid != 2)
    block = b'x' * 100
    bid = block_id(block)
    with pytest.raises(ValueError):
        ddn.register(1, bid, b'y')
    ddn.register(2, bid, block)
    assert ddn.retrieve(bid) is None
    ddn.register(3, bid, block)
    assert ddn.providers(bid) == [2, 3]
    assert ddn.retrieve(bid) == block


def test_vote_codec(node_keys):
    from services.group_crypto import sortition

    keys = node_keys(2)
    session = BroadcastSession.open(MemoryPbb(), b'sid-0', 2, b'r', make_roster(keys), ForcedElector({}))
    cred = sortition(keys[1], b'r', 'check', 1)
    flags = [True, False, True, True, False, False, False, True, True]
    vote = encode_vote(session, 1, keys[1], cred, flags)
    voter, body = open_post(session.check_kw, vote, session.roster)
    assert voter == 1
    assert decode_vote(body, len(flags)) == (cred, flags)
    with pytest.raises(DecodingError):
        decode_vote(body, 20)
    assert open_post(session.check_kw, vote[:-1] + bytes([vote[-1] ^ 1]), session.roster) is None
    assert open_post(session.send_kw, vote, session.roster) is None
    assert open_post(session.check_kw, u32(3) + vote[4:], session.roster) is None


def _run_channel(pbb, keys, payloads, served, check, voters=None, sid=b'sid-1', before_send=None, before_vote=None):
    n = len(keys)
    session = BroadcastSession.open(pbb, sid, n, b'rand', make_roster(keys), ForcedElector({'check': check}))
    inboxes = {i: {} for i in keys}

    def multicast_to(recipients):
        def deliver(sender, v):
            for r in recipients:
                inboxes[r][sender] = v
        return deliver

    if before_send is not None:
        before_send(session)
    for sender, v in payloads.items():
        ebc_send(session, pbb, sender, keys[sender], v, multicast_to(served.get(sender, keys)))
    session.close_send_round(pbb)
    if before_vote is not None:
        before_vote(session)
    receivers = {i: ReceiverState(i, keys[i]) for i in keys}
    for i in (voters or keys):
        ebc_vote(session, pbb, receivers[i], inboxes[i])
    session.close_vote_round(pbb)
    ddn = Ddn()
    for receiver in receivers.values():
        if receiver.digests:
            ebc_finalize(session, pbb, receiver, ddn)
    return session, receivers, ddn


def test_honest_senders_are_delivered(pbb, node_keys):
    keys = node_keys(4)
    payloads = {1: b'a' * 50, 3: b'b' * 70}
    session, receivers, ddn = _run_channel(pbb, keys, payloads, {}, check={1, 2, 3})
    for receiver in receivers.values():
        assert ebc_output(session, receiver, ddn) == payloads
    assert tally_votes(session, pbb, [1, 3]) == ({1: 3, 3: 3}, 3)


def test_partially_served_block_is_recovered_from_the_ddn(pbb, node_keys):
    keys = node_keys(4)
    payloads = {2: b'c' * 40}
    session, receivers, ddn = _run_channel(pbb, keys, payloads, {2: [1, 2, 3]}, check={1, 2, 3})
    assert receivers[4].valid == {2: False}
    assert receivers[4].final == {2: True}
    assert ebc_output(session, receivers[4], ddn) == payloads
    assert ddn.providers(block_id(payloads[2])) == [1, 2, 3]


def test_withheld_block_is_not_final(pbb, node_keys):
    keys = node_keys(4)
    session, receivers, ddn = _run_channel(pbb, keys, {1: b'd' * 10}, {1: [1]}, check={2, 3, 4})
    for receiver in receivers.values():
        assert ebc_output(session, receiver, ddn) == {1: None}


def test_missing_provider_is_a_protocol_failure(node_keys):
    pbb = MemoryPbb()
    keys = node_keys(4)
    session, receivers, _ = _run_channel(pbb, keys, {2: b'e' * 10}, {2: [1, 2, 3]}, check={1, 2, 3})
    with pytest.raises(ProtocolFailure):
        ebc_output(session, receivers[4], Ddn())


def test_digest_posted_in_another_senders_name_is_ignored(pbb, node_keys):
    keys = node_keys(4)
    payloads = {1: b'g' * 32}

    def spoof(session):
        pbb.post(session.send_kw, u32(1) + block_id(b'bogus'))
        pbb.post(session.send_kw, signed_post(session.send_kw, 1, keys[4].auth, block_id(b'bogus')))

    session, receivers, ddn = _run_channel(pbb, keys, payloads, {}, check={1, 2, 3}, before_send=spoof)
    assert session.posted_digests(pbb) == {1: block_id(payloads[1])}
    for receiver in receivers.values():
        assert ebc_output(session, receiver, ddn) == payloads


def test_votes_do_not_carry_over_between_sessions(pbb, node_keys):
    keys = node_keys(4)
    payloads = {1: b'h' * 24}
    first, _, _ = _run_channel(pbb, keys, payloads, {}, check={1, 2, 3}, sid=b'sid-a')
    earlier_votes = [value for value, _ in pbb.retrieve(first.t1 + 1, first.t2, first.check_kw)]
    assert len(earlier_votes) == 3

    def replay(session):
        for value in earlier_votes:
            pbb.post(session.check_kw, value)
            voter, body = open_post(first.check_kw, value, first.roster)
            cred, _ = decode_vote(body, 1)
            pbb.post(session.check_kw, signed_post(session.check_kw, voter, keys[4].auth,
                                                   cred.to_bytes() + pack_bits([False])))

    session, receivers, ddn = _run_channel(pbb, keys, payloads, {}, check={1, 2, 3}, sid=b'sid-b',
                                           before_vote=replay)
    assert tally_votes(session, pbb, [1]) == ({1: 3}, 3)
    for receiver in receivers.values():
        assert ebc_output(session, receiver, ddn) == payloads


def test_first_vote_per_voter_counts(node_keys):
    from services.adversary import double_vote

    pbb = MemoryPbb()
    keys = node_keys(4)
    n = len(keys)
    session = BroadcastSession.open(pbb, b'sid-2', n, b'rand', make_roster(keys), ForcedElector({'check': {1, 2, 3}}))
    block = b'f' * 16
    ebc_send(session, pbb, 4, keys[4], block, lambda sender, v: None)
    session.close_send_round(pbb)
    received = {4: block}
    double_vote(session, pbb, ReceiverState(1, keys[1]), received)
    ebc_vote(session, pbb, ReceiverState(2, keys[2]), received)
    ebc_vote(session, pbb, ReceiverState(3, keys[3]), received)
    session.close_vote_round(pbb)
    assert len(pbb.retrieve(session.t1 + 1, session.t2, session.check_kw)) == 4
    assert tally_votes(session, pbb, [4]) == ({4: 2}, 3)


def test_posted_digests_first_authentic_post_wins(node_keys):
    pbb = MemoryPbb()
    keys = node_keys(3)
    session = BroadcastSession.open(pbb, b'sid-3', 3, b'rand', make_roster(keys), ForcedElector({}))
    with pytest.raises(ValueError):
        session.posted_digests(pbb)
    kw = session.send_kw
    pbb.post(kw, signed_post(kw, 2, keys[3].auth, block_id(b'forged')))
    pbb.post(kw, signed_post(kw, 2, keys[2].auth, block_id(b'one')))
    pbb.post(kw, signed_post(kw, 2, keys[2].auth, block_id(b'two')))
    pbb.post(kw, b'junk')
    pbb.post(kw, signed_post(kw, 3, keys[3].auth, b'short'))
    pbb.post(kw, u32(9) + block_id(b'three') + bytes(64))
    session.close_send_round(pbb)
    assert session.posted_digests(pbb) == {2: block_id(b'one')}
