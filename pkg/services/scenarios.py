"""
Scenario drivers for the simulator: a DKG session, a standalone extended
broadcast, and checkpointing epochs. Each driver plays every node round by
round, lets corrupted nodes follow their policy, and records verdicts.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction

from config import Config
from services.adversary import (
    AdversaryPolicy, Behavior, Misbehavior, attempt_equivocation, build_policy, double_vote,
    forged_complaint_list, forged_multicast, malicious_deal, tamper_partial, withheld_recipients,
)
from services.broadcast import (
    DIGEST_POST_BYTES, BroadcastSession, Ddn, ReceiverState, ebc_finalize, ebc_output, ebc_send, ebc_vote,
    make_pbb, open_post, signed_post,
)
from services.checkpoint import (
    CKP_KEYWORD, CheckpointChain, CheckpointTx, SchnorrSignature, bootstrap_verify, build_configuration,
    challenge, checkpoint_digest, combine, nonce_dkg, partial_sign, robust_combine, schnorr_verify,
    verify_partial,
)
from services.committee import ForcedElector, RatioElector, choose_committee
from services.dkg import (
    NodeState, RosterEntry, SessionParams, finalize, round1_deal, round2_verify, round3_aggregate, sign_multicast,
)
from services.errors import ConfigError, ProtocolFailure
from services.group_crypto import (
    EncKeyPair, GroupElement, NodeKeys, Scalar, any_trust_ratio, honest_majority_ratio, tagged_hash,
)
from services.metrics import Metrics
from services.reporting import Report
from services.sharing import interpolate_zero
from services.simnet import Network
from services.weights import WeightVector, allocate_sub_ids
from utils import derive_rng

logger = logging.getLogger(__name__)

DEALING_BEHAVIORS = (Behavior.MALFORM_CIPHERTEXT, Behavior.WRONG_DEGREE)
TAMPERING_BEHAVIORS = (Behavior.MALFORM_CIPHERTEXT, Behavior.WRONG_DEGREE, Behavior.FORGE_COMPLAINT)


@dataclass
class SimContext:
    """What every session of one run shares"""
    config: object
    policy: AdversaryPolicy
    metrics: Metrics
    network: Network
    pbb: object
    report: Report
    honest: frozenset


@dataclass
class DkgRun:
    outputs: dict = field(default_factory=dict)
    states: dict = field(default_factory=dict)
    dealers: list = field(default_factory=list)
    complaints: int = 0
    equivocations: dict = field(default_factory=dict)


def _seed_bytes(seed):
    return str(seed).encode('utf-8')


def _context(config, policy, honest, n_nodes):
    metrics = Metrics()
    network = Network(metrics, latency_ms=config.latency_ms)
    pbb = make_pbb(config.pbb_backend, config.pbb_url, metrics)
    report = Report(config, metrics, honest=tuple(sorted(honest)), trace=network.trace)
    logger.debug(f'context for {n_nodes} nodes, honest={sorted(honest)}')
    return SimContext(config, policy, metrics, network, pbb, report, frozenset(honest))


def setup_nodes(seed, label, count, enc_of=None):
    """Deterministic key triples for `count` participants; enc_of(i) shares an encryption pair"""
    keys = {}
    for i in range(1, count + 1):
        enc = enc_of(i) if enc_of is not None else None
        keys[i] = NodeKeys.generate(derive_rng(seed, label, 'keys', i), rounds=Config.FS_ROUNDS, enc=enc)
    return keys


def make_roster(keys):
    return tuple(RosterEntry(k.enc.ek, k.vrf.rvk, k.sig.vk, k.auth.vk) for _, k in sorted(keys.items()))


def build_elector(config, n, t, policy, rng):
    """Forced committees (simulation mode) or VRF sortition at configured ratios"""
    s, c = config.deal_size(n), config.check_size(n)
    if config.forced_sortition:
        corrupted = policy.ever_corrupted()
        try:
            committees = {
                'deal': choose_committee(rng, n, s, corrupted, policy.pinned.get('deal', ())),
                'agree': choose_committee(rng, n, s, corrupted, policy.pinned.get('agree', ())),
                'check': choose_committee(rng, n, c, corrupted, policy.pinned.get('check', ()),
                                          honest_majority=True),
            }
        except ValueError as exc:
            raise ConfigError(f'forced sortition for n={n}: {exc}') from None
        return ForcedElector(committees)

    if config.auto_ratio:
        any_trust = any_trust_ratio(n, t, config.failure_bound)
        majority = honest_majority_ratio(n, t, config.failure_bound)
    else:
        any_trust = config.ratio if config.ratio is not None else Fraction(s, n)
        majority = config.ratio_hm if config.ratio_hm is not None else Fraction(c, n)
    return RatioElector({'deal': any_trust, 'agree': any_trust, 'check': majority})


# Broadcast rounds

def _first_per_sender(inbox):
    view = {}
    for sender, payload in inbox:
        view.setdefault(sender, payload)
    return view


def _board_round(ctx, params, keys, round_no, kind, payloads):
    """Full payloads posted on the board; every participant reads the same window"""
    kw = params.session_id + kind.encode('utf-8')
    t0 = ctx.pbb.get_counter()
    for sender in sorted(payloads):
        post = signed_post(kw, sender, keys[sender].auth, payloads[sender])
        ctx.pbb.post(kw, post)
        ctx.network.note_post(round_no, sender, len(post), kind)
        ctx.metrics.add_bytes('broadcast', len(payloads[sender]))
    view = {}
    for value, _ in ctx.pbb.retrieve(t0 + 1, ctx.pbb.get_counter(), kw):
        opened = open_post(kw, value, params.roster)
        if opened is not None:
            view.setdefault(*opened)
    view = dict(sorted(view.items()))
    return {i: dict(view) for i in range(1, params.n + 1) if not ctx.policy.is_silent(i, round_no)}


def _extended_round(ctx, params, keys, round_no, kind, payloads, serve=None):
    """Digest on the board, payload multicast, committee vote, DDN fallback"""
    n = params.n
    everyone = list(range(1, n + 1))
    sid = tagged_hash(b'EBC-SESSION', params.session_id, kind.encode('utf-8'))
    session = BroadcastSession.open(ctx.pbb, sid, n, params.rand, params.roster, params.elector)

    for sender in sorted(payloads):
        recipients = serve(sender, everyone) if serve is not None else everyone
        ebc_send(session, ctx.pbb, sender, keys[sender], payloads[sender],
                 lambda s, v, to=recipients: ctx.network.multicast(round_no, s, v, to, kind))
        ctx.network.note_post(round_no, sender, DIGEST_POST_BYTES, f'{kind}-digest')
        ctx.metrics.add_bytes('broadcast', len(payloads[sender]))
    session.close_send_round(ctx.pbb)
    ctx.network.barrier()

    inboxes = {i: _first_per_sender(ctx.network.take(i, kind)) for i in everyone}
    participants = [i for i in everyone if not ctx.policy.is_silent(i, round_no)]
    if not session.posted_digests(ctx.pbb):
        return {i: {} for i in participants}

    receivers = {}
    for i in participants:
        receiver = ReceiverState(i, keys[i])
        behavior = ctx.policy.behavior_at(i, round_no)
        with ctx.metrics.scope(i, 'sortition'):
            if behavior is not None and behavior.kind == Behavior.DOUBLE_VOTE:
                vote = double_vote(session, ctx.pbb, receiver, inboxes[i])
            else:
                vote = ebc_vote(session, ctx.pbb, receiver, inboxes[i])
        if vote is not None:
            ctx.network.note_post(round_no, i, len(vote), f'{kind}-vote')
        receivers[i] = receiver
    session.close_vote_round(ctx.pbb)

    ddn = Ddn(ctx.metrics, is_available=lambda nid: not ctx.policy.corrupted_at(nid, round_no))
    for i, receiver in receivers.items():
        with ctx.metrics.scope(i, 'sortition'):
            ebc_finalize(session, ctx.pbb, receiver, ddn)

    outputs = {}
    for i, receiver in receivers.items():
        try:
            outputs[i] = ebc_output(session, receiver, ddn)
        except ProtocolFailure:
            if i in ctx.honest:
                raise
            outputs[i] = {j: receiver.received.get(j) for j in receiver.digests}
    return outputs


def broadcast_round(ctx, params, keys, round_no, kind, payloads, serve=None):
    """Carry one broadcast round; returns each participant's view {sender: payload or None}"""
    if ctx.config.broadcast_mode == 'pbb':
        views = _board_round(ctx, params, keys, round_no, kind, payloads)
    else:
        views = _extended_round(ctx, params, keys, round_no, kind, payloads, serve)
    honest_views = [views[i] for i in sorted(views) if i in ctx.honest]
    agreed = all(view == honest_views[0] for view in honest_views)
    ctx.report.verdict('broadcast_agreement', agreed, f'{kind}: honest receivers saw different outputs')
    return views


def _delivered(views, n):
    return {i: [v for _, v in sorted(views.get(i, {}).items()) if v is not None] for i in range(1, n + 1)}


# DKG

def run_dkg_session(ctx, params, keys, label):
    """One Any-Trust DKG session with every node played in lockstep"""
    policy, metrics, network = ctx.policy, ctx.metrics, ctx.network
    n = params.n
    run = DkgRun()
    run.states = {i: NodeState(params, i, keys[i], rng=derive_rng(ctx.config.seed, label, 'node', i))
                  for i in range(1, n + 1)}

    payloads = {}
    for i, state in run.states.items():
        if policy.is_silent(i, 1):
            continue
        behavior = policy.behavior_at(i, 1)
        with metrics.scope(i, 'deal'):
            if behavior is not None and behavior.kind in DEALING_BEHAVIORS:
                deal = malicious_deal(state, behavior)
            else:
                deal = round1_deal(state)
        if deal is not None:
            payloads[i] = deal.to_bytes()
    run.dealers = sorted(payloads)
    logger.info(f'{label}: {len(run.dealers)} dealer(s) {run.dealers}')

    def serve(sender, everyone):
        behavior = policy.behavior_at(sender, 1)
        if behavior is not None and behavior.kind == Behavior.WITHHOLD_MULTICAST:
            return withheld_recipients(behavior, everyone, derive_rng(ctx.config.seed, label, 'withhold', sender))
        return everyone

    deals = _delivered(broadcast_round(ctx, params, keys, 1, 'deal', payloads, serve), n)

    everyone = list(range(1, n + 1))
    for i, state in run.states.items():
        if state.round != 2:
            continue
        if policy.adaptive_round(i) == 2:
            run.equivocations[i] = attempt_equivocation(state)
            logger.info(f'{label}: node {i} corrupted at round 2, equivocation '
                        f'{"succeeded" if run.equivocations[i] else "refused"}')
            continue
        if policy.is_silent(i, 2):
            continue
        with metrics.scope(i, 'verify'):
            complaints = round2_verify(state, deals[i])
        if i in ctx.honest:
            run.complaints += len(complaints or ())
        behavior = policy.behavior_at(i, 2)
        if behavior is not None and behavior.kind == Behavior.FORGE_COMPLAINT:
            multicast = forged_multicast(state, complaints)
        else:
            multicast = sign_multicast(state, complaints) if complaints else None
        if multicast is not None:
            network.multicast(2, i, multicast.to_bytes(), everyone, 'complaints')
    network.barrier()

    lists = {}
    for i, state in run.states.items():
        inbox = network.take(i, 'complaints')
        if state.round != 3 or policy.is_silent(i, 3):
            continue
        behavior = policy.behavior_at(i, 3)
        with metrics.scope(i, 'aggregate'):
            if behavior is not None and behavior.kind == Behavior.FORGE_COMPLAINT:
                complaint_list = forged_complaint_list(state)
            else:
                complaint_list = round3_aggregate(state, [payload for _, payload in inbox])
        if complaint_list is not None:
            lists[i] = complaint_list.to_bytes()

    agreed_lists = _delivered(broadcast_round(ctx, params, keys, 3, 'agree', lists), n)

    for i, state in run.states.items():
        if state.round != 4 or policy.is_silent(i, 4):
            continue
        with metrics.scope(i, 'finalize'):
            run.outputs[i] = finalize(state, agreed_lists[i])
    return run


def check_dkg(ctx, params, run, label):
    """Verdicts over one session's honest outputs; returns a reference output"""
    report, policy = ctx.report, ctx.policy
    outputs = {i: out for i, out in run.outputs.items() if i in ctx.honest}
    if len(outputs) < params.t + 1:
        report.verdict('consistency', False, f'{label}: only {len(outputs)} honest output(s)')
        return None

    views = {out.public_view() for out in outputs.values()}
    report.verdict('consistency', len(views) == 1, f'{label}: {len(views)} distinct honest outputs')
    ref = outputs[min(outputs)]

    with ctx.metrics.scope(0, 'audit'):
        points = {i: outputs[i].sk_share for i in sorted(outputs)[:params.t + 1]}
        sk = interpolate_zero(points)
        correct = GroupElement.base(sk) == ref.pk and all(
            GroupElement.base(out.sk_share) == ref.pk_share(i) for i, out in outputs.items())
    report.verdict('correctness', correct, f'{label}: shares do not interpolate to the public key')

    dealt = set(run.dealers)
    for dealer in sorted(policy.misbehaving_dealers() & dealt):
        misbehavior = policy.behaviors[dealer]
        if misbehavior.kind == Behavior.MALFORM_CIPHERTEXT:
            if any(misbehavior.hits(i) for i in ctx.honest):
                caught = all(dealer in out.disqualified for out in outputs.values())
                report.verdict('disqualification', caught, f'{label}: dealer {dealer} escaped disqualification')
        else:
            excluded = all(dealer not in out.qual for out in outputs.values())
            report.verdict('disqualification', excluded, f'{label}: high-degree dealer {dealer} qualified')

    honest_dealers = dealt - policy.ever_corrupted()
    framed = sorted({d for out in outputs.values() for d in out.disqualified} & honest_dealers)
    report.verdict('unforgeability', not framed, f'{label}: honest dealer(s) {framed} disqualified')

    leftovers = {i: run.states[i].erasure_audit() for i in outputs}
    dirty = {i: items for i, items in leftovers.items() if items}
    report.verdict('erasure', not dirty, f'{label}: secrets still held {dirty}')

    for node, equivocated in sorted(run.equivocations.items()):
        report.verdict('forward_security', not equivocated, f'{label}: node {node} re-signed round 1')
        if node in dealt:
            kept = any(r.sender == node and r.round == 1 for r in ctx.network.trace)
            counted = all(node in out.qual for out in outputs.values())
            report.verdict('trace_preserved', kept and counted,
                           f'{label}: round-1 deal of node {node} lost after corruption')
    return ref


def _dkg_params(config, n, t, policy, keys, label, session_id=None):
    seed = _seed_bytes(config.seed)
    if session_id is None:
        session_id = tagged_hash(b'SIM-SESSION', seed, label.encode('utf-8'))
    elector = build_elector(config, n, t, policy, derive_rng(config.seed, label, 'committees'))
    return SessionParams(n, t, tagged_hash(b'SIM-RAND', seed, label.encode('utf-8')),
                         session_id, make_roster(keys), elector=elector)


def run_dkg_scenario(config):
    n, t = config.n, config.t
    policy = build_policy(config.adversary, n, t, derive_rng(config.seed, 'adversary'))
    policy.validate(n, t)
    ctx = _context(config, policy, policy.honest_nodes(n), n)

    keys = setup_nodes(config.seed, 'dkg', n)
    params = _dkg_params(config, n, t, policy, keys, 'dkg')
    run = run_dkg_session(ctx, params, keys, 'dkg')
    ref = check_dkg(ctx, params, run, 'dkg')

    report = ctx.report
    report.outputs.update({
        'dealers': run.dealers,
        's_actual': len(run.dealers),
        'complaints': run.complaints,
        'exp_per_node': report.exp_per_node(),
    })
    if ref is not None:
        report.outputs.update({
            'pk': ref.pk.to_bytes().hex(),
            'qual': sorted(ref.qual),
            'disqualified': sorted(ref.disqualified),
        })
    logger.info(f'dkg finished: qual={report.outputs.get("qual")} exp/node={report.outputs["exp_per_node"]}')
    return report


# Standalone extended broadcast

def run_broadcast_scenario(config):
    n = config.n
    bound = (n - 1) // 3
    senders = sorted(derive_rng(config.seed, 'senders').sample(range(1, n + 1), config.senders))
    byzantine = senders[0] if config.sender_policy != 'honest' else None
    receiver_bound = max(bound - (1 if byzantine is not None else 0), 0)
    policy = build_policy(config.adversary, n, receiver_bound, derive_rng(config.seed, 'adversary'))
    policy.validate(n, receiver_bound)
    if byzantine is not None:
        policy = AdversaryPolicy(policy.name, policy.corrupted | {byzantine}, policy.adaptive,
                                 policy.behaviors, policy.pinned)
    ctx = _context(config, policy, policy.honest_nodes(n), n)

    keys = setup_nodes(config.seed, 'broadcast', n)
    params = _dkg_params(config, n, bound, policy, keys, 'broadcast')
    payloads = {j: derive_rng(config.seed, 'payload', j).randbytes(config.message_len) for j in senders}

    def serve(sender, everyone):
        if sender != byzantine:
            return everyone
        if config.sender_policy == 'withhold':
            return []
        return withheld_recipients(Misbehavior(Behavior.WITHHOLD_MULTICAST, fraction=0.6), everyone,
                                   derive_rng(config.seed, 'partial', sender))

    views = broadcast_round(ctx, params, keys, 1, 'block', payloads, serve)

    report = ctx.report
    honest_views = {i: views[i] for i in views if i in ctx.honest}
    for j in senders:
        if j in ctx.honest:
            delivered = all(view.get(j) == payloads[j] for view in honest_views.values())
            report.verdict('validity', delivered, f'honest sender {j} not delivered everywhere')
    if honest_views:
        sample = honest_views[min(honest_views)]
        report.outputs['final'] = [j for j in senders if sample.get(j) is not None]
    report.outputs.update({'senders': senders, 'byzantine_sender': byzantine,
                           'message_len': config.message_len})
    return report


# Checkpointing

@dataclass
class _Epoch:
    config: object
    keys: dict
    outputs: dict


def _epoch_keys(config, label, allocation, epoch):
    """Fresh per-sub-ID keys; the sub-IDs of one validator share its encryption pair"""
    owners = allocation.owners()
    enc_pairs = {}
    for validator in sorted(set(owners)):
        dk = Scalar.random(derive_rng(config.seed, 'enc', epoch, validator))
        enc_pairs[validator] = EncKeyPair(GroupElement.base(dk), dk)
    return setup_nodes(config.seed, f'{label}-{epoch}', len(owners), enc_of=lambda i: enc_pairs[owners[i - 1]])


def _sign_epoch(ctx, prev, nonce_run, msg, label):
    """Partial signatures of the previous configuration's sub-IDs, robustly combined"""
    q, t = prev.config.q, prev.config.t
    nonce_ref = next(out for i, out in sorted(nonce_run.outputs.items()) if i in ctx.honest)
    nonce_shares, R = nonce_ref.pk_shares, nonce_ref.pk
    partials = []
    for i in sorted(set(prev.outputs) & set(nonce_run.outputs)):
        with ctx.metrics.scope(i, 'sign'):
            ps = partial_sign(nonce_run.outputs[i].sk_share, R, prev.outputs[i].sk_share, q, msg, signer=i)
        behavior = ctx.policy.behavior_at(i, 4)
        if behavior is not None and behavior.kind in TAMPERING_BEHAVIORS:
            ps = tamper_partial(ps)
        partials.append(ps)

    with ctx.metrics.scope(0, 'audit'):
        sig = robust_combine(partials, nonce_shares, prev.config.pk_shares, q, msg, t)
        c = challenge(R, q, msg)
        verified = [ps for ps in partials
                    if verify_partial(ps, nonce_shares[ps.signer - 1], prev.config.pk_shares[ps.signer - 1], c)]
        if len(verified) >= t + 2:
            first, last = combine(verified[:t + 1], t), combine(verified[-(t + 1):], t)
            ctx.report.verdict('subset_independence', first.to_bytes() == last.to_bytes(),
                               f'{label}: signer subsets combined to different signatures')
    return sig


def _long_range_attack(ctx, chain, stale, victim, rng):
    """Rebuild a retired key from t+1 old shares and spend an already consumed output"""
    shares = {i: out.sk_share for i, out in sorted(stale.outputs.items())[:stale.config.t + 1]}
    x = interpolate_zero(shares)
    k = Scalar.random(rng)
    R = GroupElement.base(k)
    unsigned = CheckpointTx(victim.tx_id, GroupElement.base(Scalar.random(rng)),
                            checkpoint_digest(stale.config.epoch + 1, b'rewritten history'), SchnorrSignature.empty())
    ps = partial_sign(k, R, x, stale.config.q, unsigned.message)
    forged = CheckpointTx(unsigned.input_ref, unsigned.output_key, unsigned.op_return, SchnorrSignature(R, ps.z_i))
    signed = schnorr_verify(stale.config.q, forged.message, forged.sig)
    rejected = not chain.submit(forged)
    ctx.report.verdict('long_range_rejected', signed and rejected,
                       'stale-key spend of a consumed checkpoint was accepted')


def run_checkpoint_scenario(config):
    weights = WeightVector.of(config.weights or (3,) * config.n)
    allocation = allocate_sub_ids(weights)
    m = allocation.sub_ids
    t_sub = (m - 1) // 2
    policy = build_policy(config.adversary, m, t_sub, derive_rng(config.seed, 'adversary'))
    policy.validate(m, t_sub)
    ctx = _context(config, policy, policy.honest_nodes(m), m)
    validators = tuple(enumerate(weights.w, 1))
    chain = CheckpointChain(ctx.pbb)

    def key_epoch(epoch):
        label = f'key-{epoch}'
        keys = _epoch_keys(config, 'key', allocation, epoch)
        params = _dkg_params(config, m, t_sub, policy, keys, label)
        run = run_dkg_session(ctx, params, keys, label)
        ref = check_dkg(ctx, params, run, label)
        if ref is None:
            raise ProtocolFailure(f'epoch {epoch}: no honest DKG output')
        return _Epoch(build_configuration(epoch, validators, allocation, ref), keys, run.outputs)

    def block(epoch):
        return derive_rng(config.seed, 'block', epoch).randbytes(64)

    epochs = [key_epoch(0)]
    txs = [CheckpointTx.genesis(epochs[0].config.q, checkpoint_digest(0, block(0)))]
    genesis_id = chain.publish_genesis(txs[0])

    for epoch in range(1, config.epochs + 1):
        prev = epochs[-1]
        current = key_epoch(epoch)
        digest = checkpoint_digest(epoch, block(epoch))
        unsigned = CheckpointTx(txs[-1].tx_id, current.config.q, digest, SchnorrSignature.empty())

        def nonce_session(session_id, epoch=epoch):
            label = f'nonce-{epoch}'
            keys = _epoch_keys(config, 'nonce', allocation, epoch - 1)
            params = _dkg_params(config, m, t_sub, policy, keys, label, session_id)
            run = run_dkg_session(ctx, params, keys, label)
            check_dkg(ctx, params, run, label)
            return run

        nonce_run = nonce_dkg(nonce_session, epoch)
        sig = _sign_epoch(ctx, prev, nonce_run, unsigned.message, f'epoch {epoch}')
        tx = CheckpointTx(unsigned.input_ref, unsigned.output_key, unsigned.op_return, sig)
        ctx.report.verdict('checkpoint_accepted', chain.submit(tx), f'epoch {epoch}: checkpoint rejected')
        epochs.append(current)
        txs.append(tx)
        logger.info(f'epoch {epoch}: checkpoint {tx!r}')

    if config.long_range_attack and config.epochs >= 2:
        _long_range_attack(ctx, chain, epochs[1], txs[1], derive_rng(config.seed, 'long-range'))

    report = ctx.report
    recorded = ctx.pbb.retrieve(1, ctx.pbb.get_counter(), CKP_KEYWORD)
    expected = config.epochs + 1
    report.verdict('one_tx_per_epoch', len(recorded) == expected,
                   f'{len(recorded)} checkpoint records for {expected} expected')
    try:
        recovered = bootstrap_verify(ctx.pbb, genesis_id)
        report.verdict('bootstrap', recovered == txs[-1].op_return, 'bootstrap recovered a different digest')
    except ProtocolFailure as exc:
        report.verdict('bootstrap', False, str(exc))
    report.outputs.update({
        'sub_ids': m,
        'divisor': allocation.divisor,
        'transactions': len(recorded),
        'digest': txs[-1].op_return.hex(),
        'exp_per_node': report.exp_per_node(),
    })
    return report
