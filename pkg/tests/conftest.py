import random

import pytest

from models import init_db
from services.dkg import NodeState, SessionParams, finalize, round1_deal, round2_verify, round3_aggregate, sign_multicast
from services.group_crypto import NodeKeys
from services.scenarios import make_roster
from utils import derive_rng

SESSION_ID = bytes(range(32))
RAND = b'test-beacon'


@pytest.fixture
def rng():
    return random.Random(7)


@pytest.fixture
def session_factory():
    return init_db('sqlite://')


@pytest.fixture
def node_keys():
    """Factory: deterministic keys for nodes 1..n"""
    def make(n, seed=3):
        return {i: NodeKeys.generate(derive_rng(seed, 'keys', i)) for i in range(1, n + 1)}
    return make


@pytest.fixture
def session_params(node_keys):
    def make(n, t, elector=None, seed=3):
        keys = node_keys(n, seed)
        return SessionParams(n, t, RAND, SESSION_ID, make_roster(keys), elector=elector), keys
    return make


@pytest.fixture
def run_honest_dkg():
    """Play every node of a session honestly; deal_hook(state, deal) may replace a node's deal"""
    def run(params, keys, deal_hook=None, seed=5):
        states = {i: NodeState(params, i, keys[i], rng=derive_rng(seed, 'node', i)) for i in keys}
        deals = []
        for state in states.values():
            deal = deal_hook(state) if deal_hook else None
            deal = deal if deal is not None else round1_deal(state)
            if deal is not None:
                deals.append(deal.to_bytes())
        multicasts = []
        for state in states.values():
            complaints = round2_verify(state, deals)
            if complaints:
                multicasts.append(sign_multicast(state, complaints).to_bytes())
        lists = []
        for state in states.values():
            complaint_list = round3_aggregate(state, multicasts)
            if complaint_list is not None:
                lists.append(complaint_list.to_bytes())
        outputs = {i: finalize(state, lists) for i, state in states.items()}
        return states, outputs
    return run
