import random

import pytest

from a2a_x402 import crypto
from a2a_x402.crypto import Signature, TransferAuthorization
from a2a_x402.errors import (
    AlreadyEnrolled,
    AuthorizationExpired,
    AuthorizationNotYetValid,
    BadSignature,
    DuplicateAccount,
    InsufficientFunds,
    InvalidCard,
    NonceAlreadyUsed,
    NotAuthorized,
    NotOwner,
    UnknownAgent,
    UnknownToken,
)
from a2a_x402.ledger import (
    Ledger,
    REGISTRY_CURATED,
    REGISTRY_PERMISSIONLESS,
    TX_TOKEN_TRANSFER,
)

from conftest import NOW, fresh_auth, make_card, make_world, sign_payment

A = crypto.address_of_key(101)
B = crypto.address_of_key(102)


class TestGenesis:
    def test_empty(self):
        ledger = Ledger(chain_id=31337)
        assert ledger.height == 0
        assert ledger.tx_log == []
        assert ledger.accounts == {}

    def test_funded_account(self):
        ledger = Ledger(genesis=[(A, 500)])
        assert ledger.accounts[A] == 500

    def test_duplicate_address(self):
        with pytest.raises(DuplicateAccount):
            Ledger(genesis=[(A, 1), (A, 2)])


class TestToken:
    def test_deploy_defaults(self):
        ledger = Ledger()
        token = ledger.deploy_token(A, "MockUSDC", "USDC", 6)
        contract = ledger.tokens[token]
        assert (contract.symbol, contract.decimals) == ("USDC", 6)

    def test_mint(self):
        ledger = Ledger()
        token = ledger.deploy_token(A, "MockUSDC", "USDC", 6,
                                    mint=[(A, 1_000_000)])
        assert ledger.balance_of(token, A) == 1_000_000
        assert ledger.tokens[token].total_supply == 1_000_000

    def test_distinct_addresses_same_owner(self):
        ledger = Ledger()
        t1 = ledger.deploy_token(A, "T1", "T1", 6)
        t2 = ledger.deploy_token(A, "T2", "T2", 6)
        assert t1 != t2

    def test_unknown_token(self):
        with pytest.raises(UnknownToken):
            Ledger().balance_of("0x" + "11" * 20, A)


class TestTransferWithAuthorization:
    def test_valid_transfer(self, world):
        auth = fresh_auth(world, value=10)
        before_from = world.ledger.balance_of(world.token, world.wallet.address)
        record = world.ledger.transfer_with_authorization(
            world.token, auth, sign_payment(world, auth), NOW)
        assert world.ledger.balance_of(world.token, world.wallet.address) \
            == before_from - 10
        assert world.ledger.balance_of(world.token, world.owner) == 10
        assert world.ledger.nonce_used(world.token, auth.from_addr, auth.nonce)
        assert record.kind == TX_TOKEN_TRANSFER
        assert record.value == 10

    def test_replay_rejected(self, world):
        auth = fresh_auth(world)
        sig = sign_payment(world, auth)
        world.ledger.transfer_with_authorization(world.token, auth, sig, NOW)
        with pytest.raises(NonceAlreadyUsed):
            world.ledger.transfer_with_authorization(world.token, auth, sig, NOW)

    def test_expired(self, world):
        auth = fresh_auth(world, validity=60)
        sig = sign_payment(world, auth)
        with pytest.raises(AuthorizationExpired):
            world.ledger.transfer_with_authorization(
                world.token, auth, sig, auth.valid_before)

    def test_not_yet_valid(self, world):
        auth = fresh_auth(world)
        sig = sign_payment(world, auth)
        with pytest.raises(AuthorizationNotYetValid):
            world.ledger.transfer_with_authorization(
                world.token, auth, sig, auth.valid_after)

    def test_bad_signature(self, world):
        auth = fresh_auth(world)
        sig = sign_payment(world, auth)
        bad = Signature(r=sig.r ^ 0xFF, s=sig.s, v=sig.v)
        with pytest.raises(BadSignature):
            world.ledger.transfer_with_authorization(world.token, auth, bad, NOW)

    def test_insufficient_funds(self, world):
        auth = fresh_auth(world, value=10 ** 12)
        with pytest.raises(InsufficientFunds):
            world.ledger.transfer_with_authorization(
                world.token, auth, sign_payment(world, auth), NOW)

    def test_conservation(self, world):
        total = world.ledger.tokens[world.token].total_supply
        for _ in range(5):
            auth = fresh_auth(world, value=7)
            world.ledger.transfer_with_authorization(
                world.token, auth, sign_payment(world, auth), NOW)
        assert sum(world.ledger.tokens[world.token].balances.values()) == total

    def test_fee_charged_to_submitter(self):
        world = make_world(fee=5)
        submitter = crypto.address_of_key(900)
        world.ledger.accounts[submitter] = 12
        auth = fresh_auth(world, value=10)
        world.ledger.transfer_with_authorization(
            world.token, auth, sign_payment(world, auth), NOW,
            submitter=submitter)
        assert world.ledger.accounts[submitter] == 7

    def test_fee_insufficient(self):
        world = make_world(fee=5)
        submitter = crypto.address_of_key(900)
        auth = fresh_auth(world, value=10)
        with pytest.raises(InsufficientFunds):
            world.ledger.transfer_with_authorization(
                world.token, auth, sign_payment(world, auth), NOW,
                submitter=submitter)


class TestAgentContract:
    def test_deploy_and_round_trip(self, world):
        card = make_card(world.token, world.ledger.network, world.owner,
                         url="http://other.sim")
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        from a2a_x402 import to_agent_json
        assert world.ledger.get_agent_json(agent) == to_agent_json(card)

    def test_invalid_card_rejected(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        broken = type(card)(**{**card.__dict__, "url": "not-a-url"})
        with pytest.raises(InvalidCard) as err:
            world.ledger.deploy_agent(world.owner, broken, NOW)
        assert any("url" in v for v in err.value.violations)

    def test_two_agents_distinct_addresses(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        a1 = world.ledger.deploy_agent(world.owner, card, NOW)
        a2 = world.ledger.deploy_agent(world.owner, card, NOW)
        assert a1 != a2

    def test_update_card_by_owner(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        updated = type(card)(**{**card.__dict__, "description": "new words"})
        world.ledger.update_card(agent, world.owner, updated, NOW + 1)
        assert world.ledger.agents[agent].card.description == "new words"

    def test_update_card_non_owner(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        with pytest.raises(NotOwner):
            world.ledger.update_card(agent, B, card, NOW + 1)
        assert world.ledger.agents[agent].card.description == card.description

    def test_update_card_invalid_replacement_atomic(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        broken = type(card)(**{**card.__dict__, "skills": ()})
        with pytest.raises(InvalidCard):
            world.ledger.update_card(agent, world.owner, broken, NOW + 1)
        assert world.ledger.agents[agent].card == card

    def test_heartbeat(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        world.ledger.heartbeat(agent, world.owner, NOW + 100)
        assert world.ledger.agents[agent].last_heartbeat == NOW + 100
        with pytest.raises(NotOwner):
            world.ledger.heartbeat(agent, B, NOW + 200)

    def test_is_active_window(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        window = 86400
        assert world.ledger.is_active(agent, NOW, window)
        assert world.ledger.is_active(agent, NOW + window, window)
        assert not world.ledger.is_active(agent, NOW + window + 1, window)
        with pytest.raises(UnknownAgent):
            world.ledger.is_active("0x" + "22" * 20, NOW, window)

    def test_payment_reactivates_agent(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        window = 86400
        later = NOW + window + 1000
        assert not world.ledger.is_active(agent, later, window)
        auth = fresh_auth(world, value=5, now=later, to=agent)
        world.ledger.transfer_with_authorization(
            world.token, auth, sign_payment(world, auth), later)
        # oracle: brute-force max over the whole log
        oracle_last = max(
            [world.ledger.agents[agent].last_heartbeat]
            + [r.timestamp for r in world.ledger.tx_log
               if agent in (r.sender, r.to, r.via)])
        assert oracle_last >= later - window
        assert world.ledger.is_active(agent, later, window)

    def test_withdraw_token(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        auth = fresh_auth(world, value=100, to=agent)
        world.ledger.transfer_with_authorization(
            world.token, auth, sign_payment(world, auth), NOW)
        world.ledger.withdraw(agent, world.owner, world.token, 100, world.owner,
                              NOW)
        assert world.ledger.balance_of(world.token, agent) == 0
        assert world.ledger.balance_of(world.token, world.owner) == 100

    def test_withdraw_non_owner(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        with pytest.raises(NotOwner):
            world.ledger.withdraw(agent, B, world.token, 1, B, NOW)

    def test_withdraw_too_much(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        with pytest.raises(InsufficientFunds):
            world.ledger.withdraw(agent, world.owner, world.token, 1,
                                  world.owner, NOW)

    def test_withdraw_unapproved_token(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        other = world.ledger.deploy_token(world.owner, "Other", "OTH", 18)
        with pytest.raises(NotAuthorized):
            world.ledger.withdraw(agent, world.owner, other, 1, world.owner, NOW)

    def test_native_deposit_and_withdraw(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        world.ledger.accounts[B] = 50
        world.ledger.deposit_native(B, agent, 30, NOW)
        assert world.ledger.agents[agent].native_balance == 30
        world.ledger.withdraw(agent, world.owner, None, 30, world.owner, NOW)
        assert world.ledger.agents[agent].native_balance == 0
        assert world.ledger.accounts[world.owner] == 30


class TestRegistry:
    def _agent(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        return world.ledger.deploy_agent(world.owner, card, NOW)

    def test_permissionless_self_enroll(self, world):
        registry = world.ledger.deploy_registry(world.owner,
                                                REGISTRY_PERMISSIONLESS)
        agent = self._agent(world)
        world.ledger.registry_enroll(registry, world.owner, agent, NOW)
        assert world.ledger.registry_list(registry) == [agent]

    def test_permissionless_stranger_rejected(self, world):
        registry = world.ledger.deploy_registry(world.owner,
                                                REGISTRY_PERMISSIONLESS)
        agent = self._agent(world)
        with pytest.raises(NotAuthorized):
            world.ledger.registry_enroll(registry, B, agent, NOW)

    def test_curated_by_curator_only(self, world):
        registry = world.ledger.deploy_registry(world.owner, REGISTRY_CURATED,
                                                curators=[B])
        agent = self._agent(world)
        with pytest.raises(NotAuthorized):
            world.ledger.registry_enroll(registry, world.owner, agent, NOW)
        world.ledger.registry_enroll(registry, B, agent, NOW)
        assert world.ledger.registry_list(registry) == [agent]

    def test_double_enroll(self, world):
        registry = world.ledger.deploy_registry(world.owner,
                                                REGISTRY_PERMISSIONLESS)
        agent = self._agent(world)
        world.ledger.registry_enroll(registry, world.owner, agent, NOW)
        with pytest.raises(AlreadyEnrolled):
            world.ledger.registry_enroll(registry, world.owner, agent, NOW)

    def test_remove(self, world):
        registry = world.ledger.deploy_registry(world.owner,
                                                REGISTRY_PERMISSIONLESS)
        agent = self._agent(world)
        world.ledger.registry_enroll(registry, world.owner, agent, NOW)
        world.ledger.registry_remove(registry, world.owner, agent, NOW)
        assert world.ledger.registry_list(registry) == []

    def test_enrollment_order_preserved(self, world):
        registry = world.ledger.deploy_registry(world.owner,
                                                REGISTRY_PERMISSIONLESS)
        agents = [self._agent(world) for _ in range(3)]
        for i, agent in enumerate(agents):
            world.ledger.registry_enroll(registry, world.owner, agent, NOW + i)
        assert world.ledger.registry_list(registry) == agents


class TestTxLog:
    def test_empty(self):
        assert Ledger().query_tx_log() == []

    def test_filter_by_kind_and_to(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        for _ in range(3):
            auth = fresh_auth(world, value=5, to=agent)
            world.ledger.transfer_with_authorization(
                world.token, auth, sign_payment(world, auth), NOW)
        found = world.ledger.query_tx_log(to=agent, kind=TX_TOKEN_TRANSFER)
        assert len(found) == 3

    def test_since_matches_brute_force(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        for i in range(6):
            auth = fresh_auth(world, value=1, now=NOW + 10 * i, to=agent)
            world.ledger.transfer_with_authorization(
                world.token, auth, sign_payment(world, auth), NOW + 10 * i)
        cut = NOW + 25
        found = world.ledger.query_tx_log(since=cut)
        oracle = [r for r in world.ledger.tx_log if r.timestamp >= cut]
        assert found == oracle

    def test_randomized_filters_match_brute_force(self, world):
        rng = random.Random(7)
        card = make_card(world.token, world.ledger.network, world.owner)
        agents = [world.ledger.deploy_agent(world.owner, card, NOW)
                  for _ in range(3)]
        for i in range(50):
            auth = fresh_auth(world, value=rng.randint(1, 9),
                              now=NOW + i, to=rng.choice(agents))
            world.ledger.transfer_with_authorization(
                world.token, auth, sign_payment(world, auth), NOW + i)
        for _ in range(50):
            to = rng.choice([None] + agents)
            kind = rng.choice([None, TX_TOKEN_TRANSFER, "AgentDeploy"])
            since = rng.choice([None, NOW + rng.randint(0, 60)])
            found = world.ledger.query_tx_log(to=to, kind=kind, since=since)
            oracle = [r for r in world.ledger.tx_log
                      if (to is None or r.to == to)
                      and (kind is None or r.kind == kind)
                      and (since is None or r.timestamp >= since)]
            assert found == oracle

    def test_tx_ids_unique(self, world):
        for i in range(20):
            auth = fresh_auth(world, value=1, now=NOW + i)
            world.ledger.transfer_with_authorization(
                world.token, auth, sign_payment(world, auth), NOW + i)
        ids = [r.tx_id for r in world.ledger.tx_log]
        assert len(ids) == len(set(ids))


class TestSnapshots:
    def test_round_trip(self, world):
        card = make_card(world.token, world.ledger.network, world.owner)
        agent = world.ledger.deploy_agent(world.owner, card, NOW)
        auth = fresh_auth(world, value=9, to=agent)
        world.ledger.transfer_with_authorization(
            world.token, auth, sign_payment(world, auth), NOW)
        text = world.ledger.to_json()
        assert Ledger.from_json(text).to_json() == text

    def test_replay_determinism(self):
        def run():
            world = make_world()
            rng = random.Random(99)
            card = make_card(world.token, world.ledger.network, world.owner)
            agent = world.ledger.deploy_agent(world.owner, card, NOW)
            for i in range(10):
                auth = fresh_auth(
                    world, value=rng.randint(1, 20), now=NOW + i, to=agent,
                    nonce=rng.getrandbits(256).to_bytes(32, "big"))
                world.ledger.transfer_with_authorization(
                    world.token, auth, sign_payment(world, auth), NOW + i)
            world.ledger.heartbeat(agent, world.owner, NOW + 100)
            return world.ledger.to_json()

        assert run() == run()
