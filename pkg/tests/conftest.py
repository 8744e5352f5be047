import random
import secrets
from dataclasses import dataclass

import pytest

from a2a_x402 import (
    A2AClient,
    A2AServer,
    AgentCard,
    Capabilities,
    Facilitator,
    InProcessTransport,
    Ledger,
    ServerConfig,
    Skill,
    Wallet,
    X402Params,
    make_x402_extension,
)
from a2a_x402 import crypto

PRICE = 1000
NOW = 1_700_000_000
SERVER_KEY = 0xB0B
CLIENT_KEY = 0xA11CE
CLIENT_FUNDS = 1_000_000


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(num, title): acceptance criterion identity")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Emit one visible pass/fail line per acceptance criterion."""
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    reporter = item.config.pluginmanager.getplugin("terminalreporter")
    status = "PASS" if report.passed else "FAIL"
    reporter.write_line(
        f"[acceptance {marker.args[0]}/9] {status}: {marker.args[1]}")


def make_card(token, network, pay_to, url="http://agent.sim", amount=PRICE,
              paid=True):
    extensions = ()
    if paid:
        extensions = (make_x402_extension(X402Params(
            asset=token, network=network, amount=amount, pay_to=pay_to,
            description="per-message fee")),)
    return AgentCard(
        name="echo-agent",
        description="Echoes messages back to the caller",
        url=url,
        version="1.0.0",
        capabilities=Capabilities(extensions=extensions),
        skills=(
            Skill(id="echo", name="Echo", description="Returns text verbatim"),
            Skill(id="shout", name="Shout", description="Uppercases text"),
        ),
    )


@dataclass
class World:
    ledger: Ledger
    token: str
    owner: str
    owner_key: int
    wallet: Wallet
    card: AgentCard
    facilitator: Facilitator
    server: A2AServer
    transport: InProcessTransport
    client: A2AClient

    @property
    def now(self):
        return NOW


def make_world(paid_skills=("echo",), amount=PRICE, fee=0,
               client_funds=CLIENT_FUNDS):
    ledger = Ledger(chain_id=31337, fee=fee)
    owner = crypto.address_of_key(SERVER_KEY)
    wallet = Wallet(private_key=CLIENT_KEY)
    token = ledger.deploy_token(owner, "MockUSDC", "USDC", 6,
                                mint=[(wallet.address, client_funds)])
    card = make_card(token, ledger.network, owner, amount=amount)
    facilitator = Facilitator(ledger)
    server = A2AServer(ServerConfig(card=card, facilitator=facilitator,
                                    paid_skills=set(paid_skills)))
    server.register_skill_handler("echo", lambda text: f"echo: {text}")
    server.register_skill_handler("shout", lambda text: text.upper())
    transport = InProcessTransport({card.url: server}, clock=lambda: NOW)
    client = A2AClient(transport)
    return World(ledger=ledger, token=token, owner=owner, owner_key=SERVER_KEY,
                 wallet=wallet, card=card, facilitator=facilitator,
                 server=server, transport=transport, client=client)


@pytest.fixture
def world():
    return make_world()


def sign_payment(world: World, auth):
    separator = crypto.domain_separator(world.ledger.token_domain(world.token))
    return crypto.sign(crypto.transfer_auth_digest(separator, auth),
                       world.wallet.private_key)


def fresh_auth(world: World, value=PRICE, now=NOW, to=None, validity=60,
               nonce=None):
    return crypto.TransferAuthorization(
        from_addr=world.wallet.address,
        to_addr=to or world.owner,
        value=value,
        valid_after=now - 1,
        valid_before=now + validity,
        nonce=nonce or secrets.token_bytes(32),
    )


def random_valid_card(rng: random.Random, token=None, network=None,
                      pay_to=None) -> AgentCard:
    def word():
        return "".join(rng.choice("abcdefghijklmnopqrstuvwxyz")
                       for _ in range(rng.randint(3, 10)))

    n_skills = rng.randint(1, 4)
    skills = tuple(
        Skill(id=f"{word()}-{i}", name=word().title(),
              description=" ".join(word() for _ in range(rng.randint(1, 5))))
        for i in range(n_skills)
    )
    flags = {word(): rng.choice([True, False])
             for _ in range(rng.randint(0, 3))}
    extensions = ()
    if token and rng.random() < 0.5:
        extensions = (make_x402_extension(X402Params(
            asset=token, network=network, amount=rng.randint(0, 10_000),
            pay_to=pay_to, description=word())),)
    return AgentCard(
        name=word().title(),
        description=" ".join(word() for _ in range(rng.randint(2, 8))),
        url=f"https://{word()}.example/{word()}",
        version=f"{rng.randint(0, 9)}.{rng.randint(0, 9)}.{rng.randint(0, 20)}",
        capabilities=Capabilities(flags=flags, extensions=extensions),
        default_input_modes=("text/plain",),
        default_output_modes=rng.choice([("application/json",),
                                         ("text/plain", "application/json")]),
        skills=skills,
    )


def make_signed_payload(world: World, auth=None, now=NOW):
    from a2a_x402.x402 import SignedPaymentPayload
    auth = auth or fresh_auth(world, now=now)
    return SignedPaymentPayload(network=world.ledger.network,
                                authorization=auth,
                                signature=sign_payment(world, auth))


def requirements_for(world: World, amount=None):
    from a2a_x402.x402 import build_payment_requirements
    from a2a_x402 import extract_x402_params
    params = extract_x402_params(world.card)
    if amount is not None:
        from dataclasses import replace
        params = replace(params, amount=amount)
    return build_payment_requirements(params, f"{world.card.url}#echo")


def adversarial_case(world: World, kind: str, rng: random.Random, now=NOW):
    """One corrupted (payload, requirements) pair plus its expected reason.

    Each corruption is built so earlier checks in the facilitator's fixed
    order still pass: signed-field corruptions are re-signed, so only the
    targeted check trips.
    """
    from a2a_x402.x402 import SignedPaymentPayload
    reqs = requirements_for(world)
    value = reqs.max_amount_required

    def signed(auth):
        return SignedPaymentPayload(network=world.ledger.network,
                                    authorization=auth,
                                    signature=sign_payment(world, auth))

    if kind == "signature-bit-flip":
        auth = fresh_auth(world, value=value, now=now)
        sig = sign_payment(world, auth)
        bit = 1 << rng.randint(0, 7)
        sig = crypto.Signature(r=sig.r ^ bit, s=sig.s, v=sig.v)
        return SignedPaymentPayload(network=world.ledger.network,
                                    authorization=auth, signature=sig), \
            reqs, "BadSignature"
    if kind == "expired":
        auth = crypto.TransferAuthorization(
            from_addr=world.wallet.address, to_addr=world.owner, value=value,
            valid_after=now - 1000, valid_before=now - rng.randint(1, 500),
            nonce=secrets.token_bytes(32))
        return signed(auth), reqs, "Expired"
    if kind == "not-yet-valid":
        auth = crypto.TransferAuthorization(
            from_addr=world.wallet.address, to_addr=world.owner, value=value,
            valid_after=now + rng.randint(1, 500), valid_before=now + 1000,
            nonce=secrets.token_bytes(32))
        return signed(auth), reqs, "NotYetValid"
    if kind == "wrong-payee":
        other = crypto.address_of_key(rng.randint(10_000, 20_000))
        auth = fresh_auth(world, value=value, now=now, to=other)
        return signed(auth), reqs, "WrongPayee"
    if kind == "amount-too-low":
        auth = fresh_auth(world, value=rng.randint(0, value - 1), now=now)
        return signed(auth), reqs, "AmountTooLow"
    if kind == "unknown-asset":
        bogus = crypto.address_of_key(rng.randint(20_001, 30_000))
        bad_reqs = requirements_for(world)
        from a2a_x402.x402 import PaymentRequirements, _reqs_kwargs
        bad_reqs = PaymentRequirements(**{**_reqs_kwargs(bad_reqs),
                                          "asset": bogus})
        return make_signed_payload(world, fresh_auth(world, value=value,
                                                     now=now)), \
            bad_reqs, "WrongAsset"
    if kind == "wrong-network":
        auth = fresh_auth(world, value=value, now=now)
        payload = make_signed_payload(world, auth)
        from dataclasses import replace
        return replace(payload, network=f"sim:{rng.randint(1, 30000)}"), \
            reqs, "WrongNetwork"
    if kind == "unfunded-payer":
        key = rng.randint(30_001, 40_000)
        broke = Wallet(private_key=key)
        auth = crypto.TransferAuthorization(
            from_addr=broke.address, to_addr=world.owner, value=value,
            valid_after=now - 1, valid_before=now + 60,
            nonce=secrets.token_bytes(32))
        separator = crypto.domain_separator(
            world.ledger.token_domain(world.token))
        sig = crypto.sign(crypto.transfer_auth_digest(separator, auth), key)
        from a2a_x402.x402 import SignedPaymentPayload as SPP
        return SPP(network=world.ledger.network, authorization=auth,
                   signature=sig), reqs, "InsufficientFunds"
    raise ValueError(f"unknown adversarial kind {kind!r}")


ADVERSARIAL_KINDS = (
    "signature-bit-flip", "expired", "not-yet-valid", "wrong-payee",
    "amount-too-low", "unknown-asset", "wrong-network", "unfunded-payer",
)
