"""Operator command line: boot ledgers, deploy tokens/agents/registries,
run the server agent, execute paid calls, and inspect discovery state.

All commands accept --now so expiry scenarios replay deterministically.
Exit codes: 0 success, 1 domain error, 2 usage error, 3 transport error.
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click

from . import crypto
from .agentcard import (
    X402Params,
    make_x402_extension,
    parse_agent_json,
    to_agent_json,
)
from .client import (
    A2AClient,
    HttpxTransport,
    InProcessTransport,
    MODE_PROACTIVE,
    MODE_REACTIVE,
    Wallet,
)
from .discovery import AgentIndex, compute_reputation
from .errors import A2AXError, PaymentRejected, TransportError
from .facilitator import Facilitator
from .ledger import (
    DEFAULT_CHAIN_ID,
    Ledger,
    REGISTRY_PERMISSIONLESS,
)
from .server import A2AServer, ServerConfig
from .x402 import decode_settlement_header

EXIT_DOMAIN_ERROR = 1
EXIT_TRANSPORT_ERROR = 3


def _fail(message: str, exit_code: int = EXIT_DOMAIN_ERROR):
    click.echo(f"error: {message}", err=True)
    sys.exit(exit_code)


def _load_ledger(path: str) -> Ledger:
    try:
        return Ledger.from_json(Path(path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        _fail(f"cannot load ledger snapshot {path}: {exc}")


def _save_ledger(ledger: Ledger, path: str):
    Path(path).write_text(ledger.to_json())


def _read_key(source: str) -> int:
    """Key material comes from a hex file or an env var name; never echoed."""
    if os.path.exists(source):
        text = Path(source).read_text().strip()
    elif source in os.environ:
        text = os.environ[source].strip()
    else:
        _fail(f"key source {source!r} is neither a file nor an env var")
    try:
        return int(text.removeprefix("0x"), 16)
    except ValueError:
        _fail("key material is not hex")


def _load_card(path: str):
    try:
        return parse_agent_json(Path(path).read_text())
    except OSError as exc:
        _fail(f"cannot read card file: {exc}")
    except A2AXError as exc:
        _fail(f"invalid card: {exc}")


def _emit(ctx, obj, human_lines):
    if ctx.obj.get("json"):
        click.echo(json.dumps(obj, separators=(",", ":")))
    else:
        for line in human_lines:
            click.echo(line)


def _now_option(func):
    return click.option("--now", "now", type=int, default=None,
                        help="Logical clock (unix seconds); defaults to wall "
                             "clock.")(func)


def _resolve_now(now):
    return int(time.time()) if now is None else now


@click.group()
@click.option("--json", "json_mode", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(ctx, json_mode):
    ctx.ensure_object(dict)
    ctx.obj["json"] = json_mode


# -- ledger -----------------------------------------------------------------

@main.group()
def ledger():
    """Ledger snapshot management."""


@ledger.command("init")
@click.option("--chain-id", type=int, default=DEFAULT_CHAIN_ID, show_default=True)
@click.option("--genesis", "genesis_file", type=click.Path(exists=True),
              default=None, help="JSON object mapping address to native amount.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--force", is_flag=True, help="Overwrite an existing snapshot.")
@click.pass_context
def ledger_init(ctx, chain_id, genesis_file, out_path, force):
    if os.path.exists(out_path) and not force:
        _fail(f"{out_path} exists; pass --force to overwrite")
    genesis = []
    if genesis_file:
        try:
            obj = json.loads(Path(genesis_file).read_text())
            if not isinstance(obj, dict):
                raise ValueError("genesis must be a JSON object")
            genesis = [(addr, int(amount)) for addr, amount in obj.items()]
            for addr, _ in genesis:
                if not crypto.is_address(addr):
                    raise ValueError(f"bad address {addr!r}")
        except (ValueError, TypeError) as exc:
            _fail(f"malformed genesis file: {exc}")
    try:
        state = Ledger(chain_id=chain_id, genesis=genesis)
    except A2AXError as exc:
        _fail(str(exc))
    _save_ledger(state, out_path)
    _emit(ctx, {"snapshot": out_path, "chainId": chain_id,
                "accounts": len(genesis)},
          [f"ledger initialized at {out_path} (chain {chain_id}, "
           f"{len(genesis)} funded accounts)"])


# -- token ------------------------------------------------------------------

@main.group()
def token():
    """Token contract management."""


@token.command("deploy")
@click.option("--snapshot", required=True, type=click.Path(exists=True))
@click.option("--owner", required=True)
@click.option("--name", default="MockUSDC", show_default=True)
@click.option("--symbol", default="USDC", show_default=True)
@click.option("--decimals", type=int, default=6, show_default=True)
@click.option("--mint", "mint_file", type=click.Path(exists=True), default=None,
              help="JSON object mapping address to base-unit amount.")
@click.pass_context
def token_deploy(ctx, snapshot, owner, name, symbol, decimals, mint_file):
    state = _load_ledger(snapshot)
    mint = []
    if mint_file:
        obj = json.loads(Path(mint_file).read_text())
        mint = [(addr, int(amount)) for addr, amount in obj.items()]
    address = state.deploy_token(owner, name, symbol, decimals, mint)
    _save_ledger(state, snapshot)
    _emit(ctx, {"token": address}, [address])


# -- agent ------------------------------------------------------------------

@main.group()
def agent():
    """Agent contract deployment and serving."""


@agent.command("deploy")
@click.option("--snapshot", required=True, type=click.Path(exists=True))
@click.option("--card", "card_file", required=True, type=click.Path(exists=True))
@click.option("--owner", "key_source", required=True,
              help="Owner key: hex file path or env var name.")
@_now_option
@click.pass_context
def agent_deploy(ctx, snapshot, card_file, key_source, now):
    state = _load_ledger(snapshot)
    card = _load_card(card_file)
    owner = crypto.address_of_key(_read_key(key_source))
    try:
        address = state.deploy_agent(owner, card, _resolve_now(now))
    except A2AXError as exc:
        _fail(str(exc))
    _save_ledger(state, snapshot)
    _emit(ctx, {"agent": address, "owner": owner}, [address])


@agent.command("serve")
@click.option("--snapshot", required=True, type=click.Path(exists=True))
@click.option("--card", "card_file", required=True, type=click.Path(exists=True))
@click.option("--port", type=int, default=8402, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--paid-skill", "paid_skills", multiple=True)
@click.pass_context
def agent_serve(ctx, snapshot, card_file, port, host, paid_skills):
    import uvicorn

    from .server import create_server_app

    state = _load_ledger(snapshot)
    card = _load_card(card_file)
    facilitator = Facilitator(state)
    try:
        config = ServerConfig(card=card, facilitator=facilitator,
                              paid_skills=set(paid_skills))
    except ValueError as exc:
        _fail(str(exc))
    server = A2AServer(config)
    for skill in card.skills:
        server.register_skill_handler(
            skill.id, lambda text, s=skill: f"[{s.id}] {text}")
    app = create_server_app(server)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        _save_ledger(state, snapshot)


# -- client -----------------------------------------------------------------

@main.command("send")
@click.option("--to", "base_url", default=None, help="Server base URL.")
@click.option("--contract", default=None, help="Agent contract address.")
@click.option("--snapshot", type=click.Path(exists=True), default=None,
              help="Ledger snapshot (required with --contract).")
@click.option("--skill", "skill_id", required=True)
@click.option("--message", required=True)
@click.option("--key", "key_source", required=True,
              help="Payer key: hex file path or env var name.")
@click.option("--mode", type=click.Choice([MODE_REACTIVE, MODE_PROACTIVE]),
              default=MODE_REACTIVE, show_default=True)
@click.option("--max-spend", type=int, default=None)
@_now_option
@click.pass_context
def client_send(ctx, base_url, contract, snapshot, skill_id, message,
                key_source, mode, max_spend, now):
    if (base_url is None) == (contract is None):
        _fail("pass exactly one of --to or --contract", 2)
    wallet = Wallet(private_key=_read_key(key_source))
    client = A2AClient(HttpxTransport(), max_spend=max_spend)
    try:
        if contract is not None:
            if snapshot is None:
                _fail("--contract needs --snapshot", 2)
            state = _load_ledger(snapshot)
            card = A2AClient.discover_by_contract(state, contract)
        else:
            card = client.discover_by_url(base_url)
        result = client.paid_send(base_url or card.url, card, skill_id, message,
                                  wallet, _resolve_now(now), mode=mode)
    except PaymentRejected as exc:
        _fail(f"payment rejected: {exc}")
    except TransportError as exc:
        _fail(str(exc), EXIT_TRANSPORT_ERROR)
    except A2AXError as exc:
        _fail(str(exc))
    receipt_obj = result.receipt.to_obj() if result.receipt else None
    _emit(ctx, {"response": result.response, "receipt": receipt_obj,
                "roundTrips": result.round_trips},
          [f"result: {json.dumps(result.response)}",
           f"receipt: {json.dumps(receipt_obj)}",
           f"round-trips: {result.round_trips}"])


# -- discovery --------------------------------------------------------------

@main.command("discover")
@click.option("--snapshot", required=True, type=click.Path(exists=True))
@click.option("--registry", default=None)
@click.option("--factory", default=None)
@click.option("--indexer", is_flag=True)
@click.option("--skill", "skill_keyword", default=None)
@click.option("--active", "active_only", is_flag=True)
@click.option("--min-score", type=int, default=None)
@_now_option
@click.pass_context
def discover(ctx, snapshot, registry, factory, indexer, skill_keyword,
             active_only, min_score, now):
    chosen = [x for x in (registry, factory, indexer or None) if x]
    if len(chosen) != 1:
        _fail("pass exactly one of --registry, --factory, --indexer", 2)
    state = _load_ledger(snapshot)
    try:
        if registry:
            agents = state.registry_list(registry)
            _emit(ctx, {"agents": agents}, agents or ["(empty)"])
        elif factory:
            agents = state.factory_list(factory)
            _emit(ctx, {"agents": agents}, agents or ["(empty)"])
        else:
            index = AgentIndex().scan(state, now=_resolve_now(now))
            results = index.query(skill_keyword=skill_keyword,
                                  active_only=active_only, min_score=min_score)
            obj = [{"address": addr, "reputation": rep.to_obj()}
                   for addr, rep in results]
            _emit(ctx, {"agents": obj},
                  [f"{addr} score={rep.score}" for addr, rep in results]
                  or ["(empty)"])
    except A2AXError as exc:
        _fail(str(exc))


@main.command("reputation")
@click.option("--snapshot", required=True, type=click.Path(exists=True))
@click.option("--agent", "agent_addr", required=True)
@_now_option
@click.pass_context
def reputation(ctx, snapshot, agent_addr, now):
    state = _load_ledger(snapshot)
    try:
        report = compute_reputation(state, agent_addr, _resolve_now(now))
    except A2AXError as exc:
        _fail(str(exc))
    _emit(ctx, report.to_obj(), [json.dumps(report.to_obj(), indent=2)])


# -- demo -------------------------------------------------------------------

@main.group()
def demo():
    """Scripted end-to-end scenarios."""


def run_e2e_demo(now: int = 1_700_000_000, tamper_signature: bool = False,
                 replay: bool = False) -> dict:
    """Five-phase paid-call scenario on an in-process ledger.

    Returns a transcript plus the facts the caller asserts on; raises
    AssertionError when a phase assertion fails.
    """
    from .agentcard import AgentCard, Capabilities, Skill
    from .x402 import PAYMENT_HEADER
    from .server import HttpRequest

    transcript = []
    price = 1000

    state = Ledger(chain_id=DEFAULT_CHAIN_ID)
    server_key, client_key = 0xB0B, 0xA11CE
    server_owner = crypto.address_of_key(server_key)
    client_wallet = Wallet(private_key=client_key)
    token_addr = state.deploy_token(server_owner, "MockUSDC", "USDC", 6,
                                    mint=[(client_wallet.address, 1_000_000)])
    card = AgentCard(
        name="echo-agent",
        description="Echoes paid messages back to the caller",
        url="http://agent-b.sim",
        version="1.0.0",
        capabilities=Capabilities(extensions=(make_x402_extension(X402Params(
            asset=token_addr, network=state.network, amount=price,
            pay_to=server_owner, description="per-message fee")),)),
        skills=(Skill(id="echo", name="Echo",
                      description="Returns the message verbatim"),),
    )
    registry_addr = state.deploy_registry(server_owner, REGISTRY_PERMISSIONLESS)
    agent_addr = state.deploy_agent(server_owner, card, now)
    state.registry_enroll(registry_addr, server_owner, agent_addr, now)
    transcript.append(f"setup: token {token_addr}, agent contract {agent_addr}, "
                      f"registry {registry_addr}")

    facilitator = Facilitator(state)
    server = A2AServer(ServerConfig(card=card, facilitator=facilitator,
                                    paid_skills={"echo"}))
    server.register_skill_handler("echo", lambda text: f"echo: {text}")
    transport = InProcessTransport({card.url: server}, clock=lambda: now)
    client = A2AClient(transport)

    # Phase 1: discovery via registry + contract
    listed = state.registry_list(registry_addr)
    assert agent_addr in listed, "agent missing from registry"
    discovered = A2AClient.discover_by_contract(state, agent_addr)
    assert to_agent_json(discovered) == to_agent_json(card)
    transcript.append(f"phase 1: discovered {discovered.name} via registry "
                      f"and contract {agent_addr}")

    payee_before = state.balance_of(token_addr, server_owner)
    payer_before = state.balance_of(token_addr, client_wallet.address)

    # Phase 2: unpaid request draws a 402 with requirements
    unpaid = transport.request(
        "POST", card.url + "/", headers={},
        body=A2AClient._rpc_body("echo", "ping"))
    assert unpaid.status == 402, f"expected 402, got {unpaid.status}"
    body = unpaid.json()
    assert body["accepts"][0]["payTo"] == server_owner
    transcript.append("phase 2: unpaid request answered with HTTP 402 and "
                      "payment requirements")

    if tamper_signature:
        reqs = server.requirements_for("echo")
        header = client._payment_header(reqs, client_wallet, now)
        import base64
        raw = bytearray(base64.b64decode(header))
        payload_obj = json.loads(raw.decode())
        sig = bytearray(bytes.fromhex(payload_obj["signature"][2:]))
        sig[10] ^= 0x01
        payload_obj["signature"] = "0x" + sig.hex()
        header = base64.b64encode(
            json.dumps(payload_obj, separators=(",", ":")).encode()).decode()
        transcript.append("phase 3: signed authorization, then tampered with "
                          "the signature")
        response = server.handle(HttpRequest(
            method="POST", path="/", headers={PAYMENT_HEADER: header},
            body=A2AClient._rpc_body("echo", "ping")), now=now)
        assert response.status == 402
        receipt = decode_settlement_header(
            response.header("X-PAYMENT-RESPONSE"))
        assert not receipt.success and receipt.error_reason == "BadSignature"
        assert state.balance_of(token_addr, server_owner) == payee_before
        transcript.append("phase 4: settlement rejected with BadSignature; "
                          "balances unchanged")
        return {"transcript": transcript, "outcome": "rejected",
                "reason": receipt.error_reason}

    # Phases 3-5: sign, pay, settle, consume the receipt
    result = client.paid_send(card.url, card, "echo", "ping", client_wallet,
                              now, mode=MODE_REACTIVE)
    transcript.append("phase 3: EIP-3009 authorization signed and base64-encoded "
                      "into X-PAYMENT")
    assert result.receipt is not None and result.receipt.success
    assert result.round_trips == 2
    tx_id = result.receipt.tx_id
    assert any(r.tx_id == tx_id for r in state.tx_log), "receipt txId not on ledger"
    transcript.append(f"phase 4: payment settled on-chain, tx {tx_id}")
    payee_after = state.balance_of(token_addr, server_owner)
    payer_after = state.balance_of(token_addr, client_wallet.address)
    assert payee_after - payee_before == price
    assert payer_before - payer_after == price
    reply = result.response["result"]["message"]["parts"][0]["text"]
    assert reply == "echo: ping"
    transcript.append(f"phase 5: receipt decoded, reply {reply!r}, payee "
                      f"balance +{price}")

    if replay:
        reqs = server.requirements_for("echo")
        header = client._payment_header(reqs, client_wallet, now)
        first = server.handle(HttpRequest(
            method="POST", path="/", headers={PAYMENT_HEADER: header},
            body=A2AClient._rpc_body("echo", "again")), now=now)
        assert first.status == 200
        second = server.handle(HttpRequest(
            method="POST", path="/", headers={PAYMENT_HEADER: header},
            body=A2AClient._rpc_body("echo", "again")), now=now)
        assert second.status == 402
        receipt = decode_settlement_header(second.header("X-PAYMENT-RESPONSE"))
        assert receipt.error_reason == "NonceUsed"
        transcript.append("replay: second settlement of the same payload "
                          "rejected with NonceUsed")

    return {"transcript": transcript, "outcome": "paid", "txId": tx_id,
            "amount": price}


@demo.command("e2e")
@click.option("--tamper-signature", is_flag=True)
@click.option("--replay", is_flag=True)
@_now_option
@click.pass_context
def demo_e2e(ctx, tamper_signature, replay, now):
    try:
        outcome = run_e2e_demo(now=_resolve_now(now if now is not None
                                                else 1_700_000_000),
                               tamper_signature=tamper_signature, replay=replay)
    except AssertionError as exc:
        _fail(f"scenario assertion failed: {exc}")
    _emit(ctx, outcome, outcome["transcript"] + [f"outcome: {outcome['outcome']}"])


if __name__ == "__main__":
    main()
