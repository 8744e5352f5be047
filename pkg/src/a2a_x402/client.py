"""Client agent: card discovery (well-known URI or on-chain) and paid
JSON-RPC calls, reactive (pay after a 402) or proactive (pay up front).

Transports are pluggable so tests can count round trips or run fully
in-process against an `A2AServer`.
"""

from __future__ import annotations

import itertools
import json
import secrets
from dataclasses import dataclass
from urllib.parse import urlparse

from . import crypto
from .agentcard import AgentCard, WELL_KNOWN_PATH, extract_x402_params, parse_agent_json
from .errors import (
    PaymentRejected,
    SpendCapExceeded,
    TransportError,
)
from .ledger import Ledger
from .server import A2AServer, HttpRequest, HttpResponse
from .x402 import (
    PAYMENT_HEADER,
    PAYMENT_RESPONSE_HEADER,
    SignedPaymentPayload,
    build_authorization,
    build_payment_requirements,
    decode_402_body,
    decode_settlement_header,
    encode_payment_header,
)

MODE_REACTIVE = "reactive"
MODE_PROACTIVE = "proactive"


@dataclass(frozen=True)
class Wallet:
    private_key: int
    address: str = ""

    def __post_init__(self):
        if not self.address:
            object.__setattr__(self, "address",
                               crypto.address_of_key(self.private_key))


@dataclass
class PaidSendResult:
    response: dict  # decoded JSON-RPC response
    receipt: object | None  # SettlementReceipt for paid calls
    round_trips: int


class InProcessTransport:
    """Routes requests straight into `A2AServer.handle`; no sockets.

    `clock` supplies the server-side logical time for each request.
    """

    def __init__(self, servers: dict[str, A2AServer], clock=None):
        self.servers = {base.rstrip("/"): srv for base, srv in servers.items()}
        self.clock = clock

    def request(self, method: str, url: str, headers=None,
                body: str = "") -> HttpResponse:
        parsed = urlparse(url)
        base = f"{parsed.scheme}://{parsed.netloc}"
        server = self.servers.get(base)
        if server is None:
            raise TransportError(f"no route to {base}")
        now = int(self.clock()) if self.clock else None
        return server.handle(HttpRequest(method=method, path=parsed.path or "/",
                                         headers=dict(headers or {}), body=body),
                             now=now)


class HttpxTransport:
    """Real HTTP transport; also accepts an httpx client (e.g. ASGI-backed)."""

    def __init__(self, client=None):
        import httpx
        self._client = client or httpx.Client(timeout=30.0)

    def request(self, method: str, url: str, headers=None,
                body: str = "") -> HttpResponse:
        import httpx
        try:
            raw = self._client.request(method, url, headers=headers or {},
                                       content=body.encode() if body else None)
        except httpx.HTTPError as exc:
            raise TransportError(f"{method} {url} failed: {exc}") from exc
        return HttpResponse(status=raw.status_code, headers=dict(raw.headers),
                            body=raw.text)


class CountingTransport:
    """Wraps another transport and counts round trips."""

    def __init__(self, inner):
        self.inner = inner
        self.count = 0

    def request(self, *args, **kwargs) -> HttpResponse:
        self.count += 1
        return self.inner.request(*args, **kwargs)


class A2AClient:
    def __init__(self, transport, max_spend: int | None = None,
                 preflight_ledger: Ledger | None = None):
        self.transport = transport
        self.max_spend = max_spend  # budget cap; None = requirements amount
        self.preflight_ledger = preflight_ledger  # optional balance pre-check

    # -- discovery ---------------------------------------------------------

    def discover_by_url(self, base_url: str) -> AgentCard:
        url = base_url.rstrip("/") + WELL_KNOWN_PATH
        response = self.transport.request("GET", url)
        if response.status != 200:
            raise TransportError(f"GET {url} returned {response.status}")
        return parse_agent_json(response.body)

    @staticmethod
    def discover_by_contract(ledger: Ledger, agent: str) -> AgentCard:
        return parse_agent_json(ledger.get_agent_json(agent))

    # -- paid calls --------------------------------------------------------

    def paid_send(self, base_url: str, card: AgentCard, skill_id: str,
                  message: str, wallet: Wallet, now: int,
                  mode: str = MODE_REACTIVE) -> PaidSendResult:
        if mode not in (MODE_REACTIVE, MODE_PROACTIVE):
            raise ValueError(f"unknown mode {mode!r}")
        url = base_url.rstrip("/") + "/"
        rpc_body = self._rpc_body(skill_id, message)
        round_trips = 0

        if mode == MODE_PROACTIVE:
            params = extract_x402_params(card)
            if params is None:
                raise ValueError("proactive mode needs the card's x402 extension")
            reqs = build_payment_requirements(params, f"{card.url}#{skill_id}")
            header = self._payment_header(reqs, wallet, now)
            response = self.transport.request(
                "POST", url, headers={PAYMENT_HEADER: header,
                                      "Content-Type": "application/json"},
                body=rpc_body)
            round_trips += 1
            return self._finish(response, round_trips)

        # reactive: try unpaid first
        response = self.transport.request(
            "POST", url, headers={"Content-Type": "application/json"},
            body=rpc_body)
        round_trips += 1
        if response.status != 402:
            return self._finish(response, round_trips)
        reqs = decode_402_body(response.body)
        header = self._payment_header(reqs, wallet, now)
        response = self.transport.request(
            "POST", url, headers={PAYMENT_HEADER: header,
                                  "Content-Type": "application/json"},
            body=rpc_body)
        round_trips += 1
        return self._finish(response, round_trips)

    def _payment_header(self, reqs, wallet: Wallet, now: int) -> str:
        cap = self.max_spend if self.max_spend is not None \
            else reqs.max_amount_required
        if reqs.max_amount_required > cap:
            raise SpendCapExceeded(
                f"requirements ask {reqs.max_amount_required} > cap {cap}")
        if self.preflight_ledger is not None:
            held = self.preflight_ledger.balance_of(reqs.asset, wallet.address)
            if held < reqs.max_amount_required:
                raise PaymentRejected(
                    f"pre-flight: balance {held} < {reqs.max_amount_required}")
        auth = build_authorization(reqs, wallet.address, now,
                                   validity_seconds=reqs.max_timeout_seconds,
                                   nonce=secrets.token_bytes(32))
        chain_id = _chain_id_of(reqs.network)
        separator = crypto.domain_separator(crypto.Eip712Domain(
            name=reqs.asset_name, version="1", chain_id=chain_id,
            verifying_contract=reqs.asset))
        signature = crypto.sign(crypto.transfer_auth_digest(separator, auth),
                                wallet.private_key)
        payload = SignedPaymentPayload(network=reqs.network, authorization=auth,
                                       signature=signature)
        return encode_payment_header(payload)

    @staticmethod
    def _rpc_body(skill_id: str, message: str) -> str:
        rpc = {
            "jsonrpc": "2.0",
            "id": next(_request_ids),
            "method": "message/send",
            "params": {
                "skillId": skill_id,
                "message": {"role": "user",
                            "parts": [{"kind": "text", "text": message}]},
            },
        }
        return json.dumps(rpc, separators=(",", ":"))

    @staticmethod
    def _finish(response: HttpResponse, round_trips: int) -> PaidSendResult:
        receipt = None
        receipt_header = response.header(PAYMENT_RESPONSE_HEADER)
        if receipt_header is not None:
            receipt = decode_settlement_header(receipt_header)
        if response.status == 402:
            raise PaymentRejected(
                f"server rejected payment: {response.body}", receipt=receipt)
        if response.status != 200:
            raise TransportError(f"unexpected status {response.status}")
        return PaidSendResult(response=response.json(), receipt=receipt,
                              round_trips=round_trips)


_request_ids = itertools.count(1)


def _chain_id_of(network: str) -> int:
    # network identifiers look like "sim:31337"
    try:
        return int(network.rsplit(":", 1)[-1])
    except ValueError as exc:
        raise ValueError(f"cannot parse chain id from network {network!r}") from exc
