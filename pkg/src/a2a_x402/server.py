"""Server agent: a JSON-RPC 2.0 endpoint exposing skills, fronted by
payment middleware that gates paid skills behind the x402 flow.

The core is a transport-agnostic `A2AServer.handle` working on plain
request/response values; `create_server_app` wraps it as an ASGI app.
Settlement happens before the skill handler runs (pay-then-serve); a
handler failure after settlement is not refunded.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from .agentcard import AgentCard, WELL_KNOWN_PATH, extract_x402_params, to_agent_json
from .crypto import ZERO_ADDRESS
from .errors import A2AXError, UnknownSkill
from .facilitator import Facilitator
from .x402 import (
    PAYMENT_HEADER,
    PAYMENT_RESPONSE_HEADER,
    SettlementReceipt,
    build_payment_requirements,
    decode_payment_header,
    encode_402_body,
    encode_settlement_header,
    with_error,
)

JSONRPC_PARSE_ERROR = -32700
JSONRPC_INVALID_REQUEST = -32600
JSONRPC_METHOD_NOT_FOUND = -32601
JSONRPC_INVALID_PARAMS = -32602
JSONRPC_SERVER_ERROR = -32000

SUPPORTED_METHOD = "message/send"


@dataclass(frozen=True)
class HttpRequest:
    method: str
    path: str
    headers: dict = field(default_factory=dict)
    body: str = ""

    def header(self, name: str) -> str | None:
        for key, value in self.headers.items():
            if key.lower() == name.lower():
                return value
        return None


@dataclass(frozen=True)
class HttpResponse:
    status: int
    headers: dict = field(default_factory=dict)
    body: str = ""

    def header(self, name: str) -> str | None:
        for key, value in self.headers.items():
            if key.lower() == name.lower():
                return value
        return None

    def json(self):
        return json.loads(self.body)


@dataclass
class ServerConfig:
    card: AgentCard
    facilitator: Facilitator
    paid_skills: set = field(default_factory=set)
    handlers: dict = field(default_factory=dict)  # skill id -> handler

    def __post_init__(self):
        skill_ids = {s.id for s in self.card.skills}
        unknown = self.paid_skills - skill_ids
        if unknown:
            raise ValueError(f"paid skills not on the card: {sorted(unknown)}")
        if self.paid_skills and extract_x402_params(self.card) is None:
            raise ValueError("paid skills require the card to carry the "
                             "x402 payment extension")


def _jsonrpc_error(request_id, code: int, message: str) -> dict:
    return {"jsonrpc": "2.0", "id": request_id,
            "error": {"code": code, "message": message}}


def _jsonrpc_result(request_id, text: str) -> dict:
    return {"jsonrpc": "2.0", "id": request_id,
            "result": {"message": {"role": "agent",
                                   "parts": [{"kind": "text", "text": text}]}}}


def _json_response(status: int, obj, extra_headers=None) -> HttpResponse:
    headers = {"Content-Type": "application/json"}
    if extra_headers:
        headers.update(extra_headers)
    return HttpResponse(status=status, headers=headers,
                        body=json.dumps(obj, separators=(",", ":")))


class A2AServer:
    def __init__(self, config: ServerConfig):
        self.config = config
        self._card_json = to_agent_json(config.card)
        self._x402 = extract_x402_params(config.card)

    def register_skill_handler(self, skill_id: str, handler) -> None:
        if skill_id not in {s.id for s in self.config.card.skills}:
            raise UnknownSkill(f"skill {skill_id!r} is not on the card")
        self.config.handlers[skill_id] = handler

    def requirements_for(self, skill_id: str):
        resource = f"{self.config.card.url}#{skill_id}"
        return build_payment_requirements(self._x402, resource)

    # -- request handling --------------------------------------------------

    def handle(self, request: HttpRequest, now: int | None = None) -> HttpResponse:
        if now is None:
            now = int(time.time())
        if request.method == "GET" and request.path == WELL_KNOWN_PATH:
            return HttpResponse(status=200,
                                headers={"Content-Type": "application/json"},
                                body=self._card_json)
        if request.method == "POST" and request.path == "/":
            return self._handle_rpc(request, now)
        return _json_response(404, {"error": "not found"})

    def _handle_rpc(self, request: HttpRequest, now: int) -> HttpResponse:
        try:
            rpc = json.loads(request.body)
        except ValueError:
            return _json_response(
                200, _jsonrpc_error(None, JSONRPC_PARSE_ERROR, "parse error"))
        if not isinstance(rpc, dict) or rpc.get("jsonrpc") != "2.0" \
                or "method" not in rpc:
            return _json_response(
                200, _jsonrpc_error(rpc.get("id") if isinstance(rpc, dict) else None,
                                    JSONRPC_INVALID_REQUEST, "invalid request"))
        request_id = rpc.get("id")
        if rpc["method"] != SUPPORTED_METHOD:
            return _json_response(
                200, _jsonrpc_error(request_id, JSONRPC_METHOD_NOT_FOUND,
                                    f"unknown method {rpc['method']!r}"))
        params = rpc.get("params") or {}
        skill_id, text, error = self._parse_params(params)
        if error is not None:
            return _json_response(
                200, _jsonrpc_error(request_id, JSONRPC_INVALID_PARAMS, error))

        if skill_id not in self.config.paid_skills:
            return self._dispatch(request_id, skill_id, text, None)

        # paid skill: require and settle payment before dispatch
        reqs = self.requirements_for(skill_id)
        header_value = request.header(PAYMENT_HEADER)
        if header_value is None:
            return _json_response(402, json.loads(encode_402_body(reqs)))
        try:
            payload = decode_payment_header(header_value)
        except A2AXError as exc:
            receipt = SettlementReceipt(
                success=False, network=reqs.network, payer=ZERO_ADDRESS,
                error_reason=exc.code)
            return _json_response(
                402, json.loads(encode_402_body(with_error(reqs, exc.code))),
                {PAYMENT_RESPONSE_HEADER: encode_settlement_header(receipt)})
        receipt = self.config.facilitator.settle(payload, reqs, now)
        receipt_header = {PAYMENT_RESPONSE_HEADER: encode_settlement_header(receipt)}
        if not receipt.success:
            body = json.loads(encode_402_body(with_error(reqs, receipt.error_reason)))
            return _json_response(402, body, receipt_header)
        return self._dispatch(request_id, skill_id, text, receipt_header)

    def _parse_params(self, params):
        if not isinstance(params, dict):
            return None, None, "params must be an object"
        skill_id = params.get("skillId")
        if skill_id is None:
            skill_id = self.config.card.skills[0].id
        elif skill_id not in {s.id for s in self.config.card.skills}:
            return None, None, f"unknown skill {skill_id!r}"
        try:
            parts = params["message"]["parts"]
            text = "".join(p["text"] for p in parts if p.get("kind") == "text")
        except (KeyError, TypeError):
            return None, None, "params.message.parts with text parts required"
        return skill_id, text, None

    def _dispatch(self, request_id, skill_id, text, extra_headers) -> HttpResponse:
        handler = self.config.handlers.get(skill_id)
        if handler is None:
            return _json_response(
                200, _jsonrpc_error(request_id, JSONRPC_SERVER_ERROR,
                                    f"no handler for skill {skill_id!r}"),
                extra_headers)
        try:
            reply = handler(text)
        except Exception as exc:  # settlement is not refunded
            return _json_response(
                200, _jsonrpc_error(request_id, JSONRPC_SERVER_ERROR,
                                    f"handler failed: {exc}"),
                extra_headers)
        return _json_response(200, _jsonrpc_result(request_id, reply),
                              extra_headers)


def create_server_app(server: A2AServer, clock=None):
    """ASGI wrapper around the transport-agnostic handler."""
    # imported here so the core stays usable without the HTTP stack;
    # routes are registered at the starlette level because deferred
    # annotations keep FastAPI from resolving locally imported types
    from fastapi import FastAPI, Response

    app = FastAPI(title=server.config.card.name)

    async def well_known(request):
        response = server.handle(HttpRequest(method="GET", path=WELL_KNOWN_PATH))
        return Response(content=response.body, status_code=response.status,
                        media_type="application/json")

    async def rpc(request):
        body = (await request.body()).decode("utf-8", errors="replace")
        now = int(clock()) if clock else None
        response = server.handle(HttpRequest(
            method="POST", path="/", headers=dict(request.headers), body=body),
            now=now)
        return Response(content=response.body, status_code=response.status,
                        headers={k: v for k, v in response.headers.items()
                                 if k.lower() != "content-type"},
                        media_type="application/json")

    app.add_route(WELL_KNOWN_PATH, well_known, methods=["GET"])
    app.add_route("/", rpc, methods=["POST"])
    return app
