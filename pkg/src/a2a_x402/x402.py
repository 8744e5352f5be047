"""Wire formats for the x402 flow: 402 bodies, X-PAYMENT request headers,
X-PAYMENT-RESPONSE settlement headers, and authorization construction.

Canonical JSON uses the declared key order per type; parsing tolerates any
key order. Header payloads are standard padded base64 of that JSON.
"""

from __future__ import annotations

import base64
import binascii
import json
from dataclasses import dataclass

from .agentcard import X402Params
from .crypto import Signature, TransferAuthorization, is_address
from .errors import MalformedPayload, NotBase64, UnsupportedScheme, UnsupportedVersion

X402_VERSION = 1
SCHEME_EXACT = "exact"

PAYMENT_HEADER = "X-PAYMENT"
PAYMENT_RESPONSE_HEADER = "X-PAYMENT-RESPONSE"


@dataclass(frozen=True)
class PaymentRequirements:
    network: str
    asset: str
    pay_to: str
    max_amount_required: int
    resource: str
    description: str = ""
    max_timeout_seconds: int = 60
    nonce: str | None = None  # server-proposed, advisory
    error: str | None = None
    asset_name: str = "MockUSDC"
    x402_version: int = X402_VERSION
    scheme: str = SCHEME_EXACT

    def to_obj(self) -> dict:
        obj = {
            "x402Version": self.x402_version,
            "scheme": self.scheme,
            "network": self.network,
            "asset": self.asset,
            "payTo": self.pay_to,
            "maxAmountRequired": str(self.max_amount_required),
            "resource": self.resource,
            "description": self.description,
            "maxTimeoutSeconds": self.max_timeout_seconds,
            "assetName": self.asset_name,
        }
        if self.nonce is not None:
            obj["nonce"] = self.nonce
        if self.error is not None:
            obj["error"] = self.error
        return obj

    @classmethod
    def from_obj(cls, obj) -> "PaymentRequirements":
        try:
            return cls(
                x402_version=int(obj["x402Version"]),
                scheme=obj["scheme"],
                network=obj["network"],
                asset=obj["asset"],
                pay_to=obj["payTo"],
                max_amount_required=int(str(obj["maxAmountRequired"])),
                resource=obj["resource"],
                description=obj.get("description", ""),
                max_timeout_seconds=int(obj.get("maxTimeoutSeconds", 60)),
                nonce=obj.get("nonce"),
                error=obj.get("error"),
                asset_name=obj.get("assetName", "MockUSDC"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedPayload(f"bad payment requirements: {exc}") from exc


@dataclass(frozen=True)
class SignedPaymentPayload:
    network: str
    authorization: TransferAuthorization
    signature: Signature
    x402_version: int = X402_VERSION
    scheme: str = SCHEME_EXACT

    def to_obj(self) -> dict:
        auth = self.authorization
        return {
            "x402Version": self.x402_version,
            "scheme": self.scheme,
            "network": self.network,
            "authorization": {
                "from": auth.from_addr,
                "to": auth.to_addr,
                "value": str(auth.value),
                "validAfter": auth.valid_after,
                "validBefore": auth.valid_before,
                "nonce": "0x" + auth.nonce.hex(),
            },
            "signature": self.signature.to_hex(),
        }


@dataclass(frozen=True)
class SettlementReceipt:
    success: bool
    network: str
    payer: str
    tx_id: str | None = None
    error_reason: str | None = None

    def __post_init__(self):
        if self.success and self.tx_id is None:
            raise ValueError("success receipt needs a txId")
        if not self.success and self.error_reason is None:
            raise ValueError("failure receipt needs an errorReason")

    def to_obj(self) -> dict:
        obj = {"success": self.success, "network": self.network,
               "payer": self.payer}
        if self.tx_id is not None:
            obj["txId"] = self.tx_id
        if self.error_reason is not None:
            obj["errorReason"] = self.error_reason
        return obj

    @classmethod
    def from_obj(cls, obj) -> "SettlementReceipt":
        try:
            return cls(success=bool(obj["success"]), network=obj["network"],
                       payer=obj["payer"], tx_id=obj.get("txId"),
                       error_reason=obj.get("errorReason"))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedPayload(f"bad settlement receipt: {exc}") from exc


def _canonical(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def build_payment_requirements(params: X402Params,
                               resource_url: str) -> PaymentRequirements:
    return PaymentRequirements(
        network=params.network,
        asset=params.asset,
        pay_to=params.pay_to,
        max_amount_required=params.amount,
        resource=resource_url,
        description=params.description,
        max_timeout_seconds=params.max_timeout_seconds,
        asset_name=params.asset_name,
    )


def encode_402_body(reqs: PaymentRequirements) -> str:
    body = {"x402Version": X402_VERSION}
    if reqs.error is not None:
        body["error"] = reqs.error
    body["accepts"] = [reqs.to_obj()]
    return _canonical(body)


def decode_402_body(text) -> PaymentRequirements:
    try:
        obj = json.loads(text)
        accepts = obj["accepts"]
        if not isinstance(accepts, list) or len(accepts) != 1:
            raise ValueError("accepts must hold exactly one entry")
    except (TypeError, ValueError, KeyError) as exc:
        raise MalformedPayload(f"bad 402 body: {exc}") from exc
    reqs = PaymentRequirements.from_obj(accepts[0])
    if reqs.error is None and "error" in obj:
        reqs = PaymentRequirements(**{**_reqs_kwargs(reqs), "error": obj["error"]})
    return reqs


def _reqs_kwargs(reqs: PaymentRequirements) -> dict:
    return {
        "network": reqs.network, "asset": reqs.asset, "pay_to": reqs.pay_to,
        "max_amount_required": reqs.max_amount_required,
        "resource": reqs.resource, "description": reqs.description,
        "max_timeout_seconds": reqs.max_timeout_seconds, "nonce": reqs.nonce,
        "error": reqs.error, "asset_name": reqs.asset_name,
        "x402_version": reqs.x402_version, "scheme": reqs.scheme,
    }


def with_error(reqs: PaymentRequirements, error: str) -> PaymentRequirements:
    return PaymentRequirements(**{**_reqs_kwargs(reqs), "error": error})


def build_authorization(reqs: PaymentRequirements, payer: str, now: int,
                        validity_seconds: int,
                        nonce: bytes) -> TransferAuthorization:
    if validity_seconds <= 0:
        raise ValueError("validity_seconds must be positive")
    if reqs.nonce is not None:
        nonce = bytes.fromhex(reqs.nonce.removeprefix("0x"))
    return TransferAuthorization(
        from_addr=payer,
        to_addr=reqs.pay_to,
        value=reqs.max_amount_required,
        valid_after=now - 1,
        valid_before=now + validity_seconds,
        nonce=nonce,
    )


def _b64_encode(obj) -> str:
    return base64.b64encode(_canonical(obj).encode()).decode("ascii")


def _b64_decode(header_value) -> object:
    if not isinstance(header_value, str):
        raise NotBase64("header value must be text")
    try:
        raw = base64.b64decode(header_value, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise NotBase64(f"header is not valid base64: {exc}") from exc
    try:
        return json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise MalformedPayload(f"header does not hold JSON: {exc}") from exc


def encode_payment_header(payload: SignedPaymentPayload) -> str:
    return _b64_encode(payload.to_obj())


def decode_payment_header(header_value) -> SignedPaymentPayload:
    obj = _b64_decode(header_value)
    if not isinstance(obj, dict):
        raise MalformedPayload("payment payload must be a JSON object")
    missing = [k for k in ("x402Version", "scheme", "network", "authorization",
                           "signature") if k not in obj]
    if missing:
        raise MalformedPayload(f"payment payload missing {missing}")
    if obj["x402Version"] != X402_VERSION:
        raise UnsupportedVersion(f"x402Version {obj['x402Version']!r}")
    if obj["scheme"] != SCHEME_EXACT:
        raise UnsupportedScheme(f"scheme {obj['scheme']!r}")
    auth_obj = obj["authorization"]
    try:
        nonce = bytes.fromhex(str(auth_obj["nonce"]).removeprefix("0x"))
        auth = TransferAuthorization(
            from_addr=auth_obj["from"],
            to_addr=auth_obj["to"],
            value=int(str(auth_obj["value"])),
            valid_after=int(auth_obj["validAfter"]),
            valid_before=int(auth_obj["validBefore"]),
            nonce=nonce,
        )
        if not is_address(auth.from_addr) or not is_address(auth.to_addr):
            raise ValueError("from/to must be addresses")
        signature = Signature.from_hex(obj["signature"])
    except MalformedPayload:
        raise
    except Exception as exc:
        raise MalformedPayload(f"bad payment payload: {exc}") from exc
    return SignedPaymentPayload(network=obj["network"], authorization=auth,
                                signature=signature,
                                x402_version=obj["x402Version"],
                                scheme=obj["scheme"])


def encode_settlement_header(receipt: SettlementReceipt) -> str:
    return _b64_encode(receipt.to_obj())


def decode_settlement_header(header_value) -> SettlementReceipt:
    obj = _b64_decode(header_value)
    if not isinstance(obj, dict):
        raise MalformedPayload("settlement receipt must be a JSON object")
    return SettlementReceipt.from_obj(obj)
