"""Payment facilitator: read-only verification of signed payment payloads
against ledger state, and settlement submission.

The facilitator keeps no state of its own; every truth it reports comes
from the ledger, so restarts are harmless. Checks run in a fixed order
(cheap structural comparisons before ledger reads) so the reported reason
is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import crypto
from .ledger import Ledger
from .x402 import (
    PaymentRequirements,
    SettlementReceipt,
    SignedPaymentPayload,
    decode_payment_header,
)
from .errors import (
    A2AXError,
    AuthorizationExpired,
    AuthorizationNotYetValid,
    BadSignature,
    InsufficientFunds,
    NonceAlreadyUsed,
)

REASON_BAD_SIGNATURE = "BadSignature"
REASON_EXPIRED = "Expired"
REASON_NOT_YET_VALID = "NotYetValid"
REASON_NONCE_USED = "NonceUsed"
REASON_INSUFFICIENT_FUNDS = "InsufficientFunds"
REASON_WRONG_PAYEE = "WrongPayee"
REASON_AMOUNT_TOO_LOW = "AmountTooLow"
REASON_WRONG_NETWORK = "WrongNetwork"
REASON_WRONG_ASSET = "WrongAsset"

_LEDGER_ERROR_REASONS = {
    BadSignature: REASON_BAD_SIGNATURE,
    AuthorizationExpired: REASON_EXPIRED,
    AuthorizationNotYetValid: REASON_NOT_YET_VALID,
    NonceAlreadyUsed: REASON_NONCE_USED,
    InsufficientFunds: REASON_INSUFFICIENT_FUNDS,
}


@dataclass(frozen=True)
class VerifyResult:
    valid: bool
    reason: str | None = None

    def __post_init__(self):
        if self.valid and self.reason is not None:
            raise ValueError("valid result carries no reason")

    def to_obj(self) -> dict:
        obj = {"valid": self.valid}
        if self.reason is not None:
            obj["reason"] = self.reason
        return obj


class Facilitator:
    """Verifies and settles EIP-3009 payments on behalf of resource servers."""

    def __init__(self, ledger: Ledger, account: str | None = None):
        self.ledger = ledger
        self.account = account  # pays the flat settlement fee when fees are on

    def verify(self, payload: SignedPaymentPayload, reqs: PaymentRequirements,
               now: int) -> VerifyResult:
        auth = payload.authorization
        if payload.network != reqs.network or reqs.network != self.ledger.network:
            return VerifyResult(False, REASON_WRONG_NETWORK)
        if reqs.asset not in self.ledger.tokens:
            return VerifyResult(False, REASON_WRONG_ASSET)
        if auth.to_addr != reqs.pay_to:
            return VerifyResult(False, REASON_WRONG_PAYEE)
        if auth.value < reqs.max_amount_required:
            return VerifyResult(False, REASON_AMOUNT_TOO_LOW)
        separator = crypto.domain_separator(self.ledger.token_domain(reqs.asset))
        digest = crypto.transfer_auth_digest(separator, auth)
        try:
            signer = crypto.recover(digest, payload.signature)
        except Exception:
            return VerifyResult(False, REASON_BAD_SIGNATURE)
        if signer != auth.from_addr:
            return VerifyResult(False, REASON_BAD_SIGNATURE)
        if now <= auth.valid_after:
            return VerifyResult(False, REASON_NOT_YET_VALID)
        if now >= auth.valid_before:
            return VerifyResult(False, REASON_EXPIRED)
        if self.ledger.nonce_used(reqs.asset, auth.from_addr, auth.nonce):
            return VerifyResult(False, REASON_NONCE_USED)
        if self.ledger.balance_of(reqs.asset, auth.from_addr) < auth.value:
            return VerifyResult(False, REASON_INSUFFICIENT_FUNDS)
        return VerifyResult(True)

    def settle(self, payload: SignedPaymentPayload, reqs: PaymentRequirements,
               now: int) -> SettlementReceipt:
        auth = payload.authorization
        checked = self.verify(payload, reqs, now)
        if not checked.valid:
            return SettlementReceipt(success=False, network=reqs.network,
                                     payer=auth.from_addr,
                                     error_reason=checked.reason)
        try:
            record = self.ledger.transfer_with_authorization(
                reqs.asset, auth, payload.signature, now,
                submitter=self.account)
        except A2AXError as exc:
            reason = _LEDGER_ERROR_REASONS.get(type(exc), exc.code)
            return SettlementReceipt(success=False, network=reqs.network,
                                     payer=auth.from_addr, error_reason=reason)
        return SettlementReceipt(success=True, network=reqs.network,
                                 payer=auth.from_addr, tx_id=record.tx_id)


def create_facilitator_app(facilitator: Facilitator, clock=None):
    """FastAPI app exposing POST /verify and POST /settle."""
    import time

    from fastapi import FastAPI
    from fastapi.responses import JSONResponse

    from .errors import A2AXError as DomainError

    app = FastAPI(title="x402 facilitator")

    def _now(body: dict) -> int:
        if "now" in body:
            return int(body["now"])
        return int(clock()) if clock else int(time.time())

    async def _parse(request):
        body = await request.json()
        payload = decode_payment_header(body["paymentPayload"])
        reqs = PaymentRequirements.from_obj(body["paymentRequirements"])
        return body, payload, reqs

    async def verify(request):
        try:
            body, payload, reqs = await _parse(request)
        except (DomainError, KeyError, ValueError) as exc:
            return JSONResponse({"valid": False, "reason": str(exc)},
                                status_code=400)
        return JSONResponse(facilitator.verify(payload, reqs, _now(body)).to_obj())

    async def settle(request):
        try:
            body, payload, reqs = await _parse(request)
        except (DomainError, KeyError, ValueError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        receipt = facilitator.settle(payload, reqs, _now(body))
        return JSONResponse(receipt.to_obj())

    # starlette-level routes; see create_server_app for why
    app.add_route("/verify", verify, methods=["POST"])
    app.add_route("/settle", settle, methods=["POST"])
    return app
