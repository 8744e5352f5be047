"""Agent-to-agent JSON-RPC services with ledger-anchored agent cards and
x402 HTTP-402 micropayments over a deterministic simulated ledger."""

from .agentcard import (
    AgentCard,
    AgentExtension,
    Capabilities,
    Skill,
    X402Params,
    X402_EXTENSION_URI,
    extract_x402_params,
    make_x402_extension,
    parse_agent_json,
    to_agent_json,
    validate_card,
)
from .client import A2AClient, CountingTransport, InProcessTransport, Wallet
from .crypto import Eip712Domain, Signature, TransferAuthorization
from .discovery import AgentIndex, ReputationReport, compute_reputation
from .facilitator import Facilitator, VerifyResult
from .ledger import Ledger, TxRecord
from .server import A2AServer, ServerConfig
from .x402 import (
    PaymentRequirements,
    SettlementReceipt,
    SignedPaymentPayload,
    build_authorization,
    build_payment_requirements,
)

__version__ = "0.1.0"

__all__ = [
    "A2AClient", "A2AServer", "AgentCard", "AgentExtension", "AgentIndex",
    "Capabilities", "CountingTransport", "Eip712Domain", "Facilitator",
    "InProcessTransport", "Ledger", "PaymentRequirements", "ReputationReport",
    "ServerConfig", "SettlementReceipt", "Signature", "SignedPaymentPayload",
    "Skill", "TransferAuthorization", "TxRecord", "VerifyResult", "Wallet",
    "X402Params", "X402_EXTENSION_URI", "build_authorization",
    "build_payment_requirements", "compute_reputation", "extract_x402_params",
    "make_x402_extension", "parse_agent_json", "to_agent_json", "validate_card",
]
