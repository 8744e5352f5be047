"""Discovery mechanisms and reputation: factory enumeration, on-chain
registries, an incremental off-chain indexer over the tx log, and
payment-history reputation reports.

The indexer models third-party indexing: it only sees ledger history up
to its last scan, so freshly deployed agents appear with bounded lag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .agentcard import AgentCard
from .errors import UnknownAgent
from .ledger import (
    DEFAULT_ACTIVITY_WINDOW,
    Ledger,
    TX_AGENT_DEPLOY,
    TX_CARD_UPDATE,
    TX_TOKEN_TRANSFER,
)

REPEAT_PAYER_WEIGHT = 2  # score = total payments + 2 * repeat payers


@dataclass(frozen=True)
class ReputationReport:
    total_payments_received: int
    unique_payers: int
    repeat_payers: int
    last_payment_at: int | None
    score: int

    def to_obj(self) -> dict:
        return {
            "totalPaymentsReceived": self.total_payments_received,
            "uniquePayers": self.unique_payers,
            "repeatPayers": self.repeat_payers,
            "lastPaymentAt": self.last_payment_at,
            "score": self.score,
        }


def _report_from_counts(payer_counts: dict, last_payment_at) -> ReputationReport:
    total = sum(payer_counts.values())
    unique = len(payer_counts)
    repeat = sum(1 for c in payer_counts.values() if c >= 2)
    return ReputationReport(
        total_payments_received=total, unique_payers=unique,
        repeat_payers=repeat, last_payment_at=last_payment_at,
        score=total + REPEAT_PAYER_WEIGHT * repeat,
    )


def compute_reputation(ledger: Ledger, agent: str, now: int) -> ReputationReport:
    if agent not in ledger.agents:
        raise UnknownAgent(f"no agent contract at {agent}")
    payer_counts: dict[str, int] = {}
    last_payment_at = None
    for record in ledger.tx_log:
        if record.kind == TX_TOKEN_TRANSFER and record.to == agent:
            payer_counts[record.sender] = payer_counts.get(record.sender, 0) + 1
            last_payment_at = record.timestamp
    return _report_from_counts(payer_counts, last_payment_at)


@dataclass
class IndexRecord:
    address: str
    card: AgentCard
    active: bool
    payer_counts: dict = field(default_factory=dict)
    last_payment_at: int | None = None

    @property
    def reputation(self) -> ReputationReport:
        return _report_from_counts(self.payer_counts, self.last_payment_at)

    def matches_keyword(self, keyword: str) -> bool:
        needle = keyword.lower()
        for skill in self.card.skills:
            if needle in skill.name.lower() or needle in skill.description.lower():
                return True
        return False


class AgentIndex:
    """Incrementally built catalog of agent contracts seen in the tx log."""

    def __init__(self):
        self.last_scanned_height = 0
        self.records: dict[str, IndexRecord] = {}

    def scan(self, ledger: Ledger, now: int | None = None,
             window: int = DEFAULT_ACTIVITY_WINDOW) -> "AgentIndex":
        new_records = [r for r in ledger.tx_log
                       if r.height > self.last_scanned_height]
        for record in new_records:
            if record.kind in (TX_AGENT_DEPLOY, TX_CARD_UPDATE):
                agent = ledger.agents.get(record.to)
                if agent is None:
                    continue
                existing = self.records.get(record.to)
                if existing is None:
                    self.records[record.to] = IndexRecord(
                        address=record.to, card=agent.card, active=True)
                else:
                    existing.card = agent.card
            elif record.kind == TX_TOKEN_TRANSFER and record.to in self.records:
                rec = self.records[record.to]
                rec.payer_counts[record.sender] = \
                    rec.payer_counts.get(record.sender, 0) + 1
                rec.last_payment_at = record.timestamp
        if new_records:
            self.last_scanned_height = new_records[-1].height
        if now is not None:
            for address, rec in self.records.items():
                rec.active = ledger.is_active(address, now, window)
        return self

    def query(self, skill_keyword: str | None = None, active_only: bool = False,
              min_score=None) -> list[tuple[str, ReputationReport]]:
        matched = []
        for address, rec in self.records.items():
            if skill_keyword is not None and not rec.matches_keyword(skill_keyword):
                continue
            if active_only and not rec.active:
                continue
            report = rec.reputation
            if min_score is not None and report.score < min_score:
                continue
            matched.append((address, report))
        matched.sort(key=lambda pair: (-pair[1].score, pair[0]))
        return matched

    # -- fixtures ----------------------------------------------------------

    def to_json(self) -> str:
        from .agentcard import card_to_obj
        obj = {
            "lastScannedHeight": self.last_scanned_height,
            "records": {
                addr: {
                    "card": card_to_obj(rec.card),
                    "active": rec.active,
                    "payerCounts": {p: rec.payer_counts[p]
                                    for p in sorted(rec.payer_counts)},
                    "lastPaymentAt": rec.last_payment_at,
                }
                for addr, rec in sorted(self.records.items())
            },
        }
        return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "AgentIndex":
        from .agentcard import card_from_obj
        obj = json.loads(text)
        index = cls()
        index.last_scanned_height = obj["lastScannedHeight"]
        for addr, rec in obj["records"].items():
            index.records[addr] = IndexRecord(
                address=addr, card=card_from_obj(rec["card"]),
                active=rec["active"], payer_counts=dict(rec["payerCounts"]),
                last_payment_at=rec["lastPaymentAt"],
            )
        return index


def create_indexer_app(index: AgentIndex):
    """FastAPI read endpoint: GET /agents?skill=&activeOnly=&minScore=."""
    from fastapi import FastAPI
    from fastapi.responses import JSONResponse

    app = FastAPI(title="agent indexer")

    @app.get("/agents")
    async def agents(skill: str | None = None, activeOnly: bool = False,
                     minScore: int | None = None):
        results = index.query(skill_keyword=skill, active_only=activeOnly,
                              min_score=minScore)
        return JSONResponse([
            {"address": addr, "reputation": report.to_obj()}
            for addr, report in results
        ])

    return app
