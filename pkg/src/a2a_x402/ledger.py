"""Deterministic in-process ledger: accounts, an EIP-3009-capable token,
agent identity contracts, factories, registries, and an append-only tx log.

All time enters through explicit `now` arguments; nothing reads the wall
clock, so every scenario replays byte-identically. Mutations serialize
through a single lock; reads work on plain state.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field

from . import crypto
from .agentcard import AgentCard, card_from_obj, extract_x402_params, to_agent_json, validate_card
from .crypto import Eip712Domain, Signature, TransferAuthorization
from .errors import (
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
    UnknownFactory,
    UnknownRegistry,
    UnknownToken,
)

DEFAULT_CHAIN_ID = 31337
DEFAULT_ACTIVITY_WINDOW = 30 * 86400  # seconds; the activity interval is a config knob

TX_TOKEN_TRANSFER = "TokenTransfer"
TX_AGENT_DEPLOY = "AgentDeploy"
TX_CARD_UPDATE = "CardUpdate"
TX_HEARTBEAT = "Heartbeat"
TX_WITHDRAWAL = "Withdrawal"
TX_REGISTRY_OP = "RegistryOp"

REGISTRY_PERMISSIONLESS = "permissionless"
REGISTRY_CURATED = "curated"


@dataclass(frozen=True)
class TxRecord:
    tx_id: str  # 0x-hex 32-byte digest of the other fields
    height: int
    timestamp: int
    kind: str
    sender: str
    to: str
    token: str | None
    value: int
    nonce: str | None  # 0x-hex 32 bytes for token transfers
    via: str | None = None  # contract that mediated the op (factory/registry)

    def to_obj(self) -> dict:
        return {
            "txId": self.tx_id,
            "height": self.height,
            "timestamp": self.timestamp,
            "kind": self.kind,
            "from": self.sender,
            "to": self.to,
            "token": self.token,
            "value": self.value,
            "nonce": self.nonce,
            "via": self.via,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "TxRecord":
        return cls(
            tx_id=obj["txId"], height=obj["height"], timestamp=obj["timestamp"],
            kind=obj["kind"], sender=obj["from"], to=obj["to"], token=obj["token"],
            value=obj["value"], nonce=obj["nonce"], via=obj.get("via"),
        )


def _tx_id(height, timestamp, kind, sender, to, token, value, nonce, via) -> str:
    canonical = json.dumps(
        {"height": height, "timestamp": timestamp, "kind": kind, "from": sender,
         "to": to, "token": token, "value": value, "nonce": nonce, "via": via},
        separators=(",", ":"), sort_keys=True,
    ).encode()
    return "0x" + crypto.keccak256(canonical).hex()


@dataclass
class TokenContract:
    name: str
    symbol: str
    decimals: int
    balances: dict = field(default_factory=dict)  # address -> base units
    used_nonces: set = field(default_factory=set)  # (from, nonce_hex)
    total_supply: int = 0


@dataclass
class AgentContract:
    owner: str
    card: AgentCard
    card_json: str  # canonical serialization stored at deploy/update time
    active: bool
    last_heartbeat: int
    native_balance: int
    approved_tokens: set
    created_at: int


@dataclass
class FactoryContract:
    owner: str
    children: list = field(default_factory=list)


@dataclass
class RegistryContract:
    owner: str
    mode: str  # REGISTRY_PERMISSIONLESS | REGISTRY_CURATED
    curators: set = field(default_factory=set)
    entries: list = field(default_factory=list)  # enrollment order


class Ledger:
    """Single-writer world state with an append-only transaction log."""

    def __init__(self, chain_id: int = DEFAULT_CHAIN_ID, genesis=(), fee: int = 0):
        self.chain_id = chain_id
        self.fee = fee  # flat native fee charged to the settlement submitter
        self.height = 0
        self.accounts: dict[str, int] = {}
        self.tokens: dict[str, TokenContract] = {}
        self.agents: dict[str, AgentContract] = {}
        self.factories: dict[str, FactoryContract] = {}
        self.registries: dict[str, RegistryContract] = {}
        self.tx_log: list[TxRecord] = []
        self._deploy_counts: dict[str, int] = {}
        self._lock = threading.RLock()
        for address, amount in genesis:
            if address in self.accounts:
                raise DuplicateAccount(f"duplicate genesis address {address}")
            self.accounts[address] = int(amount)

    @property
    def network(self) -> str:
        return f"sim:{self.chain_id}"

    # -- internals ---------------------------------------------------------

    def _next_address(self, deployer: str) -> str:
        seq = self._deploy_counts.get(deployer, 0)
        self._deploy_counts[deployer] = seq + 1
        raw = crypto.address_to_bytes(deployer) + seq.to_bytes(8, "big")
        return "0x" + crypto.keccak256(raw)[-20:].hex()

    def _append(self, timestamp, kind, sender, to, token=None, value=0,
                nonce=None, via=None) -> TxRecord:
        self.height += 1
        record = TxRecord(
            tx_id=_tx_id(self.height, timestamp, kind, sender, to, token, value,
                         nonce, via),
            height=self.height, timestamp=timestamp, kind=kind, sender=sender,
            to=to, token=token, value=value, nonce=nonce, via=via,
        )
        self.tx_log.append(record)
        return record

    def _charge_fee(self, submitter: str | None):
        if not self.fee or submitter is None:
            return
        if self.accounts.get(submitter, 0) < self.fee:
            raise InsufficientFunds(f"submitter {submitter} cannot cover the fee")
        self.accounts[submitter] -= self.fee

    # -- token contract ----------------------------------------------------

    def deploy_token(self, owner: str, name: str, symbol: str, decimals: int,
                     mint=()) -> str:
        with self._lock:
            address = self._next_address(owner)
            balances: dict[str, int] = {}
            for holder, amount in mint:
                balances[holder] = balances.get(holder, 0) + int(amount)
            self.tokens[address] = TokenContract(
                name=name, symbol=symbol, decimals=decimals, balances=balances,
                total_supply=sum(balances.values()),
            )
            return address

    def token_domain(self, token: str) -> Eip712Domain:
        contract = self.tokens.get(token)
        if contract is None:
            raise UnknownToken(f"no token at {token}")
        return Eip712Domain(name=contract.name, version="1",
                            chain_id=self.chain_id, verifying_contract=token)

    def balance_of(self, token: str, address: str) -> int:
        contract = self.tokens.get(token)
        if contract is None:
            raise UnknownToken(f"no token at {token}")
        return contract.balances.get(address, 0)

    def nonce_used(self, token: str, from_addr: str, nonce: bytes) -> bool:
        contract = self.tokens.get(token)
        if contract is None:
            raise UnknownToken(f"no token at {token}")
        return (from_addr, "0x" + nonce.hex()) in contract.used_nonces

    def transfer_with_authorization(self, token: str, auth: TransferAuthorization,
                                    sig: Signature, now: int,
                                    submitter: str | None = None) -> TxRecord:
        with self._lock:
            contract = self.tokens.get(token)
            if contract is None:
                raise UnknownToken(f"no token at {token}")
            digest = crypto.transfer_auth_digest(
                crypto.domain_separator(self.token_domain(token)), auth)
            try:
                signer = crypto.recover(digest, sig)
            except Exception as exc:
                raise BadSignature(f"unrecoverable signature: {exc}") from exc
            if signer != auth.from_addr:
                raise BadSignature(f"signer {signer} is not {auth.from_addr}")
            if now <= auth.valid_after:
                raise AuthorizationNotYetValid(
                    f"now {now} <= validAfter {auth.valid_after}")
            if now >= auth.valid_before:
                raise AuthorizationExpired(
                    f"now {now} >= validBefore {auth.valid_before}")
            nonce_hex = "0x" + auth.nonce.hex()
            if (auth.from_addr, nonce_hex) in contract.used_nonces:
                raise NonceAlreadyUsed(f"nonce {nonce_hex} already used")
            if contract.balances.get(auth.from_addr, 0) < auth.value:
                raise InsufficientFunds(
                    f"{auth.from_addr} holds "
                    f"{contract.balances.get(auth.from_addr, 0)} < {auth.value}")
            self._charge_fee(submitter)
            contract.balances[auth.from_addr] -= auth.value
            contract.balances[auth.to_addr] = \
                contract.balances.get(auth.to_addr, 0) + auth.value
            contract.used_nonces.add((auth.from_addr, nonce_hex))
            return self._append(now, TX_TOKEN_TRANSFER, auth.from_addr,
                                auth.to_addr, token=token, value=auth.value,
                                nonce=nonce_hex)

    # -- agent contracts ---------------------------------------------------

    def deploy_agent(self, owner: str, card: AgentCard, now: int,
                     approved_tokens=None, via_factory: str | None = None) -> str:
        with self._lock:
            violations = validate_card(card)
            if violations:
                raise InvalidCard(violations)
            if approved_tokens is None:
                params = extract_x402_params(card)
                approved_tokens = {params.asset} if params else set()
            address = self._next_address(via_factory or owner)
            self.agents[address] = AgentContract(
                owner=owner, card=card, card_json=to_agent_json(card),
                active=True, last_heartbeat=now, native_balance=0,
                approved_tokens=set(approved_tokens), created_at=now,
            )
            self._append(now, TX_AGENT_DEPLOY, owner, address, via=via_factory)
            return address

    def _require_agent(self, agent: str) -> AgentContract:
        contract = self.agents.get(agent)
        if contract is None:
            raise UnknownAgent(f"no agent contract at {agent}")
        return contract

    def get_agent_json(self, agent: str) -> str:
        return self._require_agent(agent).card_json

    def update_card(self, agent: str, caller: str, card: AgentCard,
                    now: int) -> TxRecord:
        with self._lock:
            contract = self._require_agent(agent)
            if caller != contract.owner:
                raise NotOwner(f"{caller} does not own {agent}")
            violations = validate_card(card)
            if violations:
                raise InvalidCard(violations)
            contract.card = card
            contract.card_json = to_agent_json(card)
            return self._append(now, TX_CARD_UPDATE, caller, agent)

    def heartbeat(self, agent: str, caller: str, now: int) -> TxRecord:
        with self._lock:
            contract = self._require_agent(agent)
            if caller != contract.owner:
                raise NotOwner(f"{caller} does not own {agent}")
            contract.last_heartbeat = now
            return self._append(now, TX_HEARTBEAT, caller, agent)

    def is_active(self, agent: str, now: int,
                  window: int = DEFAULT_ACTIVITY_WINDOW) -> bool:
        contract = self._require_agent(agent)
        last = contract.last_heartbeat
        for record in self.tx_log:
            if agent in (record.sender, record.to, record.via):
                last = max(last, record.timestamp)
        return last >= now - window

    def deposit_native(self, from_addr: str, agent: str, amount: int,
                       now: int) -> TxRecord:
        with self._lock:
            contract = self._require_agent(agent)
            if self.accounts.get(from_addr, 0) < amount:
                raise InsufficientFunds(f"{from_addr} cannot cover {amount}")
            self.accounts[from_addr] -= amount
            contract.native_balance += amount
            return self._append(now, TX_TOKEN_TRANSFER, from_addr, agent,
                                token=None, value=amount)

    def withdraw(self, agent: str, caller: str, token: str | None, amount: int,
                 to: str, now: int) -> TxRecord:
        with self._lock:
            contract = self._require_agent(agent)
            if caller != contract.owner:
                raise NotOwner(f"{caller} does not own {agent}")
            if token is None:
                if contract.native_balance < amount:
                    raise InsufficientFunds(
                        f"agent holds {contract.native_balance} native < {amount}")
                contract.native_balance -= amount
                self.accounts[to] = self.accounts.get(to, 0) + amount
            else:
                if token not in contract.approved_tokens:
                    raise NotAuthorized(f"token {token} not approved for {agent}")
                token_contract = self.tokens.get(token)
                if token_contract is None:
                    raise UnknownToken(f"no token at {token}")
                held = token_contract.balances.get(agent, 0)
                if held < amount:
                    raise InsufficientFunds(f"agent holds {held} < {amount}")
                token_contract.balances[agent] = held - amount
                token_contract.balances[to] = \
                    token_contract.balances.get(to, 0) + amount
            return self._append(now, TX_WITHDRAWAL, caller, to, token=token,
                                value=amount, via=agent)

    # -- factory -----------------------------------------------------------

    def deploy_factory(self, owner: str) -> str:
        with self._lock:
            address = self._next_address(owner)
            self.factories[address] = FactoryContract(owner=owner)
            return address

    def factory_create_agent(self, factory: str, owner: str, card: AgentCard,
                             now: int) -> str:
        with self._lock:
            contract = self.factories.get(factory)
            if contract is None:
                raise UnknownFactory(f"no factory at {factory}")
            agent = self.deploy_agent(owner, card, now, via_factory=factory)
            contract.children.append(agent)
            return agent

    def factory_list(self, factory: str) -> list[str]:
        contract = self.factories.get(factory)
        if contract is None:
            raise UnknownFactory(f"no factory at {factory}")
        return list(contract.children)

    # -- registry ----------------------------------------------------------

    def deploy_registry(self, owner: str, mode: str, curators=()) -> str:
        with self._lock:
            if mode not in (REGISTRY_PERMISSIONLESS, REGISTRY_CURATED):
                raise ValueError(f"unknown registry mode {mode!r}")
            curators = set(curators)
            if mode == REGISTRY_CURATED and not curators:
                raise ValueError("curated registry needs at least one curator")
            if mode == REGISTRY_PERMISSIONLESS and curators:
                raise ValueError("permissionless registry takes no curators")
            address = self._next_address(owner)
            self.registries[address] = RegistryContract(
                owner=owner, mode=mode, curators=curators)
            return address

    def _require_registry(self, registry: str) -> RegistryContract:
        contract = self.registries.get(registry)
        if contract is None:
            raise UnknownRegistry(f"no registry at {registry}")
        return contract

    def _check_registry_caller(self, contract: RegistryContract, caller: str,
                               agent: str):
        if contract.mode == REGISTRY_CURATED:
            if caller not in contract.curators:
                raise NotAuthorized(f"{caller} is not a curator")
        else:
            if caller != self._require_agent(agent).owner:
                raise NotAuthorized(f"{caller} does not own {agent}")

    def registry_enroll(self, registry: str, caller: str, agent: str,
                        now: int) -> TxRecord:
        with self._lock:
            contract = self._require_registry(registry)
            self._require_agent(agent)
            self._check_registry_caller(contract, caller, agent)
            if agent in contract.entries:
                raise AlreadyEnrolled(f"{agent} already enrolled in {registry}")
            contract.entries.append(agent)
            return self._append(now, TX_REGISTRY_OP, caller, agent, value=1,
                                via=registry)

    def registry_remove(self, registry: str, caller: str, agent: str,
                        now: int) -> TxRecord:
        with self._lock:
            contract = self._require_registry(registry)
            self._check_registry_caller(contract, caller, agent)
            if agent not in contract.entries:
                raise UnknownAgent(f"{agent} not enrolled in {registry}")
            contract.entries.remove(agent)
            return self._append(now, TX_REGISTRY_OP, caller, agent, value=0,
                                via=registry)

    def registry_list(self, registry: str) -> list[str]:
        return list(self._require_registry(registry).entries)

    # -- queries -----------------------------------------------------------

    def query_tx_log(self, to: str | None = None, sender: str | None = None,
                     kind: str | None = None,
                     since: int | None = None) -> list[TxRecord]:
        out = []
        for record in self.tx_log:
            if to is not None and record.to != to:
                continue
            if sender is not None and record.sender != sender:
                continue
            if kind is not None and record.kind != kind:
                continue
            if since is not None and record.timestamp < since:
                continue
            out.append(record)
        return out

    # -- snapshots ---------------------------------------------------------

    def to_json(self) -> str:
        obj = {
            "chainId": self.chain_id,
            "fee": self.fee,
            "height": self.height,
            "accounts": {a: self.accounts[a] for a in sorted(self.accounts)},
            "deployCounts": {a: self._deploy_counts[a]
                             for a in sorted(self._deploy_counts)},
            "tokens": {
                addr: {
                    "name": t.name, "symbol": t.symbol, "decimals": t.decimals,
                    "totalSupply": t.total_supply,
                    "balances": {a: t.balances[a] for a in sorted(t.balances)},
                    "usedNonces": sorted(f"{f}:{n}" for f, n in t.used_nonces),
                }
                for addr, t in sorted(self.tokens.items())
            },
            "agents": {
                addr: {
                    "owner": a.owner, "card": json.loads(a.card_json),
                    "active": a.active, "lastHeartbeat": a.last_heartbeat,
                    "nativeBalance": a.native_balance,
                    "approvedTokens": sorted(a.approved_tokens),
                    "createdAt": a.created_at,
                }
                for addr, a in sorted(self.agents.items())
            },
            "factories": {
                addr: {"owner": f.owner, "children": f.children}
                for addr, f in sorted(self.factories.items())
            },
            "registries": {
                addr: {"owner": r.owner, "mode": r.mode,
                       "curators": sorted(r.curators), "entries": r.entries}
                for addr, r in sorted(self.registries.items())
            },
            "txLog": [record.to_obj() for record in self.tx_log],
        }
        return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Ledger":
        obj = json.loads(text)
        ledger = cls(chain_id=obj["chainId"], fee=obj.get("fee", 0))
        ledger.height = obj["height"]
        ledger.accounts = dict(obj["accounts"])
        ledger._deploy_counts = dict(obj.get("deployCounts", {}))
        for addr, t in obj["tokens"].items():
            used = set()
            for entry in t["usedNonces"]:
                from_addr, nonce_hex = entry.split(":", 1)
                used.add((from_addr, nonce_hex))
            ledger.tokens[addr] = TokenContract(
                name=t["name"], symbol=t["symbol"], decimals=t["decimals"],
                balances=dict(t["balances"]), used_nonces=used,
                total_supply=t["totalSupply"],
            )
        for addr, a in obj["agents"].items():
            card = card_from_obj(a["card"])
            ledger.agents[addr] = AgentContract(
                owner=a["owner"], card=card, card_json=to_agent_json(card),
                active=a["active"], last_heartbeat=a["lastHeartbeat"],
                native_balance=a["nativeBalance"],
                approved_tokens=set(a["approvedTokens"]),
                created_at=a["createdAt"],
            )
        for addr, f in obj["factories"].items():
            ledger.factories[addr] = FactoryContract(
                owner=f["owner"], children=list(f["children"]))
        for addr, r in obj["registries"].items():
            ledger.registries[addr] = RegistryContract(
                owner=r["owner"], mode=r["mode"], curators=set(r["curators"]),
                entries=list(r["entries"]))
        ledger.tx_log = [TxRecord.from_obj(rec) for rec in obj["txLog"]]
        return ledger
