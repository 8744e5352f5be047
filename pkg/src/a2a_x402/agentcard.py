"""AgentCard data model, validation and canonical agent.json serialization.

The canonical form fixes top-level key order to the card's declared field
order (not alphabetical) so on-chain stored cards and hosted well-known
files are byte-comparable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from urllib.parse import urlparse

from .crypto import is_address
from .errors import InvalidCard, MalformedExtension, ParseError

X402_EXTENSION_URI = "urn:a2a-blockchain-x402:extensions:x402:v1"

WELL_KNOWN_PATH = "/.well-known/agent.json"

_SEMVER_RE = re.compile(r"^\d+\.\d+\.\d+([-+][0-9A-Za-z.\-]+)?$")

_TOP_LEVEL_KEYS = (
    "name", "description", "url", "version", "capabilities",
    "defaultInputModes", "defaultOutputModes", "skills",
)


@dataclass(frozen=True)
class Skill:
    id: str
    name: str
    description: str


@dataclass(frozen=True)
class AgentExtension:
    uri: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Capabilities:
    flags: dict = field(default_factory=dict)  # name -> bool
    extensions: tuple = ()  # AgentExtension, insertion order preserved


@dataclass(frozen=True)
class AgentCard:
    name: str
    description: str
    url: str
    version: str
    capabilities: Capabilities = field(default_factory=Capabilities)
    default_input_modes: tuple = ("text/plain",)
    default_output_modes: tuple = ("application/json",)
    skills: tuple = ()
    extra: dict = field(default_factory=dict)  # unknown fields kept for round trips


@dataclass(frozen=True)
class X402Params:
    """Payment parameters carried by the x402 card extension."""
    asset: str
    network: str
    amount: int  # token base units
    pay_to: str
    max_timeout_seconds: int = 60
    description: str = ""
    asset_name: str = "MockUSDC"  # token EIP-712 domain name, needed by signers


def make_x402_extension(params: X402Params) -> AgentExtension:
    return AgentExtension(
        uri=X402_EXTENSION_URI,
        params={
            "asset": params.asset,
            "network": params.network,
            "amount": str(params.amount),
            "payTo": params.pay_to,
            "maxTimeoutSeconds": params.max_timeout_seconds,
            "description": params.description,
            "assetName": params.asset_name,
        },
    )


def _is_absolute_http_url(value) -> bool:
    if not isinstance(value, str):
        return False
    parsed = urlparse(value)
    return parsed.scheme in ("http", "https") and bool(parsed.netloc)


def validate_card(card: AgentCard) -> list[str]:
    """Return one violation string per broken rule; empty list means valid."""
    violations = []
    if not isinstance(card.name, str) or not card.name:
        violations.append("name: nonempty text required")
    if not isinstance(card.description, str) or not card.description:
        violations.append("description: nonempty text required")
    if not _is_absolute_http_url(card.url):
        violations.append("url: absolute http(s) URL required")
    if not isinstance(card.version, str) or not _SEMVER_RE.match(card.version or ""):
        violations.append("version: semver text required")
    for mode_field, modes in (
        ("defaultInputModes", card.default_input_modes),
        ("defaultOutputModes", card.default_output_modes),
    ):
        if not all(isinstance(m, str) and m for m in modes):
            violations.append(f"{mode_field}: entries must be nonempty text")
    if not card.skills:
        violations.append("skills: nonempty required")
    seen_ids = set()
    for i, skill in enumerate(card.skills):
        for attr in ("id", "name", "description"):
            if not getattr(skill, attr, None):
                violations.append(f"skills[{i}].{attr}: nonempty text required")
        if skill.id in seen_ids:
            violations.append(f"skills[{i}].id: duplicate skill id {skill.id!r}")
        seen_ids.add(skill.id)
    uris = [e.uri for e in card.capabilities.extensions]
    if len(uris) != len(set(uris)):
        violations.append("capabilities.extensions: extension URIs must be unique")
    for flag, value in card.capabilities.flags.items():
        if not isinstance(value, bool):
            violations.append(f"capabilities.{flag}: must be a boolean flag")
    return violations


def _capabilities_obj(caps: Capabilities) -> dict:
    obj = {k: caps.flags[k] for k in sorted(caps.flags)}
    if caps.extensions:
        obj["extensions"] = [
            {"uri": e.uri, "params": e.params} for e in caps.extensions
        ]
    return obj


def card_to_obj(card: AgentCard) -> dict:
    obj = {
        "name": card.name,
        "description": card.description,
        "url": card.url,
        "version": card.version,
        "capabilities": _capabilities_obj(card.capabilities),
        "defaultInputModes": list(card.default_input_modes),
        "defaultOutputModes": list(card.default_output_modes),
        "skills": [
            {"id": s.id, "name": s.name, "description": s.description}
            for s in card.skills
        ],
    }
    for key, value in card.extra.items():
        obj[key] = value
    return obj


def to_agent_json(card: AgentCard) -> str:
    """Canonical agent.json text; raises InvalidCard on a broken card."""
    violations = validate_card(card)
    if violations:
        raise InvalidCard(violations)
    return json.dumps(card_to_obj(card), separators=(",", ":"), ensure_ascii=False)


def card_from_obj(obj) -> AgentCard:
    if not isinstance(obj, dict):
        raise InvalidCard("card: JSON object required")
    missing = [k for k in _TOP_LEVEL_KEYS if k not in obj]
    if missing:
        raise InvalidCard([f"{k}: missing mandatory field" for k in missing])
    caps_obj = obj["capabilities"]
    if not isinstance(caps_obj, dict):
        raise InvalidCard("capabilities: JSON object required")
    extensions = []
    for ext in caps_obj.get("extensions", []):
        if not isinstance(ext, dict) or "uri" not in ext:
            raise InvalidCard("capabilities.extensions: entries need a uri")
        extensions.append(AgentExtension(uri=ext["uri"], params=ext.get("params", {})))
    flags = {k: v for k, v in caps_obj.items() if k != "extensions"}
    skills_obj = obj["skills"]
    if not isinstance(skills_obj, list):
        raise InvalidCard("skills: JSON array required")
    skills = []
    for s in skills_obj:
        if not isinstance(s, dict):
            raise InvalidCard("skills: entries must be objects")
        skills.append(Skill(
            id=s.get("id", ""), name=s.get("name", ""),
            description=s.get("description", ""),
        ))
    card = AgentCard(
        name=obj["name"],
        description=obj["description"],
        url=obj["url"],
        version=obj["version"],
        capabilities=Capabilities(flags=flags, extensions=tuple(extensions)),
        default_input_modes=tuple(obj["defaultInputModes"]),
        default_output_modes=tuple(obj["defaultOutputModes"]),
        skills=tuple(skills),
        extra={k: v for k, v in obj.items() if k not in _TOP_LEVEL_KEYS},
    )
    violations = validate_card(card)
    if violations:
        raise InvalidCard(violations)
    return card


def parse_agent_json(text) -> AgentCard:
    try:
        obj = json.loads(text)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"agent.json is not valid JSON: {exc}") from exc
    return card_from_obj(obj)


def extract_x402_params(card: AgentCard) -> X402Params | None:
    """The card's x402 payment extension, or None when the card has none."""
    for ext in card.capabilities.extensions:
        if ext.uri != X402_EXTENSION_URI:
            continue
        p = ext.params
        try:
            amount = int(str(p["amount"]))
            params = X402Params(
                asset=p["asset"],
                network=p["network"],
                amount=amount,
                pay_to=p["payTo"],
                max_timeout_seconds=int(p.get("maxTimeoutSeconds", 60)),
                description=p.get("description", ""),
                asset_name=p.get("assetName", "MockUSDC"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedExtension(f"x402 extension params invalid: {exc}") from exc
        if amount < 0:
            raise MalformedExtension("x402 extension amount must be nonnegative")
        if not is_address(params.asset) or not is_address(params.pay_to):
            raise MalformedExtension("x402 extension asset/payTo must be addresses")
        if not params.network:
            raise MalformedExtension("x402 extension network must be nonempty")
        return params
    return None
