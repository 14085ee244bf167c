"""Pluggable inference contract shared by the triage agents.

Two backends implement ``complete(prompt) -> StructuredResponse``:

* ``ScriptedBackend`` — a deterministic rule table (substring matches over
  the prompt's context blocks, parameterized response templates). Pure
  function of (prompt, rule table); used for tests and replay.
* ``RemoteBackend``   — chat-completion-style JSON over HTTP at temperature 0
  with one repair retry on schema violations.

Every response is validated against a registered schema before anything
downstream consumes it. Schemas are closed on required fields, open on
extras.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import jsonschema

from .errors import BackendUnavailable, MalformedModelOutput, NoRuleMatched

PROMPT_BUDGET_BYTES = 32 * 1024
TRUNCATION_MARKER = "[truncated]"


class AgentRole(str, Enum):
    LOG_AGENT = "LOG_AGENT"
    PLANNER = "PLANNER"
    REFLECTOR = "REFLECTOR"


# --------------------------------------------------------------------------
# Response schemas
# --------------------------------------------------------------------------

_HYPOTHESIS_SCHEMA = {
    "type": "object",
    "required": ["statement", "fault_component", "kind", "confidence"],
    "properties": {
        "statement": {"type": "string"},
        "fault_component": {"type": "string"},
        "kind": {
            "enum": [
                "CODE_REGRESSION",
                "CONFIG",
                "DEPENDENCY_FAILURE",
                "DATA_CONTENT",
                "INFRA",
                "UNKNOWN",
            ]
        },
        "confidence": {"type": "number", "minimum": 0, "maximum": 1},
    },
}

_CONDITION_SCHEMA = {
    "type": "object",
    "required": ["step_id", "kind"],
    "properties": {
        "step_id": {"type": "string"},
        "kind": {"enum": ["succeeded", "equals", "contains"]},
        "field": {"type": "string"},
        "value": {"type": "string"},
    },
}

_STEP_SCHEMA = {
    "type": "object",
    "required": ["step_id", "goal", "action"],
    "properties": {
        "step_id": {"type": "string"},
        "goal": {"type": "string"},
        "action": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["INVOKE_TOOL", "QUERY_KNOWLEDGE", "QUERY_LOGS", "SYNTHESIZE"]},
                "tool": {"type": "string"},
                "args": {"type": "object"},
                "kind": {"type": "string"},
                "query": {"type": "string"},
                "log_query": {"type": "object"},
            },
        },
        "condition": _CONDITION_SCHEMA,
    },
}

SCHEMAS: Dict[str, dict] = {
    "gaps.v1": {
        "type": "object",
        "required": ["gaps"],
        "properties": {
            "gaps": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["gap_id", "description", "resolvable_by"],
                    "properties": {
                        "gap_id": {"type": "string"},
                        "description": {"type": "string", "minLength": 1},
                        "resolvable_by": {
                            "enum": ["TOOL", "RUNBOOK", "WIKI", "DEPLOYMENT_METADATA", "LOGS"]
                        },
                    },
                },
            }
        },
    },
    "plan.v1": {
        "type": "object",
        "required": ["hypothesis", "steps"],
        "properties": {"hypothesis": _HYPOTHESIS_SCHEMA, "steps": {"type": "array", "items": _STEP_SCHEMA}},
    },
    "summary.v1": {
        "type": "object",
        "required": ["headline", "fault_component", "hypothesis", "findings", "recommended_action"],
        "properties": {
            "headline": {"type": "string"},
            "fault_component": {"type": "string"},
            "hypothesis": _HYPOTHESIS_SCHEMA,
            "findings": {"type": "object", "additionalProperties": {"type": "string"}},
            "recommended_action": {
                "type": "object",
                "required": ["text"],
                "properties": {"text": {"type": "string"}, "tool": {"type": "string"}},
            },
        },
    },
}

_CRITERION_SCHEMA = {
    "type": "object",
    "required": ["pass", "rationale"],
    "properties": {"pass": {"type": "boolean"}, "rationale": {"type": "string"}},
}

SCHEMAS["verdict.v1"] = {
    "type": "object",
    "required": ["completeness", "causality", "actionability", "overall"],
    "properties": {
        "completeness": _CRITERION_SCHEMA,
        "causality": _CRITERION_SCHEMA,
        "actionability": _CRITERION_SCHEMA,
        "overall": {"enum": ["ACCEPT", "REVISE"]},
        "revision_directives": {"type": "array", "items": {"type": "string"}},
    },
}


_VALIDATORS: Dict[str, jsonschema.Draft202012Validator] = {}


def register_schema(schema_id: str, schema: dict) -> None:
    SCHEMAS[schema_id] = schema
    _VALIDATORS.pop(schema_id, None)


def _validator(schema_id: str) -> jsonschema.Draft202012Validator:
    v = _VALIDATORS.get(schema_id)
    if v is None:
        v = jsonschema.Draft202012Validator(SCHEMAS[schema_id])
        _VALIDATORS[schema_id] = v
    return v


def _violation_path(error: jsonschema.ValidationError) -> str:
    path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in error.absolute_path)
    m = re.match(r"'(.+?)' is a required property", error.message)
    if m:
        path = f"{path}.{m.group(1)}"
    return path or "."


def validate_response(raw_text: str, schema_id: str) -> dict:
    """Parse + schema-check model output; exact required-field enforcement,
    extraneous fields accepted and preserved."""
    if schema_id not in SCHEMAS:
        raise MalformedModelOutput(".", f"unknown schema {schema_id!r}")
    try:
        body = json.loads(raw_text)
    except ValueError as exc:
        raise MalformedModelOutput(".", f"not a JSON document: {exc}") from exc
    errors = sorted(_validator(schema_id).iter_errors(body), key=lambda e: str(list(e.absolute_path)))
    if errors:
        first = errors[0]
        raise MalformedModelOutput(_violation_path(first), first.message)
    return body


# --------------------------------------------------------------------------
# Prompts
# --------------------------------------------------------------------------

@dataclass
class AgentPrompt:
    agent_role: AgentRole
    instructions: str
    context_blocks: List[Tuple[str, str]]
    response_schema_id: str

    def block(self, label: str) -> Optional[str]:
        for lbl, text in self.context_blocks:
            if lbl == label:
                return text
        return None


def render_prompt(
    role: AgentRole,
    instructions: str,
    blocks: Sequence[Tuple[str, str]],
    schema_id: str,
    budget_bytes: int = PROMPT_BUDGET_BYTES,
) -> AgentPrompt:
    """Drop oldest evidence blocks until the rest fit the budget; an explicit
    marker block records the truncation."""
    if schema_id not in SCHEMAS:
        raise MalformedModelOutput(".", f"unknown schema {schema_id!r}")
    kept: List[Tuple[str, str]] = list(blocks)
    dropped = 0
    while kept and sum(len(t.encode("utf-8")) for _, t in kept) > budget_bytes:
        kept.pop(0)
        dropped += 1
    if dropped:
        kept.insert(0, ("truncation", f"{TRUNCATION_MARKER} {dropped} oldest block(s) dropped"))
    return AgentPrompt(
        agent_role=role, instructions=instructions, context_blocks=kept, response_schema_id=schema_id
    )


@dataclass
class StructuredResponse:
    schema_id: str
    body: dict
    raw_text: str


class ReasonerBackend:
    def complete(self, prompt: AgentPrompt) -> StructuredResponse:
        raise NotImplementedError


# --------------------------------------------------------------------------
# Scripted backend
# --------------------------------------------------------------------------

@dataclass
class RuleEntry:
    agent_role: AgentRole
    schema_id: str
    response_template: Any
    match: List[dict] = field(default_factory=list)  # [{"block"?: label, "contains": str}]
    priority: int = 0

    def matches(self, prompt: AgentPrompt) -> bool:
        if prompt.agent_role != self.agent_role or prompt.response_schema_id != self.schema_id:
            return False
        for cond in self.match:
            needle = cond["contains"]
            label = cond.get("block")
            if label is not None:
                text = prompt.block(label)
                if text is None or needle not in text:
                    return False
            else:
                if not any(needle in text for _, text in prompt.context_blocks):
                    return False
        return True

    @classmethod
    def from_json(cls, obj: dict) -> "RuleEntry":
        return cls(
            agent_role=AgentRole(obj["agent_role"]),
            schema_id=obj["schema_id"],
            response_template=obj["response"],
            match=list(obj.get("match", [])),
            priority=int(obj.get("priority", 0)),
        )


_PLACEHOLDER_RE = re.compile(r"\{(fact|alert|step|block):([A-Za-z0-9_.\-]+)\}")


def _context_namespace(prompt: AgentPrompt) -> Dict[str, Any]:
    ns: Dict[str, Any] = {"fact": {}, "alert": {}, "step": {}, "block": {}}
    for label, text in prompt.context_blocks:
        ns["block"][label] = text
        if label == "facts":
            try:
                ns["fact"] = json.loads(text)
            except ValueError:
                pass
        elif label == "outcomes":
            try:
                ns["step"] = json.loads(text)
            except ValueError:
                pass
        elif label == "alert":
            for line in text.splitlines():
                if "=" in line:
                    k, _, v = line.partition("=")
                    ns["alert"][k.strip()] = v.strip()
    return ns


def _lookup(ns: Dict[str, Any], space: str, dotted: str) -> Any:
    cur: Any = ns.get(space, {})
    for part in dotted.split("."):
        if isinstance(cur, dict) and part in cur:
            cur = cur[part]
        else:
            raise NoRuleMatched(f"unresolved template placeholder {{{space}:{dotted}}}")
    return cur


def _substitute(template: Any, ns: Dict[str, Any]) -> Any:
    if isinstance(template, dict):
        return {k: _substitute(v, ns) for k, v in template.items()}
    if isinstance(template, list):
        return [_substitute(v, ns) for v in template]
    if isinstance(template, str):
        return _PLACEHOLDER_RE.sub(lambda m: str(_lookup(ns, m.group(1), m.group(2))), template)
    return template


class ScriptedBackend(ReasonerBackend):
    """Stateless after load; identical prompt -> identical response."""

    def __init__(self, rules: Sequence[RuleEntry]):
        self.rules = list(rules)

    @classmethod
    def from_json(cls, obj: Any) -> "ScriptedBackend":
        entries = obj["rules"] if isinstance(obj, dict) else obj
        return cls([RuleEntry.from_json(e) for e in entries])

    @classmethod
    def from_file(cls, path: str) -> "ScriptedBackend":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def complete(self, prompt: AgentPrompt) -> StructuredResponse:
        best: Optional[Tuple[int, int, RuleEntry]] = None
        for idx, rule in enumerate(self.rules):
            if not rule.matches(prompt):
                continue
            key = (-rule.priority, idx)
            if best is None or key < (best[0], best[1]):
                best = (key[0], key[1], rule)
        if best is None:
            raise NoRuleMatched(
                f"no rule for role={prompt.agent_role.value} schema={prompt.response_schema_id}"
            )
        body = _substitute(best[2].response_template, _context_namespace(prompt))
        raw = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return StructuredResponse(
            schema_id=prompt.response_schema_id,
            body=validate_response(raw, prompt.response_schema_id),
            raw_text=raw,
        )


# --------------------------------------------------------------------------
# Remote backend
# --------------------------------------------------------------------------

class RemoteBackend(ReasonerBackend):
    """Chat-completion wire format; temperature 0; one repair retry that
    re-sends the schema violation. In-flight calls capped per backend."""

    def __init__(self, url: str, model: str, api_key: str = "", max_in_flight: int = 4, timeout_s: float = 30.0):
        self.url = url
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s
        self._gate = threading.Semaphore(max_in_flight)

    def _post(self, messages: List[dict]) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                self.url,
                json={"model": self.model, "messages": messages, "temperature": 0},
                headers=headers,
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"reasoner transport failure: {exc}") from exc
        if resp.status_code >= 500:
            raise BackendUnavailable(f"reasoner returned {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendUnavailable(f"reasoner rejected request: {resp.status_code} {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as exc:
            raise BackendUnavailable(f"reasoner response not chat-completion shaped: {exc}") from exc

    def complete(self, prompt: AgentPrompt) -> StructuredResponse:
        messages = [{"role": "system", "content": prompt.instructions}]
        context = "\n\n".join(f"### {label}\n{text}" for label, text in prompt.context_blocks)
        messages.append(
            {
                "role": "user",
                "content": f"{context}\n\nRespond with a single JSON object matching schema "
                f"{prompt.response_schema_id}.",
            }
        )
        with self._gate:
            raw = self._post(messages)
            try:
                body = validate_response(raw, prompt.response_schema_id)
            except MalformedModelOutput as first_err:
                repair = messages + [
                    {"role": "assistant", "content": raw},
                    {
                        "role": "user",
                        "content": f"Your output violated the schema at {first_err.path}. "
                        "Reply again with one corrected JSON object only.",
                    },
                ]
                raw = self._post(repair)
                body = validate_response(raw, prompt.response_schema_id)
        return StructuredResponse(schema_id=prompt.response_schema_id, body=body, raw_text=raw)
