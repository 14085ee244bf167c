"""Command-line entry point: serve the live system, replay scenarios, seed
stores, and emit metric reports.

Configuration precedence per key: flags > environment > config file > defaults.
Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .actions import ActionRuntime
from .errors import ConfigConflict, InvalidSpec, StorageFailure, TriageError
from .gateway import AlertGateway, DedupPolicy, IncidentRecord, IncidentStore
from .knowledge import KnowledgeStore, load_kb_dir
from .metrics import build_report, render_report
from .orchestrator import EngineConfig, RecordingSink, TriageEngine, WebhookSink
from .reasoner import RemoteBackend, RuleEntry, ScriptedBackend
from .replay import SCENARIO_RATE_LIMIT, run_replay
from .runtime import WallRuntime
from .scenario import ScenarioSpec, ScenarioState, fallback_rules, generate, register_scenario_tools
from .telemetry import TelemetryStore, write_events_file

logger = logging.getLogger(__name__)

ENV_KEYS = {
    "REASONER_MODE": "reasoner_mode",
    "REASONER_URL": "reasoner_url",
    "REASONER_MODEL": "reasoner_model",
    "REASONER_API_KEY": "reasoner_api_key",
    "NOTIFY_URL": "notify_url",
}

CONFIG_KEYS = {
    "reasoner_mode",
    "reasoner_url",
    "reasoner_model",
    "reasoner_api_key",
    "notify_url",
    "listen",
    "scenario",
    "events",
    "kb",
    "rules",
    "out",
    "format",
    "seed",
    "workers",
    "approval_policy",
}


@dataclass
class RunConfig:
    mode: str = ""
    listen: str = "127.0.0.1:8080"
    scenario: Optional[str] = None
    events: Optional[str] = None
    kb: Optional[str] = None
    rules: Optional[str] = None
    out: Optional[str] = None
    format: str = "table"
    seed: int = 0
    workers: Optional[int] = None
    approval_policy: Optional[str] = None
    reasoner_mode: str = "scripted"
    reasoner_url: str = ""
    reasoner_model: str = ""
    reasoner_api_key: str = ""
    notify_url: Optional[str] = None
    cohorts: List[str] = field(default_factory=list)
    unthrottled: bool = False
    sequential: bool = False


def load_config(
    config_file: Optional[str],
    env: Optional[Dict[str, str]] = None,
    flags: Optional[Dict[str, object]] = None,
) -> RunConfig:
    cfg = RunConfig()
    env = dict(os.environ) if env is None else env
    flags = flags or {}

    if config_file:
        try:
            with open(config_file, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigConflict("config", f"cannot read {config_file}: {exc}") from exc
        except ValueError as exc:
            raise ConfigConflict("config", f"{config_file} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigConflict("config", "config file must hold a JSON object")
        for key, value in data.items():
            if key not in CONFIG_KEYS:
                raise ConfigConflict(key, "unknown configuration key")
            setattr(cfg, key, value)

    for env_key, attr in ENV_KEYS.items():
        if env.get(env_key):
            setattr(cfg, attr, env[env_key])

    for key, value in flags.items():
        if value is not None and value is not False:
            setattr(cfg, key, value)

    if cfg.reasoner_mode not in ("scripted", "remote"):
        raise ConfigConflict("reasoner_mode", f"must be scripted|remote, got {cfg.reasoner_mode!r}")
    if cfg.reasoner_mode == "remote" and not cfg.reasoner_url:
        raise ConfigConflict("reasoner_url", "required when reasoner_mode=remote")
    try:
        cfg.seed = int(cfg.seed)
    except (TypeError, ValueError) as exc:
        raise ConfigConflict("seed", f"not an integer: {cfg.seed!r}") from exc
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opstriage", description=__doc__)
    parser.add_argument("--config", help="JSON config file (lowest precedence after defaults)")
    sub = parser.add_subparsers(dest="mode", required=True)

    serve = sub.add_parser("serve", help="run the live triage service")
    serve.add_argument("--listen", help="host:port (default 127.0.0.1:8080)")
    serve.add_argument("--scenario", help="scenario file supplying topology, tools, rules and KB")
    serve.add_argument("--events", help="newline-delimited JSON event file to preload")
    serve.add_argument("--kb", help="knowledge directory to index")
    serve.add_argument("--rules", help="scripted rule-table file (overrides the scenario's)")
    serve.add_argument("--reasoner", dest="reasoner_mode", choices=["scripted", "remote"])
    serve.add_argument("--notify-url", dest="notify_url")
    serve.add_argument("--approval-policy", dest="approval_policy",
                       choices=["manual", "auto_approve", "auto_deny", "none"])

    replay = sub.add_parser("replay", help="replay a scenario deterministically and print metrics")
    replay.add_argument("--scenario", required=True)
    replay.add_argument("--seed", type=int)
    replay.add_argument("--out", help="incidents file (newline-delimited JSON)")
    replay.add_argument("--format", choices=["table", "csv", "json"])
    replay.add_argument("--unthrottled", action="store_true", help="ignore the scenario's rate limit")
    replay.add_argument("--sequential", action="store_true", help="disable interleaved downstream fetches")
    replay.add_argument("--approval-policy", dest="approval_policy",
                        choices=["manual", "auto_approve", "auto_deny", "none"])

    report = sub.add_parser("report", help="recompute metrics from incident files")
    report.add_argument("--cohort", action="append", dest="cohorts", metavar="NAME=PATH", required=True)
    report.add_argument("--format", choices=["table", "csv", "json"])

    seed_cmd = sub.add_parser("seed", help="validate and normalize store inputs")
    seed_cmd.add_argument("--events", help="event file to load")
    seed_cmd.add_argument("--kb", help="knowledge directory to load")
    seed_cmd.add_argument("--out-events", help="write normalized events here")
    return parser


def _flags_from_args(args: argparse.Namespace) -> Dict[str, object]:
    keep = (
        "mode listen scenario events kb rules out format seed workers approval_policy "
        "reasoner_mode notify_url cohorts unthrottled sequential"
    ).split()
    return {k: getattr(args, k) for k in keep if hasattr(args, k)}


# --------------------------------------------------------------------------
# Subcommand implementations
# --------------------------------------------------------------------------

def _reasoner_backend(cfg: RunConfig, rules: List[RuleEntry]):
    if cfg.reasoner_mode == "remote":
        return RemoteBackend(cfg.reasoner_url, cfg.reasoner_model or "default", cfg.reasoner_api_key)
    return ScriptedBackend(rules)


def cmd_serve(cfg: RunConfig) -> int:
    from .httpapi import ApiServer

    host, _, port_s = cfg.listen.partition(":")
    try:
        port = int(port_s or "8080")
    except ValueError:
        raise ConfigConflict("listen", f"bad port in {cfg.listen!r}")

    runtime = WallRuntime()
    incident_store = IncidentStore()
    knowledge = KnowledgeStore()
    telemetry = TelemetryStore(runtime)
    actions = ActionRuntime(runtime)
    topology: Dict[str, List[str]] = {}
    rules: List[RuleEntry] = []
    policy = DedupPolicy()
    workers = cfg.workers or 8

    if cfg.scenario:
        spec = ScenarioSpec.load(cfg.scenario)
        gen = generate(spec, cfg.seed)
        topology = spec.topology()
        policy = spec.dedup_policy()
        rules = spec.load_rules()
        for doc in gen.kb_docs:
            knowledge.index_doc(doc)
        state = ScenarioState(spec, gen.fault_windows)
        register_scenario_tools(actions, state)
        workers = cfg.workers or spec.workers
    else:
        rules = fallback_rules()

    if cfg.rules:
        with open(cfg.rules, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        raw = data["rules"] if isinstance(data, dict) else data
        rules = [RuleEntry.from_json(e) for e in raw] + fallback_rules()
    if cfg.events:
        n = telemetry.load_file(cfg.events)
        logger.info("loaded %d events from %s", n, cfg.events)
    if cfg.kb:
        n = load_kb_dir(knowledge, cfg.kb)
        logger.info("indexed %d docs from %s", n, cfg.kb)

    # Live mode stamps fired_at at receipt; replay trusts payload timestamps.
    gateway = AlertGateway(
        incident_store, policy=policy, id_rng=random.Random(), stamp_clock=runtime.now_ms
    )
    sink = WebhookSink(cfg.notify_url) if cfg.notify_url else RecordingSink()
    engine = TriageEngine(
        runtime=runtime,
        incident_store=incident_store,
        gateway=gateway,
        telemetry=telemetry,
        knowledge=knowledge,
        reasoner=_reasoner_backend(cfg, rules),
        actions=actions,
        topology=topology,
        config=EngineConfig(workers=workers, approval_policy=cfg.approval_policy or "manual"),
        sink=sink,
    )

    def sweeper() -> None:
        import time

        while True:
            time.sleep(10)
            engine.actions.expire_stale(runtime.now_ms(), engine.config.approval_ttl_s)

    threading.Thread(target=sweeper, daemon=True).start()

    server = ApiServer(engine, host or "127.0.0.1", port)
    print(f"listening on http://{server.address[0]}:{server.address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


def cmd_replay(cfg: RunConfig) -> int:
    spec = ScenarioSpec.load(cfg.scenario or "")
    rate_limit = None if cfg.unthrottled else SCENARIO_RATE_LIMIT
    result = run_replay(
        spec,
        cfg.seed,
        rate_limit=rate_limit,
        parallel_fetch=not cfg.sequential,
        approval_policy=cfg.approval_policy,
        out_path=cfg.out,
    )
    print(render_report([result.agent_report, result.manual_report], cfg.format))
    summarized = sum(1 for r in result.incidents if r.summary is not None)
    print(
        f"\nincidents: {len(result.incidents)} "
        f"(alerts ingested: {result.ingested_alerts}, summarized: {summarized})"
    )
    if result.audit_violations:
        print(f"approval audit: {len(result.audit_violations)} violation(s)", file=sys.stderr)
        return 1
    print("approval audit: clean")
    if cfg.out:
        print(f"incidents written to {cfg.out}")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    reports = []
    for spec in cfg.cohorts:
        name, _, path = spec.partition("=")
        if not path:
            raise ConfigConflict("cohort", f"expected NAME=PATH, got {spec!r}")
        incidents: List[IncidentRecord] = []
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        incidents.append(IncidentRecord.from_json(json.loads(line)))
        except OSError as exc:
            raise ConfigConflict("cohort", f"cannot read {path}: {exc}") from exc
        except (ValueError, KeyError) as exc:
            print(f"error: {path} is not a valid incidents file: {exc}", file=sys.stderr)
            return 1
        has_truth = all(r.verified_root_cause is not None for r in incidents) and incidents
        truth = {r.incident_id: r.verified_root_cause or "" for r in incidents} if has_truth else None
        with_eer = bool(incidents) and all(r.triage_steps for r in incidents)
        reports.append(build_report(name, incidents, ground_truth=truth, with_eer=with_eer))
    print(render_report(reports, cfg.format))
    return 0


def cmd_seed(cfg: RunConfig) -> int:
    if not cfg.events and not cfg.kb:
        raise ConfigConflict("events", "seed needs --events and/or --kb")
    if cfg.events:
        store = TelemetryStore(WallRuntime())
        n = store.load_file(cfg.events)
        print(f"events: {n} valid")
        out_events = getattr(cfg, "out_events", None)
        if out_events:
            write_events_file(out_events, store.snapshot())
            print(f"normalized events written to {out_events}")
    if cfg.kb:
        kb = KnowledgeStore()
        n = load_kb_dir(kb, cfg.kb)
        stats = kb.corpus_stats()
        print(f"kb docs: {n} indexed (avg length {stats['avg_length']:.1f} terms)")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("OPSTRIAGE_LOG", "WARNING"))
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, flags=_flags_from_args(args))
        if hasattr(args, "out_events"):
            cfg.out_events = args.out_events  # type: ignore[attr-defined]
        handler = {
            "serve": cmd_serve,
            "replay": cmd_replay,
            "report": cmd_report,
            "seed": cmd_seed,
        }[cfg.mode]
        return handler(cfg)
    except (ConfigConflict, InvalidSpec) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except StorageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TriageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
