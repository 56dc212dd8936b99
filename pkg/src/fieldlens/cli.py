"""Command line front door: offline replay and the live service.

Exit codes: 0 success, 2 session-format problem, 3 config problem.
Delivery and trace logs are line-delimited JSON, flushed per line so an
aborted run still leaves a usable partial log.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .agents import PipelineVariant
from .config import ConfigError, EngineConfig, config_from_dict, load_config
from .history import HistoryStore
from .orchestrator import Button, ButtonEvent, ProviderSet, run_replay
from .providers.base import ProviderTierConfig
from .providers.http import HttpChatProvider, HttpEmbedder
from .providers.mock import CombinedHashEmbedder, SyntheticChatProvider
from .session import (
    ProfileError,
    SessionFormatError,
    load_profile,
    load_session,
)

EXIT_OK = 0
EXIT_SESSION_ERROR = 2
EXIT_CONFIG_ERROR = 3


def build_providers(config: EngineConfig, mode: str, seed: str) -> ProviderSet:
    if mode == "mock":
        return ProviderSet(
            fast=SyntheticChatProvider(seed=f"{seed}:fast"),
            strong=SyntheticChatProvider(seed=f"{seed}:strong"),
            embedder=CombinedHashEmbedder(),
        )
    tiers = config.providers
    for name, tier in (("fast", tiers.fast), ("strong", tiers.strong), ("embedding", tiers.embedding)):
        if tier.kind != "http" or not tier.endpoint:
            raise ConfigError(
                f"live providers need providers.{name} with kind 'http' and an endpoint"
            )
    return ProviderSet(
        fast=HttpChatProvider(tiers.fast),
        strong=HttpChatProvider(tiers.strong),
        embedder=HttpEmbedder(tiers.embedding),
    )


def _load_buttons(path: Path) -> list[ButtonEvent]:
    buttons = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            row = json.loads(line)
            buttons.append(
                ButtonEvent(
                    button=Button(row["button"]),
                    t_ms=int(row["t_ms"]),
                    query_text=row.get("query_text"),
                )
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise SessionFormatError(f"buttons file line {lineno}: {exc}") from exc
    return buttons


class _LineWriter:
    """Writes one JSON object per line, flushing immediately."""

    def __init__(self, path: Optional[str]) -> None:
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def write(self, obj: dict) -> None:
        if self._fh is None:
            return
        self._fh.write(json.dumps(obj, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config) if args.config else EngineConfig()
        if args.variant:
            try:
                config.variant = PipelineVariant(args.variant)
            except ValueError:
                raise ConfigError(
                    f"unknown variant {args.variant!r}; "
                    f"expected one of {[v.value for v in PipelineVariant]}"
                ) from None
        if args.history_dir:
            config.history_dir = args.history_dir
        config.validate()
        providers = build_providers(config, args.providers, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    out = _LineWriter(args.out)
    trace = _LineWriter(args.trace)
    try:
        recording = load_session(args.session)
        profile = load_profile(args.profile)
        buttons = _load_buttons(Path(args.buttons)) if args.buttons else []

        if config.history_dir:
            profile_id = Path(args.profile).stem
            store = HistoryStore(Path(config.history_dir) / f"{profile_id}.jsonl")
            run_id = f"{recording.session_id}.r{len(store)}"
        else:
            store = HistoryStore()
            run_id = recording.session_id

        pacer = None
        if args.pace == "realtime":
            import time

            start = time.monotonic()

            def pacer(t_ms: int, _start=start) -> None:
                delay = t_ms / 1000.0 - (time.monotonic() - _start)
                if delay > 0:
                    time.sleep(delay)

        def on_event(event: dict) -> None:
            trace.write(event)
            if event["type"] == "Delivery":
                out.write(event["delivery"])

        result = run_replay(
            recording,
            profile,
            config,
            providers,
            history=store,
            buttons=buttons,
            run_id=run_id,
            on_event=on_event,
        )
    except (SessionFormatError, ProfileError) as exc:
        print(f"session error: {exc}", file=sys.stderr)
        return EXIT_SESSION_ERROR
    finally:
        out.close()
        trace.close()

    if args.metrics:
        Path(args.metrics).write_text(
            json.dumps(result.metrics.to_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
    m = result.metrics
    print(
        f"replayed {recording.session_id}: {len(result.deliveries)} deliveries "
        f"({m.ai_initiated_count} proactive, {m.user_query_count} queries, "
        f"{m.cancel_count} canceled) in {m.duration_min:.1f} min"
    )
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    try:
        config = load_config(args.config) if args.config else EngineConfig()
        config.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    app = create_app(
        data_dir=Path(args.data_dir),
        base_config=config,
        providers_mode=args.providers,
        seed=args.seed,
        token=args.token,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fieldlens")
    sub = parser.add_subparsers(dest="command", required=True)

    replay = sub.add_parser("replay", help="replay a recorded session offline")
    replay.add_argument("--session", required=True, help="session recording directory")
    replay.add_argument("--profile", required=True, help="user profile file")
    replay.add_argument("--config", default=None, help="engine config JSON")
    replay.add_argument("--variant", default=None, help="pipeline variant (full, bl-wo-r, bl-wo-rp)")
    replay.add_argument("--providers", choices=("mock", "live"), default="mock")
    replay.add_argument("--out", default=None, help="delivery log (JSONL)")
    replay.add_argument("--metrics", default=None, help="metrics output (JSON)")
    replay.add_argument("--trace", default=None, help="full event trace (JSONL)")
    replay.add_argument("--pace", choices=("realtime", "fast"), default="fast")
    replay.add_argument("--buttons", default=None, help="scripted button presses (JSONL)")
    replay.add_argument("--history-dir", default=None, help="persistent history directory")
    replay.add_argument("--seed", default="0", help="seed for the mock providers")
    replay.set_defaults(func=cmd_replay)

    serve = sub.add_parser("serve", help="run the HTTP/WebSocket service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8777)
    serve.add_argument("--data-dir", default="./fieldlens-data")
    serve.add_argument("--config", default=None, help="engine config JSON")
    serve.add_argument("--providers", choices=("mock", "live"), default="mock")
    serve.add_argument("--seed", default="0", help="seed for the mock providers")
    serve.add_argument("--token", default=None, help="static bearer token; unset disables auth")
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
