"""Thin client CLI for the cascade-rl service.

Every subcommand speaks HTTP to the service layer: against a remote
instance when --server is given, otherwise against an in-process ASGI
transport (no socket, same request/response path). Artifacts returned by
train/eval are written locally, so a remote server needs no shared disk.

Exit codes: 0 success, 2 config error, 3 case error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CASE = 3
EXIT_NUMERICAL = 4
EXIT_OTHER = 1

_ERROR_EXIT = {"config": EXIT_CONFIG, "case": EXIT_CASE, "numerical": EXIT_NUMERICAL}


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _call(server: str | None, method: str, path: str, payload: dict) -> dict:
    async def go():
        if server:
            async with httpx.AsyncClient(base_url=server, timeout=None) as client:
                r = await client.request(method, path, json=payload)
                return r.status_code, r.json()
        from .service import app

        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://cascade-rl", timeout=None
        ) as client:
            r = await client.request(method, path, json=payload)
            return r.status_code, r.json()

    status, body = asyncio.run(go())
    if status == 200:
        return body
    detail = body.get("detail", body) if isinstance(body, dict) else body
    code = _ERROR_EXIT.get(body.get("error", ""), EXIT_OTHER) if isinstance(body, dict) else EXIT_OTHER
    raise CliFailure(code, f"{detail}")


def _read_text(path: str, exit_code: int) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliFailure(exit_code, f"cannot read {path}: {exc}") from None


def _load_config(path: str) -> dict:
    try:
        doc = json.loads(_read_text(path, EXIT_CONFIG))
    except json.JSONDecodeError as exc:
        raise CliFailure(EXIT_CONFIG, f"bad config JSON {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise CliFailure(EXIT_CONFIG, "config must be a JSON object")
    return doc


def _write_artifacts(out_dir: str, body: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "episodes.csv").write_text(body["episodes_csv"], encoding="utf-8")
    (out / "summary.json").write_text(body["summary_json"], encoding="utf-8")
    (out / "reward_ma.svg").write_text(body["reward_ma_svg"], encoding="utf-8")
    if body.get("checkpoint"):
        (out / "checkpoint.json").write_text(body["checkpoint"], encoding="utf-8")


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    case_path = cfg.get("case_path")
    if not case_path:
        raise CliFailure(EXIT_CONFIG, "config requires case_path")
    out_dir = cfg.get("output_dir")
    if not out_dir:
        raise CliFailure(EXIT_CONFIG, "config requires output_dir for train")
    case_text = _read_text(case_path, EXIT_CASE)
    body = _call(
        args.server, "POST", "/train", {"case_text": case_text, "config": cfg}
    )
    _write_artifacts(out_dir, body)
    print(
        json.dumps(
            {
                "winning_rate": body["winning_rate"],
                "avg_reward": body["avg_reward"],
                "output_dir": out_dir,
            }
        )
    )
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    case_path = cfg.get("case_path")
    if not case_path:
        raise CliFailure(EXIT_CONFIG, "config requires case_path")
    out_dir = cfg.get("output_dir")
    if not out_dir:
        raise CliFailure(EXIT_CONFIG, "config requires output_dir for eval")
    case_text = _read_text(case_path, EXIT_CASE)
    checkpoint = _read_text(args.checkpoint, EXIT_CONFIG) if args.checkpoint else None
    body = _call(
        args.server,
        "POST",
        "/eval",
        {"case_text": case_text, "config": cfg, "checkpoint": checkpoint},
    )
    body = dict(body)
    body["checkpoint"] = None  # eval does not re-emit the weights
    _write_artifacts(out_dir, body)
    print(
        json.dumps(
            {
                "winning_rate": body["winning_rate"],
                "avg_reward": body["avg_reward"],
                "output_dir": out_dir,
            }
        )
    )
    return EXIT_OK


def _cmd_episode(args) -> int:
    case_text = _read_text(args.case, EXIT_CASE)
    body = _call(
        args.server,
        "POST",
        "/episode",
        {
            "case_text": case_text,
            "alpha": args.alpha,
            "seed": args.seed,
            "stages": args.stages,
            "trace": bool(args.trace),
            "attack_mode": args.attack_mode,
        },
    )
    if args.trace:
        for line in body["trace"]:
            print(line)
    else:
        body.pop("trace", None)
        print(json.dumps(body, indent=2))
    return EXIT_OK


def _cmd_dcopf(args) -> int:
    case_text = _read_text(args.case, EXIT_CASE)
    body = _call(
        args.server, "POST", "/dcopf", {"case_text": case_text, "alpha": args.alpha}
    )
    print(json.dumps(body, indent=2))
    return EXIT_OK


def _cmd_pf(args) -> int:
    case_text = _read_text(args.case, EXIT_CASE)
    body = _call(args.server, "POST", "/pf", {"case_text": case_text})
    print(json.dumps(body, indent=2))
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cascade-rl",
        description="Cascading-failure simulator, DCOPF control, and RL harness.",
    )
    p.add_argument(
        "--server",
        default=None,
        help="base URL of a running service; default runs in-process",
    )
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train an agent per a JSON config")
    t.add_argument("--config", required=True, help="path to cfg.json")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    e.add_argument("--config", required=True)
    e.add_argument("--checkpoint", default=None, help="checkpoint.json path")
    e.set_defaults(func=_cmd_eval)

    ep = sub.add_parser("episode", help="roll one fixed-action episode")
    ep.add_argument("--case", required=True)
    ep.add_argument("--alpha", type=float, default=1.0)
    ep.add_argument("--seed", type=int, default=0)
    ep.add_argument("--stages", type=int, default=3)
    ep.add_argument("--attack-mode", default="uniform")
    ep.add_argument("--trace", action="store_true", help="emit JSONL trace")
    ep.set_defaults(func=_cmd_episode)

    d = sub.add_parser("dcopf", help="one corrective redispatch, as JSON")
    d.add_argument("--case", required=True)
    d.add_argument("--alpha", type=float, default=1.0)
    d.set_defaults(func=_cmd_dcopf)

    f = sub.add_parser("pf", help="base-case AC power flow, as JSON")
    f.add_argument("--case", required=True)
    f.set_defaults(func=_cmd_pf)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.set_defaults(func=_cmd_serve)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except httpx.HTTPError as exc:
        print(f"error: transport failure: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
