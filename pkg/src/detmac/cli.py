"""Command-line client.

Every subcommand is a thin HTTP call: by default the request goes through an
in-process transport to the bundled service (no socket, no daemon), and
--server redirects the same call to a remote instance.  Outputs land in
--out as files plus a short summary on stdout.

Exit codes: 0 success, 1 a checked property or bound was violated,
2 bad input (unreadable file, parse error, invalid scenario).
Set DETMAC_LOG=debug (or info/warning) for logging.
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import os
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2


def _client(server: str | None) -> httpx.AsyncClient:
    if server:
        return httpx.AsyncClient(base_url=server, timeout=600.0)
    from .service.app import app
    return httpx.AsyncClient(transport=httpx.ASGITransport(app=app),
                             base_url="http://detmac", timeout=None)


def _write_files(out: str, files: list[dict]) -> list[str]:
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for f in files:
        path = outdir / f["name"]
        path.write_text(f["content"])
        written.append(str(path))
    return written


def _print_issues(issues: list[dict]) -> None:
    for issue in issues:
        line = issue.get("line")
        prefix = f"line {line}: " if line is not None else ""
        print(f"error: {prefix}{issue['message']}", file=sys.stderr)


def _finish(payload: dict, out: str | None) -> int:
    _print_issues(payload.get("issues", []))
    if out is not None and payload.get("files"):
        for path in _write_files(out, payload["files"]):
            print(f"wrote {path}")
    if payload.get("summary"):
        print(payload["summary"], end="")
    if payload.get("input_error"):
        return EXIT_INPUT
    return EXIT_OK if payload.get("ok") else EXIT_VIOLATION


def _post(args, endpoint: str, body: dict) -> dict:
    async def go() -> dict:
        async with _client(args.server) as client:
            reply = await client.post(endpoint, json=body)
            reply.raise_for_status()
            return reply.json()

    return asyncio.run(go())


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        print(f"error: cannot read {path}: {e}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT) from None


def cmd_simulate(args) -> int:
    body = {"scenario": _read_text(args.scenario), "fmt": args.format,
            "trace": args.trace}
    if args.seed is not None:
        body["seed"] = args.seed
    return _finish(_post(args, "/simulate", body), args.out)


def cmd_validate(args) -> int:
    payload = _post(args, "/validate", {"scenario": _read_text(args.scenario)})
    _print_issues(payload.get("issues", []))
    if payload["ok"]:
        print("scenario ok")
        return EXIT_OK
    return EXIT_INPUT


def cmd_sweep_assoc(args) -> int:
    body = {"bo": args.bo, "nmax": args.nmax,
            "levels": [int(v) for v in args.levels.split(",")],
            "trials": args.trials, "seed": args.seed or 0, "fmt": args.format}
    return _finish(_post(args, "/sweep/association", body), args.out)


def cmd_sweep_capture(args) -> int:
    body = {"delta_min": args.min, "delta_max": args.max, "step": args.step,
            "trials": args.trials, "margin_db": args.margin,
            "bias_db": args.bias, "noise_sigma_db": args.noise,
            "loss": args.loss, "error_rate": args.error_rate,
            "seed": args.seed or 0, "fmt": args.format}
    return _finish(_post(args, "/sweep/capture", body), args.out)


def cmd_verify(args) -> int:
    body: dict = {"marking_cap": args.cap, "fmt": args.format}
    if args.bundled:
        body["bundled"] = args.model
    else:
        body["model_text"] = _read_text(args.model)
    return _finish(_post(args, "/verify", body), args.out)


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def _common(sub: argparse.ArgumentParser, trials_default: int | None = None) -> None:
    sub.add_argument("--server", help="remote service URL (default: in-process)")
    sub.add_argument("--out", default="detmac-out",
                     help="directory for rendered tables")
    sub.add_argument("--format", choices=("table", "json-lines"),
                     default="table", help="machine-readable output format")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the random seed")
    if trials_default is not None:
        sub.add_argument("--trials", type=int, default=trials_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detmac",
        description="deterministic MAC simulator and protocol checker")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario file")
    p.add_argument("scenario")
    p.add_argument("--trace", action="store_true", help="record an event trace")
    _common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("validate", help="check a scenario file without running it")
    p.add_argument("scenario")
    p.add_argument("--server", help="remote service URL (default: in-process)")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("sweep-assoc",
                       help="association latency vs. reservation level")
    p.add_argument("--bo", type=int, default=3)
    p.add_argument("--nmax", type=int, default=3)
    p.add_argument("--levels", default="0,1,2,3",
                   help="comma-separated reservation levels")
    _common(p, trials_default=1000)
    p.set_defaults(fn=cmd_sweep_assoc)

    p = sub.add_parser("sweep-capture",
                       help="simultaneous-transmission success vs. power delta")
    p.add_argument("--min", type=float, default=-30.0)
    p.add_argument("--max", type=float, default=30.0)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--margin", type=float, default=10.0)
    p.add_argument("--bias", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--loss", choices=("ideal", "lossy"), default="ideal")
    p.add_argument("--error-rate", type=float, default=0.0)
    _common(p, trials_default=8)
    p.set_defaults(fn=cmd_sweep_capture)

    p = sub.add_parser("verify", help="check a protocol model file")
    p.add_argument("model", help="model file path, or a bundled name with --bundled")
    p.add_argument("--bundled", action="store_true",
                   help="treat the argument as a bundled model name")
    p.add_argument("--cap", type=int, default=8,
                    help="per-place token cap during exploration")
    _common(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8350)
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("DETMAC_LOG", "").upper()
    if level:
        logging.basicConfig(level=getattr(logging, level, logging.INFO))
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except httpx.HTTPError as e:
        print(f"error: service request failed: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
