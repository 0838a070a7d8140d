"""Command-line client: drives the HTTP service (in-process by default).

`reflfield <command> --config <path>` talks to the FastAPI app through an
in-process test transport, so no server needs to be running; `--server URL`
points the same client at a live deployment instead.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reflfield",
        description=(
            "Volumetric reflection-field toolkit: generate oracle datasets, "
            "train, render, evaluate, edit, and self-verify."
        ),
    )
    parser.add_argument(
        "--server",
        default=None,
        help="base URL of a running service (default: run in-process)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="run configuration file")
            p.add_argument("--seed", type=int, default=None, help="override training seed")
            p.add_argument(
                "--deterministic",
                action="store_true",
                help="force single-worker execution (always on; accepted for scripts)",
            )
            p.add_argument("--out", default=None, help="override output directory")

    common(sub.add_parser("oracle-gen", help="write an analytic dataset"))
    common(sub.add_parser("train", help="fit a field to the train split"))
    common(sub.add_parser("render", help="render the test cameras from a checkpoint"))
    common(sub.add_parser("eval", help="PSNR/MAE over the test split"))
    edit = sub.add_parser("edit", help="render with appearance overrides")
    common(edit)
    edit.add_argument("--roughness-scale", type=float, default=None)
    edit.add_argument("--diffuse-rgb", default=None, help="three values: r,g,b")
    edit.add_argument("--tint-scale", type=float, default=None)
    sub.add_parser("verify", help="run the self-check suites")
    init = sub.add_parser("init-config", help="write a documented default config")
    init.add_argument("--out", default="run.ini", help="where to write the file")
    return parser


def _request_body(args: argparse.Namespace) -> dict:
    body = {"config_path": args.config}
    if args.seed is not None:
        body["seed"] = args.seed
    if args.deterministic:
        body["deterministic"] = True
    if args.out:
        body["out_dir"] = args.out
    return body


def _parse_rgb(raw: str) -> list[float]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise SystemExit(f"error: --diffuse-rgb expects three values, got {raw!r}")
    return [float(p) for p in parts]


class _Client:
    """Uniform POST interface over in-process or remote transports."""

    def __init__(self, server: Optional[str]):
        if server is None:
            import warnings

            with warnings.catch_warnings():
                # The transport shim's import-time deprecation chatter is not
                # actionable for users of this CLI.
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app)
            self._base = ""
        else:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
            self._base = ""

    def post(self, path: str, body: dict):
        return self._client.post(path, json=body)


def _print_result(payload: dict) -> None:
    for msg in payload.get("messages", []):
        print(msg)
    metrics = payload.get("metrics", {})
    for key in sorted(metrics):
        print(f"{key}={metrics[key]:.6f}")
    for out in payload.get("outputs", []):
        print(f"wrote {out}")


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "init-config":
        from .config import write_default_config

        write_default_config(args.out)
        print(f"wrote {args.out}")
        return 0

    client = _Client(args.server)
    if args.command == "verify":
        resp = client.post("/commands/verify", {"config_path": "-"})
        if resp.status_code != 200:
            print(f"error: {resp.text}", file=sys.stderr)
            return 2
        payload = resp.json()
        width = max(len(s["name"]) for s in payload["suites"])
        for s in payload["suites"]:
            status = "pass" if s["ok"] else "FAIL"
            print(
                f"{s['name']:<{width}}  cases {s['cases']:>5}  "
                f"worst {s['worst']:.3e}  limit {s['threshold']:.1e}  {status}"
            )
        return 0 if payload["ok"] else 1

    body = _request_body(args)
    if args.command == "edit":
        if args.roughness_scale is not None:
            body["roughness_scale"] = args.roughness_scale
        if args.tint_scale is not None:
            body["tint_scale"] = args.tint_scale
        if args.diffuse_rgb is not None:
            body["diffuse_rgb"] = _parse_rgb(args.diffuse_rgb)

    resp = client.post(f"/commands/{args.command}", body)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except (ValueError, json.JSONDecodeError):
            detail = resp.text
        print(f"error: {detail}", file=sys.stderr)
        return 1
    _print_result(resp.json())
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
