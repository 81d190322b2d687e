"""Command-line client for the chaosense service.

Every verb reads a flat `key = value` config file, posts it to a running
service, and writes the returned files under --out. `chaosense serve` starts
the service itself. For `reconstruct`, the config keys `measurements` and
`truth` name local CSV files whose contents are inlined into the request
(the server never sees client paths).
"""

from __future__ import annotations

import argparse
import os
import sys

import httpx

from .configfile import ConfigError, parse_config_text

DEFAULT_URL = os.environ.get("CHAOSENSE_URL", "http://127.0.0.1:8000")


def make_client(url: str) -> httpx.Client:
    """HTTP client for the service; test suites monkeypatch this factory."""
    return httpx.Client(base_url=url, timeout=None)


def _load_config(path: str) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise SystemExit(f"cannot read config file {path}: {exc}")
    except ConfigError as exc:
        raise SystemExit(f"bad config file {path}: {exc}")


def _write_outputs(files: dict[str, str], out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, content in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(content)
        print(f"wrote {path}")


def _post(args, endpoint: str, payload: dict) -> int:
    try:
        with make_client(args.url) as client:
            resp = client.post(endpoint, json=payload)
    except httpx.HTTPError as exc:
        print(f"cannot reach service at {args.url}: {exc}", file=sys.stderr)
        print("start one with: chaosense serve", file=sys.stderr)
        return 2
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        print(f"service error ({resp.status_code}): {detail}", file=sys.stderr)
        return 1
    body = resp.json()
    _write_outputs(body["files"], args.out)
    for key, value in body["summary"].items():
        print(f"{key} = {value}")
    return 0


def _cmd_simple(endpoint: str):
    def run(args) -> int:
        cfg = _load_config(args.config)
        payload = {"config": cfg, "seed": args.seed}
        if endpoint == "/sweep":
            payload["workers"] = args.workers
        return _post(args, endpoint, payload)

    return run


def _cmd_reconstruct(args) -> int:
    cfg = _load_config(args.config)
    payload = {"config": cfg, "seed": args.seed,
               "measurements_csv": None, "truth_csv": None}
    meas_path = cfg.pop("measurements", None)
    truth_path = cfg.pop("truth", None)
    for key, path in (("measurements_csv", meas_path), ("truth_csv", truth_path)):
        if path is not None:
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    payload[key] = fh.read()
            except OSError as exc:
                print(f"cannot read {path}: {exc}", file=sys.stderr)
                return 1
    payload["config"] = cfg
    return _post(args, "/reconstruct", payload)


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaosense",
        description="Chaotic-modulation AIC toolkit (thin client; see 'serve')")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="path to a key = value config file")
        p.add_argument("--out", required=True, help="directory for output files")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--url", default=DEFAULT_URL, help="service base URL")

    p = sub.add_parser("measure", help="generate a sparse signal and measure it")
    add_common(p)
    p.set_defaults(func=_cmd_simple("/measure"))

    p = sub.add_parser("reconstruct", help="reconstruct sparse coefficients")
    add_common(p)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("slle", help="scan the largest supreme local Lyapunov exponent")
    add_common(p)
    p.set_defaults(func=_cmd_simple("/slle"))

    p = sub.add_parser("bandwidth", help="98%%-energy bandwidth of a chaotic state")
    add_common(p)
    p.set_defaults(func=_cmd_simple("/bandwidth"))

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over K and T grids")
    add_common(p)
    p.add_argument("--workers", type=int, default=1, help="parallel trial workers")
    p.set_defaults(func=_cmd_simple("/sweep"))

    p = sub.add_parser("serve", help="run the service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
