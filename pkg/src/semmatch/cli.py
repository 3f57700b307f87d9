"""Command-line client for the matching service.

Every subcommand marshals its arguments into a service request and sends it
over HTTP. With --server the request goes to a running instance; without it
the service app is mounted in-process over an ASGI transport, so the CLI
works standalone while exercising the exact same endpoint code. Paths are
resolved on the service host; run client and server on a shared filesystem.

Exit codes: 0 success, 1 data error (any failed file/pair, failed gradcheck,
HTTP error), 2 usage error.

Stage timings go to stderr so stdout stays byte-deterministic for a given
seed and inputs.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE = 2

CACHE_ROOT_ENV = "SEMMATCH_CACHE_ROOT"
SERVER_ENV = "SEMMATCH_SERVER"


def _post(args: argparse.Namespace, path: str, payload: dict) -> dict:
    """POST to the configured server, or to an in-process app instance."""

    async def go() -> httpx.Response:
        if args.server:
            async with httpx.AsyncClient(base_url=args.server, timeout=None) as client:
                return await client.post(path, json=payload)
        from .service.app import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://semmatch.local", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    response = asyncio.run(go())
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        print(f"error: {detail}", file=sys.stderr)
        raise SystemExit(EXIT_DATA_ERROR)
    return response.json()


def _config_payload(args: argparse.Namespace) -> dict:
    base: dict = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    overrides = {
        "weights": args.weights,
        "cache_root": args.cache_root,
        "dim": args.dim,
        "n_layers": args.layers,
        "heads": args.heads,
        "max_keypoints": args.max_keypoints,
        "gt_radius": args.gt_radius,
        "min_score": args.min_score,
        "seed": args.seed,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    if not base.get("weights"):
        print("error: --weights (or a config file providing it) is required", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    if not base.get("cache_root"):
        print(
            f"error: --cache-root, the {CACHE_ROOT_ENV} env var, or a config file is required",
            file=sys.stderr,
        )
        raise SystemExit(EXIT_USAGE)
    return base


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--weights", help="weights file (SCW1)")
    parser.add_argument(
        "--cache-root",
        default=os.environ.get(CACHE_ROOT_ENV),
        help=f"feature cache directory (default: ${CACHE_ROOT_ENV})",
    )
    parser.add_argument("--dim", type=int, default=None, help="shared descriptor dimension")
    parser.add_argument("--layers", type=int, default=None, help="attention layers per branch")
    parser.add_argument("--heads", type=int, default=None, help="attention heads")
    parser.add_argument("--max-keypoints", type=int, default=None, help="keep top-K keypoints by score")
    parser.add_argument("--gt-radius", type=float, default=None, help="ground-truth pixel radius")
    parser.add_argument("--min-score", type=float, default=None, help="minimum match score")
    parser.add_argument("--seed", type=int, default=None, help="seed for randomized stages")


def cmd_extract(args: argparse.Namespace) -> int:
    data = _post(
        args,
        "/v1/extract",
        {"files": args.files, "config": _config_payload(args), "jobs": args.jobs},
    )
    for res in data["results"]:
        if res.get("error"):
            print(f"error: {res['file']}: {res['error']}", file=sys.stderr)
        else:
            state = "hit" if res["cache_hit"] else "computed"
            print(f"{res['key']} {res['file']} {state} n={res['n_keypoints']}")
            if res["timings"]:
                stages = " ".join(f"{k}={v * 1000:.1f}ms" for k, v in res["timings"].items())
                print(f"timing {res['file']}: {stages}", file=sys.stderr)
    return EXIT_DATA_ERROR if data["n_failed"] else EXIT_OK


def cmd_match(args: argparse.Namespace) -> int:
    pairs = json.loads(Path(args.pairs).read_text())
    payload = {
        "pairs": pairs,
        "config": _config_payload(args),
        "out_dir": args.out_dir,
        "texture_only": args.texture_only,
        "jobs": args.jobs,
    }
    data = _post(args, "/v1/match", payload)
    for res in data["results"]:
        if res.get("error"):
            print(f"error: {res['name']}: {res['error']}", file=sys.stderr)
        else:
            print(f"{res['name']} {res['n_matches']} {res['match_file']}")
    return EXIT_DATA_ERROR if data["n_failed"] else EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    pairs = json.loads(Path(args.pairs).read_text())
    payload = {
        "pairs": pairs,
        "config": _config_payload(args),
        "out_csv": args.out_csv,
        "out_json": args.out_json,
        "sampson_thresholds": args.sampson_threshold,
    }
    data = _post(args, "/v1/eval", payload)
    summary = {
        "auc": data["auc"],
        "mean_precision": data["mean_precision"],
        "mean_recall": data["mean_recall"],
        "n_pairs": data["n_pairs"],
        "n_gt_empty": data["n_gt_empty"],
        "n_pose_failed": data["n_pose_failed"],
        "sampson_threshold": data["sampson_threshold"],
        "threshold_sweep": data["threshold_sweep"],
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    if args.toy:
        from .supervision.train import toy_mechanism_config

        cfg = json.loads(toy_mechanism_config().to_json())
    elif args.train_config:
        cfg = json.loads(Path(args.train_config).read_text())
    else:
        print("error: provide --train-config FILE or --toy", file=sys.stderr)
        return EXIT_USAGE
    if args.steps is not None:
        cfg["steps"] = args.steps
    if args.lr is not None:
        cfg["lr"] = args.lr
    payload = dict(cfg)
    payload.update(
        {"seed": args.seed or 0, "out_weights": args.out, "out_log": args.log}
    )
    data = _post(args, "/v1/train", payload)
    print(f"weights {data['out_weights']}")
    print(f"log {data['out_log']}")
    print(
        f"steps {data['steps']} precision {data['initial_precision']:.4f}"
        f" -> {data['final_precision']:.4f}"
    )
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    payload = {
        "seed": args.seed or 0,
        "step": args.step,
        "tolerance": args.tolerance,
        "n_keypoints": args.keypoints,
        "dim": args.dim,
        "heads": args.heads,
        "n_layers": args.layers,
    }
    data = _post(args, "/v1/gradcheck", payload)
    verdict = "PASS" if data["passed"] else "FAIL"
    print(
        f"{verdict} max_rel_err={data['max_rel_err']:.3e} worst={data['worst_tensor']}"
        f" params={data['n_parameters']} tol={data['tolerance']:.1e}"
    )
    return EXIT_OK if data["passed"] else EXIT_DATA_ERROR


def cmd_viz(args: argparse.Namespace) -> int:
    payload = {
        "a": args.a,
        "b": args.b,
        "config": _config_payload(args),
        "out_svg": args.out,
        "mode": args.mode,
        "matches": args.matches,
        "geometry": args.gt,
        "query_index": args.query,
        "channel": args.channel,
        "top_k": args.top_k,
    }
    data = _post(args, "/v1/viz", payload)
    print(f"{data['out_svg']} lines={data['n_lines']} highlighted={data['n_highlighted']}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semmatch",
        description="Semantic-conditioned local feature matching",
    )
    parser.add_argument(
        "--server",
        default=os.environ.get(SERVER_ENV),
        help=f"service URL; omit to run in-process (default: ${SERVER_ENV})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="refine interchange files and cache the features")
    _add_config_flags(p)
    p.add_argument("files", nargs="+", help="SCF1 interchange files")
    p.add_argument("--jobs", type=int, default=1, help="parallel files")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("match", help="match pairs of interchange files")
    _add_config_flags(p)
    p.add_argument("pairs", help='JSON list of {"name", "a", "b"}')
    p.add_argument("--out-dir", required=True, help="directory for match files")
    p.add_argument("--texture-only", action="store_true", help="bypass semantic conditioning")
    p.add_argument("--jobs", type=int, default=1, help="parallel pairs")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="matching metrics and pose AUC for matched pairs")
    _add_config_flags(p)
    p.add_argument("pairs", help='JSON list of {"name", "a", "b", "matches", "geometry"}')
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json", required=True)
    p.add_argument(
        "--sampson-threshold",
        type=float,
        nargs="+",
        default=[1e-3],
        help="Sampson inlier threshold(s); a list is swept and the best by AUC@5 reported",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="train refinement weights on synthetic scenes")
    p.add_argument("--train-config", help="TrainConfig JSON document")
    p.add_argument("--toy", action="store_true", help="use the tuned toy mechanism preset")
    p.add_argument("--steps", type=int, default=None, help="override step count")
    p.add_argument("--lr", type=float, default=None, help="override learning rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output weights file (SCW1)")
    p.add_argument("--log", required=True, help="output metrics CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-3, help="finite-difference base step")
    p.add_argument("--tolerance", type=float, default=1e-3, help="failure threshold")
    p.add_argument("--keypoints", type=int, default=8, help="keypoints in the check problem")
    p.add_argument("--dim", type=int, default=16, help="descriptor dimension of the check stack")
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--layers", type=int, default=2)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("viz", help="render matches or a similarity heat map as SVG")
    _add_config_flags(p)
    p.add_argument("--a", required=True, help="first interchange file")
    p.add_argument("--b", required=True, help="second interchange file")
    p.add_argument("--out", required=True, help="output SVG path")
    p.add_argument("--mode", choices=("matches", "heatmap"), default="matches")
    p.add_argument("--matches", help="match file (matches mode)")
    p.add_argument("--gt", help="geometry sidecar for correctness coloring")
    p.add_argument("--query", type=int, default=0, help="query keypoint (heatmap mode)")
    p.add_argument(
        "--channel", choices=("texture", "semantic", "conditioned"), default="conditioned"
    )
    p.add_argument("--top-k", type=int, default=128)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except httpx.HTTPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON input: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
