"""Entry point: ``python -m denoiser_server --stdio --model gaussian`` or
``--bind 0.0.0.0:7711 --model /path/to/unet.pt``."""

from __future__ import annotations

import argparse
import sys

from .models import load_model
from .server import DenoiserServer, ServerConfig


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddrm-denoiser-server")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--stdio", action="store_true", help="serve one client over stdin/stdout")
    mode.add_argument("--bind", help="host:port to listen on (port 0 picks a free one)")
    p.add_argument("--model", default="gaussian",
                   help="gaussian | echo | path to a TorchScript checkpoint")
    p.add_argument("--prediction", choices=("eps", "x0"), default="eps",
                   help="checkpoint output convention; eps predictions are converted")
    p.add_argument("--max-batch", type=int, default=8)
    p.add_argument("--batch-window-ms", type=float, default=5.0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model = load_model(args.model, prediction=args.prediction)
    except Exception as err:
        print(f"model load failed: {err}", file=sys.stderr)
        return 1
    cfg = ServerConfig(
        model_source=args.model,
        prediction=args.prediction,
        bind=args.bind,
        max_batch=args.max_batch,
        batch_window_ms=args.batch_window_ms,
    )
    server = DenoiserServer(cfg, model)
    if args.stdio:
        server.serve_stdio()
        return 0
    host, _, port = args.bind.rpartition(":")
    server.serve_tcp(host or "127.0.0.1", int(port))
    return 0


if __name__ == "__main__":
    sys.exit(main())
