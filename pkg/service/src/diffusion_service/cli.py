"""Command-line entry point: `diffusion-service [--stub] [...]`."""

from __future__ import annotations

import argparse
import sys

from diffusion_service.config import ServiceConfig
from diffusion_service.server import serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="diffusion-service",
        description="img2img generation and latent encoding over HTTP",
    )
    parser.add_argument("--stub", action="store_true",
                        help="serve the deterministic stub backend")
    parser.add_argument("--model-id", help="override MODEL_ID")
    parser.add_argument("--device", help="override DEVICE")
    parser.add_argument("--port", type=int, help="override PORT")
    parser.add_argument("--max-batch", type=int, default=4,
                        help="maximum requests admitted at once")
    parser.add_argument("--host", default="0.0.0.0")
    args = parser.parse_args(argv)

    overrides = {"max_batch": args.max_batch}
    for name in ("model_id", "device", "port"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    try:
        config = ServiceConfig.from_env(**overrides)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    server = serve(config, stub=args.stub, host=args.host)
    backend = server.state.backend
    mode = "stub" if args.stub else "model"
    status = "ready" if backend.ready else f"not-ready ({backend.detail})"
    print(f"serving {mode} backend [{backend.model_label}] on "
          f"{server.endpoint} - {status}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
