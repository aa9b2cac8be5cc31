"""Command line entry point: tgrpo-adapter [--mode stub|llm] [--port N]."""

from __future__ import annotations

import argparse
import json
import sys

from .server import serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tgrpo-adapter",
        description="Reference server for the tgrpo-policy/1 wire protocol.",
    )
    parser.add_argument("--mode", choices=["stub", "llm"], default="stub")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--config", help="JSON config file (llm mode)")
    args = parser.parse_args(argv)

    config = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    serve(args.mode, args.port, config)
    return 0


if __name__ == "__main__":
    sys.exit(main())
