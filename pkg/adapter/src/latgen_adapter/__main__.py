"""CLI: serve the adapter protocol over stdio (default) or TCP."""

import argparse
import logging
import os
import sys

from .oracle import OracleStore
from .server import MockService, serve_stdio, serve_tcp
from .slat import read_slat


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="latgen-adapter", description=__doc__)
    ap.add_argument("--mock", action="store_true",
                    help="serve oracle fields toward --target-slat (no weights)")
    ap.add_argument("--target-slat", help="target latent file for mock mode")
    ap.add_argument("--sigma-min", type=float, default=0.0,
                    help="noise floor reported in the handshake")
    ap.add_argument("--resolution", type=int, default=64,
                    help="region resolution reported in the handshake")
    ap.add_argument("--listen", metavar="HOST:PORT",
                    help="serve over TCP instead of stdio")
    args = ap.parse_args(argv)

    level = os.environ.get("SCENELAT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")

    if not args.mock:
        print("error: only --mock deployments are available in this build",
              file=sys.stderr)
        return 2
    if not args.target_slat:
        print("error: --mock needs --target-slat", file=sys.stderr)
        return 2

    store = OracleStore(read_slat(args.target_slat), sigma_min=args.sigma_min)
    service = MockService(store, resolution=args.resolution)
    if args.listen:
        host, _, port = args.listen.rpartition(":")
        serve_tcp(service, host or "127.0.0.1", int(port))
    else:
        serve_stdio(service)
    return 0


if __name__ == "__main__":
    sys.exit(main())
