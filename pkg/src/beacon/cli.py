"""beacon command line: run the engine or a broker node."""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading

from .broker import BrokerConfig, BrokerNode
from .engine import Engine


def _wait_forever() -> None:
    stop = threading.Event()

    def handler(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)
    stop.wait()


def _cmd_serve(args) -> int:
    engine = Engine(data_dir=args.data_dir)
    host, port = engine.start_admin(args.host, args.port)
    print(f"engine admin endpoint: http://{host}:{port}/ddl")
    if args.init:
        with open(args.init, encoding="utf-8") as fh:
            from .query.parser import parse_all
            from .query import render

            for stmt in parse_all(fh.read()):
                out = engine.execute(render(stmt))
                if out["status"] != "ok":
                    print(f"init statement failed: {out['error']}", file=sys.stderr)
                    engine.close()
                    return 1
        print(f"applied init statements from {args.init}")
    try:
        _wait_forever()
    finally:
        engine.close()
    return 0


def _cmd_broker(args) -> int:
    if args.config:
        config = BrokerConfig.from_file(args.config)
    else:
        config = BrokerConfig(
            broker_name=args.name,
            cluster_admin_url=args.cluster,
            listen_host=args.host,
            listen_port=args.port,
            location_feed_addr=args.location_feed,
            fetch_policy=args.fetch_policy.upper(),
            sharing=args.sharing,
        )
    node = BrokerNode(config)
    host, port = node.start()
    print(f"broker {config.broker_name} listening on http://{host}:{port}")
    try:
        _wait_forever()
    finally:
        node.stop()
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("BEACON_LOG", "INFO"))
    parser = argparse.ArgumentParser(prog="beacon", description="active data engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the data engine with its admin endpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=19002)
    p.add_argument("--data-dir", default=None, help="enable DDL/WAL persistence")
    p.add_argument("--init", default=None, help="statement file to apply at startup")
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("broker", help="run a broker node")
    p.add_argument("--config", default=None, help="broker config JSON file")
    p.add_argument("--name", default="broker1")
    p.add_argument("--cluster", default="http://127.0.0.1:19002")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=18080)
    p.add_argument("--location-feed", default=None, help="host:port of LocationFeed")
    p.add_argument("--fetch-policy", default="LAZY", choices=["LAZY", "EAGER", "lazy", "eager"])
    p.add_argument("--sharing", action="store_true")
    p.set_defaults(fn=_cmd_broker)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
