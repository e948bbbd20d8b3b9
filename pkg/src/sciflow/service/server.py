"""Portal server entry point with the background scheduler loop."""

from __future__ import annotations

import argparse
import threading
import time

from .app import Gateway, create_app
from .config import load_config


class TickLoop(threading.Thread):
    """Drives every non-terminal instance while the server runs."""

    def __init__(self, gateway: Gateway, interval_s: float):
        super().__init__(daemon=True, name="sciflow-tick")
        self.gateway = gateway
        self.interval_s = interval_s
        self._stop = threading.Event()

    def run(self):
        engine = self.gateway.engine
        while not self._stop.is_set():
            for instance_id in engine.list_instances():
                try:
                    if engine.refresh_status(instance_id) not in ("finished", "error", "aborted"):
                        engine.tick(instance_id)
                except Exception:
                    pass  # a sick instance must not kill the loop
            self._stop.wait(self.interval_s)

    def stop(self):
        self._stop.set()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sciflow-server", description="Run the science gateway portal.")
    parser.add_argument("--config", default=None, help="JSON config file (or SCIFLOW_CONFIG)")
    parser.add_argument("--addr", default=None, help="host:port override")
    args = parser.parse_args(argv)

    config = load_config(args.config)
    if args.addr:
        from dataclasses import replace

        config = replace(config, addr=args.addr)
    gateway = Gateway(config)
    app = create_app(config, gateway)

    loop = None
    if config.autotick:
        loop = TickLoop(gateway, config.tick_interval_ms / 1000.0)
        loop.start()

    import uvicorn

    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    finally:
        if loop:
            loop.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
