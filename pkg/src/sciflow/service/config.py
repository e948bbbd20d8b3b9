"""Service configuration: one JSON file plus environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional


@dataclass(frozen=True)
class ServiceConfig:
    addr: str = "127.0.0.1:8420"
    store_dir: str = "./sciflow-store"
    token_ttl_s: float = 3600.0
    tick_interval_ms: float = 200.0
    sim_step_s: float = 3600.0
    initial_admin_password: str = "admin"
    ui_dir: Optional[str] = None
    autotick: bool = True
    backends: tuple[dict, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "backends", tuple(self.backends))

    @property
    def host(self) -> str:
        return self.addr.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.addr.rsplit(":", 1)[1])


def load_config(path: Optional[str] = None) -> ServiceConfig:
    """Read the config file (SCIFLOW_CONFIG or the given path), then apply
    SCIFLOW_ADDR / SCIFLOW_STORE_DIR / SCIFLOW_TOKEN_TTL_S overrides."""
    cfg = ServiceConfig()
    file_path = path or os.environ.get("SCIFLOW_CONFIG")
    if file_path and Path(file_path).exists():
        doc = json.loads(Path(file_path).read_text())
        known = set(cfg.__dataclass_fields__)
        cfg = replace(cfg, **{k: v for k, v in doc.items() if k in known})
    if os.environ.get("SCIFLOW_ADDR"):
        cfg = replace(cfg, addr=os.environ["SCIFLOW_ADDR"])
    if os.environ.get("SCIFLOW_STORE_DIR"):
        cfg = replace(cfg, store_dir=os.environ["SCIFLOW_STORE_DIR"])
    if os.environ.get("SCIFLOW_TOKEN_TTL_S"):
        cfg = replace(cfg, token_ttl_s=float(os.environ["SCIFLOW_TOKEN_TTL_S"]))
    return cfg
