"""Check results, verification reports, and their JSON/CSV renderings.

A check passes iff margin > tolerance; margins are oriented so that larger
is better.  Rendering is deterministic: dict keys are emitted in insertion
order and floats use Python repr (shortest round-trip), so identical runs
produce byte-identical artifacts.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "CheckResult",
    "VerificationReport",
    "jsonable",
    "render_json",
    "render_csv",
    "write_text_atomic",
    "write_bytes_atomic",
]


@dataclass
class CheckResult:
    name: str
    margin: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return bool(self.margin > self.tolerance)

    def row(self) -> dict:
        return {
            "name": self.name,
            "verdict": "pass" if self.verdict else "fail",
            "margin": float(self.margin),
            "tolerance": float(self.tolerance),
            "data": jsonable(self.details),
        }


@dataclass
class VerificationReport:
    """Outcome of one battery: named checks plus run provenance."""

    checks: list[CheckResult]
    params: dict = field(default_factory=dict)
    mesh: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.verdict for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def results(self) -> list[dict]:
        return [c.row() for c in self.checks]


def jsonable(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and (np.isnan(obj) or np.isinf(obj)):
        return repr(obj)
    return obj


def render_json(results: list[dict], config: dict, environment: dict,
                version: str) -> str:
    doc = {
        "version": version,
        "config": jsonable(config),
        "environment": jsonable(environment),
        "results": jsonable(results),
    }
    return json.dumps(doc, indent=2) + "\n"


def render_csv(results: list[dict]) -> str:
    lines = ["name,verdict,margin,tolerance"]
    for row in results:
        lines.append(
            f"{row['name']},{row['verdict']},{row['margin']!r},{row['tolerance']!r}"
        )
    return "\n".join(lines) + "\n"


def write_text_atomic(path, text: str) -> None:
    write_bytes_atomic(path, text.encode())


def write_bytes_atomic(path, blob: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
