"""Validation of the estimator's result-file schemas (version 1)."""

from __future__ import annotations

import json
from pathlib import Path

SUPPORTED_SCHEMA = "1"


class SchemaMismatch(Exception):
    pass


class MissingSeries(Exception):
    pass


def load_payload(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{path}: not valid JSON ({exc})") from None
    version = payload.get("schema_version")
    if version != SUPPORTED_SCHEMA:
        raise SchemaMismatch(f"{path}: schema_version {version!r}, expected {SUPPORTED_SCHEMA!r}")
    return payload


def curve_from(payload: dict, target: str) -> dict:
    """Extract one curve with optional band columns from either file layout.

    Band files nest targets under ``bands.targets``; point-estimate files
    carry bare ``{x, value}`` (or the policy list) at the top level.
    """
    if "bands" in payload:
        targets = payload["bands"].get("targets", {})
        if target in targets:
            block = targets[target]
            _require(block, ("x", "value", "lower", "upper"), target)
            return {
                "x": block["x"],
                "value": block["value"],
                "lower": block["lower"],
                "upper": block["upper"],
            }
        point = payload.get("point", {})
    else:
        point = payload
    if target == "pe":
        rungs = point.get("pe") or []
        if not rungs:
            raise MissingSeries("no policy-effect series in payload")
        return {"x": [r["phi"] for r in rungs], "value": [r["gamma"] for r in rungs]}
    if target in point and isinstance(point[target], dict):
        block = point[target]
        for key in ("mu", "beta", "value"):
            if key in block:
                _require(block, ("x", key), target)
                return {"x": block["x"], "value": block[key]}
        raise SchemaMismatch(f"target {target!r} lacks a value column")
    raise MissingSeries(f"target {target!r} not present in payload")


def _require(block: dict, keys, target: str) -> None:
    for key in keys:
        if key not in block:
            raise SchemaMismatch(f"target {target!r} lacks field {key!r}")
    lengths = {len(block[k]) for k in keys}
    if len(lengths) != 1:
        raise SchemaMismatch(f"target {target!r} has ragged columns")
