"""
On-disk store for solved plans.

Entries are keyed by a content hash of the grounded problem, so an entry is
only reused for an identical operator table, initial state and goal. Each
entry is one JSON file ``<key>.json`` holding the flow name and the operator
steps.
"""

import hashlib
import json
import logging
import os
import time
from pathlib import Path
from typing import Any

from .config import resolve_cache_dir

logger = logging.getLogger(__name__)


def compute_content_hash(*parts: Any) -> str:
    """SHA256 over the canonical JSON form of ``parts``."""
    encoded = json.dumps(list(parts), sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(encoded.encode("utf-8")).hexdigest()


def _entry_path(key: str, cache_dir: str | Path | None) -> Path:
    return resolve_cache_dir(cache_dir) / f"{key}.json"


def _expired(entry: dict[str, Any], now: float) -> bool:
    expires_at = entry.get("expires_at")
    return expires_at is not None and now > expires_at


def load_plan(key: str, cache_dir: str | Path | None = None) -> list[str] | None:
    """
    Look up the steps stored under ``key``.

    Returns None on a miss. Expired or unreadable entries count as misses and
    are removed.
    """
    path = _entry_path(key, cache_dir)
    if not path.is_file():
        return None
    try:
        entry = json.loads(path.read_text(encoding="utf-8"))
        steps = entry["steps"]
        if not isinstance(steps, list) or not all(isinstance(s, str) for s in steps):
            raise ValueError("steps must be a list of operator names")
    except (OSError, ValueError, KeyError, TypeError):
        logger.warning("Discarding unreadable plan cache entry %s", path)
        path.unlink(missing_ok=True)
        return None
    if _expired(entry, time.time()):
        path.unlink(missing_ok=True)
        return None
    logger.debug("Plan cache hit %s (%s)", key[:12], entry.get("flow"))
    return steps


def save_plan(
    key: str,
    flow: str,
    steps: list[str],
    cache_dir: str | Path | None = None,
    ttl_seconds: int | None = None,
) -> None:
    """Store ``steps`` under ``key``. Write failures are logged, not raised."""
    path = _entry_path(key, cache_dir)
    now = time.time()
    entry: dict[str, Any] = {"flow": flow, "steps": steps, "cached_at": now}
    if ttl_seconds is not None:
        entry["expires_at"] = now + ttl_seconds
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        partial = path.with_suffix(f".{os.getpid()}.tmp")
        partial.write_text(json.dumps(entry, indent=2), encoding="utf-8")
        partial.replace(path)
    except OSError as e:
        logger.warning("Could not write plan cache entry: %s", e)


def clear_cache(cache_dir: str | Path | None = None) -> int:
    """Remove every entry; returns how many were removed."""
    removed = 0
    for path in resolve_cache_dir(cache_dir).glob("*.json"):
        try:
            path.unlink()
            removed += 1
        except OSError:
            continue
    return removed


def get_cache_stats(cache_dir: str | Path | None = None) -> dict[str, Any]:
    """Entry count, total size, expired entries and the flows with entries."""
    stats: dict[str, Any] = {
        "total_entries": 0,
        "total_size_bytes": 0,
        "expired_entries": 0,
        "flows": [],
    }
    flows: set[str] = set()
    now = time.time()
    for path in resolve_cache_dir(cache_dir).glob("*.json"):
        stats["total_entries"] += 1
        stats["total_size_bytes"] += path.stat().st_size
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            stats["expired_entries"] += 1
            continue
        if _expired(entry, now):
            stats["expired_entries"] += 1
        elif isinstance(entry.get("flow"), str):
            flows.add(entry["flow"])
    stats["flows"] = sorted(flows)
    return stats
