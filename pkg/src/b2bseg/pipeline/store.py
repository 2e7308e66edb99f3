"""On-disk run store: one manifest per run_id plus a content-addressed
stage cache shared across runs, so re-runs reuse any stage whose chained
fingerprint matches. All writes are write-temp-then-rename."""

from __future__ import annotations

import hashlib
import json
import os
import uuid
from datetime import datetime, timezone
from pathlib import Path

from .config import STAGES, RunConfig

__all__ = ["RunStore"]


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class RunStore:
    def __init__(self, root):
        self.root = Path(root)
        for sub in ("runs", "stages", "data"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    # -- uploaded data ------------------------------------------------------

    def save_data(self, content: bytes | str) -> str:
        if isinstance(content, str):
            content = content.encode("utf-8")
        data_id = hashlib.sha256(content).hexdigest()[:16]
        path = self.root / "data" / f"{data_id}.csv"
        if not path.exists():
            _atomic_write(path, content)
        return data_id

    def load_data(self, data_id: str) -> bytes:
        path = self.root / "data" / f"{data_id}.csv"
        if not path.exists():
            raise FileNotFoundError(f"unknown data_id {data_id!r}")
        return path.read_bytes()

    # -- runs ----------------------------------------------------------------

    def new_run(self, config: RunConfig, data_id: str, run_id: str | None = None) -> str:
        run_id = run_id or uuid.uuid4().hex[:12]
        run_dir = self.root / "runs" / run_id
        run_dir.mkdir(parents=True, exist_ok=False)
        manifest = {
            "run_id": run_id,
            "created": datetime.now(timezone.utc).isoformat(),
            "config": config.to_dict(),
            "config_fingerprint": config.fingerprint(),
            "data_id": data_id,
            "status": "running",
            "failed_stage": None,
            "error": None,
            "stages": [
                {"name": name, "status": "pending", "fingerprint": None,
                 "seconds": None, "reused": False}
                for name in STAGES
            ],
        }
        self._write_manifest(run_id, manifest)
        return run_id

    def manifest(self, run_id: str) -> dict:
        path = self.root / "runs" / run_id / "manifest.json"
        if not path.exists():
            raise FileNotFoundError(f"unknown run_id {run_id!r}")
        return json.loads(path.read_text())

    def list_runs(self) -> list[str]:
        return sorted(p.name for p in (self.root / "runs").iterdir() if p.is_dir())

    def _write_manifest(self, run_id: str, manifest: dict) -> None:
        path = self.root / "runs" / run_id / "manifest.json"
        _atomic_write(path, json.dumps(manifest, indent=2).encode())

    def update_stage(self, run_id: str, stage: str, **updates) -> None:
        manifest = self.manifest(run_id)
        for entry in manifest["stages"]:
            if entry["name"] == stage:
                entry.update(updates)
                break
        self._write_manifest(run_id, manifest)

    def finish_run(self, run_id: str, status: str, failed_stage=None, error=None) -> None:
        manifest = self.manifest(run_id)
        manifest["status"] = status
        manifest["failed_stage"] = failed_stage
        manifest["error"] = error
        self._write_manifest(run_id, manifest)

    # -- content-addressed stage cache ----------------------------------------

    def stage_dir(self, fingerprint: str) -> Path:
        return self.root / "stages" / fingerprint

    def stage_complete(self, fingerprint: str) -> bool:
        return (self.stage_dir(fingerprint) / ".complete").exists()

    def open_stage(self, fingerprint: str) -> Path:
        path = self.stage_dir(fingerprint)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def seal_stage(self, fingerprint: str) -> None:
        _atomic_write(self.stage_dir(fingerprint) / ".complete", b"ok\n")

    @staticmethod
    def write_file(directory: Path, name: str, data: bytes | str) -> Path:
        if isinstance(data, str):
            data = data.encode("utf-8")
        path = directory / name
        _atomic_write(path, data)
        return path
