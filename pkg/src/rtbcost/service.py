"""HTTP distribution of versioned models and intake of anonymous contributions."""

from __future__ import annotations

import hashlib
import json
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Annotated, Any, Literal, Union

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .features.vector import DAYS, TOD_BUCKETS
from .model.io import checksum

MANIFEST = "manifest.json"


class RegistryError(RuntimeError):
    pass


class ModelRegistry:
    """Directory of immutable ``model_v{n}.json`` files plus a manifest."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def manifest(self) -> list[dict]:
        p = self.root / MANIFEST
        if not p.exists():
            return []
        return json.loads(p.read_text())["models"]

    def publish(self, data: bytes, training_meta: dict | None = None, created_at: str | None = None) -> dict:
        with self._lock:
            entries = self.manifest()
            version = entries[-1]["version"] + 1 if entries else 1
            meta_digest = hashlib.sha256(
                json.dumps(training_meta or {}, sort_keys=True).encode()).hexdigest()
            entry = {
                "version": version,
                "created_at": created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "training_meta_digest": meta_digest,
                "checksum": checksum(data),
                "file": f"model_v{version}.json",
            }
            path = self.root / entry["file"]
            if path.exists():
                raise RegistryError(f"{path} already exists")
            path.write_bytes(data)
            tmp = self.root / (MANIFEST + ".tmp")
            tmp.write_text(json.dumps({"models": entries + [entry]}, indent=1, sort_keys=True))
            tmp.replace(self.root / MANIFEST)
            return entry

    def get(self, version: int | None = None) -> tuple[bytes, dict] | None:
        entries = self.manifest()
        if not entries:
            return None
        if version is None:
            entry = entries[-1]
        else:
            entry = next((e for e in entries if e["version"] == version), None)
            if entry is None:
                return None
        data = (self.root / entry["file"]).read_bytes()
        if checksum(data) != entry["checksum"]:
            raise RegistryError(f"checksum mismatch for version {entry['version']}")
        return data, entry


class ContributionStore:
    """Append-only JSONL; appends are serialized through one lock."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line)

    def count(self) -> int:
        if not self.path.exists():
            return 0
        with self.path.open(encoding="utf-8") as fh:
            return sum(1 for line in fh if line.strip())


_STRICT = ConfigDict(extra="forbid", strict=True)


class FeaturesIn(BaseModel):
    model_config = _STRICT

    interaction: str
    device_type: str
    os: str
    city: str
    tod_bucket: str
    day_of_week: str
    ad_size: str
    publisher_iab: str
    adx_id: str
    hour_of_day: int = Field(ge=0, le=23)

    @field_validator("tod_bucket")
    @classmethod
    def _tod(cls, v: str) -> str:
        if v not in TOD_BUCKETS:
            raise ValueError(f"tod_bucket must be one of {TOD_BUCKETS}")
        return v

    @field_validator("day_of_week")
    @classmethod
    def _dow(cls, v: str) -> str:
        if v not in DAYS:
            raise ValueError(f"day_of_week must be one of {DAYS}")
        return v


class CleartextIn(BaseModel):
    model_config = _STRICT

    type: Literal["cleartext"]
    cpm: float = Field(gt=0, lt=10_000)
    currency: str = "USD"


class EncryptedIn(BaseModel):
    model_config = _STRICT

    type: Literal["encrypted"]
    token: str = Field(min_length=8, max_length=512, pattern=r"^[A-Za-z0-9_\-%]+$")


class ContributionIn(BaseModel):
    model_config = _STRICT

    features: FeaturesIn
    price: Annotated[Union[CleartextIn, EncryptedIn], Field(discriminator="type")]
    submitted_at: str | None = None


def create_app(registry: ModelRegistry, store: ContributionStore) -> FastAPI:
    app = FastAPI(title="rtbcost model service")

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError) -> JSONResponse:
        errors = [{"loc": list(e.get("loc", ())), "msg": e.get("msg", "")} for e in exc.errors()]
        return JSONResponse({"detail": errors}, status_code=400)

    def _serve(found: tuple[bytes, dict] | None, missing_status: int) -> Response:
        if found is None:
            return JSONResponse({"detail": "no such model"}, status_code=missing_status)
        data, entry = found
        return Response(data, media_type="application/json", headers={
            "X-Model-Version": str(entry["version"]),
            "X-Model-Checksum": entry["checksum"],
            "X-Model-Created": entry["created_at"],
        })

    @app.get("/model/latest")
    def latest() -> Response:
        return _serve(registry.get(), 503)

    @app.get("/model/{version}")
    def by_version(version: int) -> Response:
        return _serve(registry.get(version), 404)

    @app.get("/manifest")
    def manifest() -> Any:
        return {"models": registry.manifest()}

    @app.post("/contribute", status_code=202)
    def contribute(body: ContributionIn) -> Any:
        rec = body.model_dump(exclude_none=True)
        rec.setdefault("submitted_at", datetime.now(timezone.utc).isoformat(timespec="seconds"))
        store.append(rec)
        return {"accepted": True}

    return app
