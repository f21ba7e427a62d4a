"""Registry client over plain HTTP (urllib). Downloads are re-verified locally."""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from urllib.parse import quote

from ..bundle import Manifest, bundle_digest
from ..errors import HashMismatch, InvalidBundle, NotFound, RegistryFailure, StorageFull
from .store import RegistryEntry

ERRORS = {400: InvalidBundle, 404: NotFound, 507: StorageFull}


class RegistryClient:
    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url.rstrip("/")
        self.timeout = timeout

    def _request(self, method: str, path: str, body: bytes | None = None) -> bytes:
        req = urllib.request.Request(self.url + path, data=body, method=method)
        if body is not None:
            req.add_header("Content-Type", "application/octet-stream")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            try:
                detail = json.loads(exc.read()).get("message", exc.reason)
            except ValueError:
                detail = exc.reason
            raise ERRORS.get(exc.code, RegistryFailure)(f"HTTP {exc.code}: {detail}") from None
        except (urllib.error.URLError, OSError) as exc:
            raise RegistryFailure(f"registry unreachable at {self.url}: {exc}") from None

    def health(self) -> bool:
        self._request("GET", "/v1/health")
        return True

    def publish(self, blob: bytes) -> RegistryEntry:
        return RegistryEntry.from_dict(json.loads(self._request("POST", "/v1/bundles", bytes(blob))))

    def list(self, question: str | None = None) -> list[RegistryEntry]:
        path = "/v1/bundles" + (f"?question={quote(question)}" if question else "")
        return [RegistryEntry.from_dict(d) for d in json.loads(self._request("GET", path))]

    def fetch(self, bundle_id: str) -> bytes:
        blob = self._request("GET", f"/v1/bundles/{quote(bundle_id)}")
        if bundle_digest(blob) != bundle_id:
            raise HashMismatch(f"downloaded bytes do not hash to {bundle_id}")
        return blob

    def fetch_manifest(self, bundle_id: str) -> Manifest:
        doc = json.loads(self._request("GET", f"/v1/bundles/{quote(bundle_id)}/manifest"))
        manifest = Manifest.from_json_dict(doc)
        if manifest.bundle_id != bundle_id:
            raise HashMismatch("manifest belongs to a different bundle")
        return manifest
