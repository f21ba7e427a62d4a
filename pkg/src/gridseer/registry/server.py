"""HTTP/1.1 front end for a :class:`RegistryStore`.

Endpoints::

    POST /v1/bundles                 body: bundle bytes  -> 201 (new) / 200 (existing), entry JSON
    GET  /v1/bundles?question=<id>   -> JSON list of entries
    GET  /v1/bundles/<id>            -> bundle bytes (application/octet-stream)
    GET  /v1/bundles/<id>/manifest   -> manifest JSON
    GET  /v1/health                  -> 200

Errors are JSON ``{"error": <name>, "message": <text>}`` with status
400 (InvalidBundle), 404 (NotFound) or 507 (StorageFull).
"""

from __future__ import annotations

import json
import logging
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from ..catalog import QuestionId
from ..errors import InvalidBundle, NotFound, StorageFull
from .store import RegistryStore

log = logging.getLogger(__name__)

MAX_BODY = 512 * 1024 * 1024
STATUS = {InvalidBundle: 400, NotFound: 404, StorageFull: 507}


class RegistryHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "gridseer-registry/1"

    @property
    def store(self) -> RegistryStore:
        return self.server.store  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        log.debug("%s - " + fmt, self.address_string(), *args)

    def _send(self, status: int, body: bytes, content_type: str = "application/json") -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(body)

    def _json(self, status: int, obj) -> None:
        self._send(status, json.dumps(obj, sort_keys=True).encode())

    def _error(self, exc: Exception) -> None:
        status = STATUS.get(type(exc), 500)
        self._json(status, {"error": type(exc).__name__, "message": str(exc)})

    def _route(self) -> list[str]:
        return [p for p in urlsplit(self.path).path.split("/") if p]

    def do_GET(self):
        parts = self._route()
        try:
            if parts == ["v1", "health"]:
                self._json(200, {"status": "ok"})
            elif parts == ["v1", "bundles"]:
                query = parse_qs(urlsplit(self.path).query)
                question = query.get("question", [None])[0]
                if question is not None:
                    try:
                        QuestionId(question)
                    except ValueError:
                        raise InvalidBundle(f"unknown question {question!r}") from None
                self._json(200, [e.to_dict() for e in self.store.list(question)])
            elif len(parts) == 3 and parts[:2] == ["v1", "bundles"]:
                self._send(200, self.store.fetch(parts[2]), "application/octet-stream")
            elif len(parts) == 4 and parts[:2] == ["v1", "bundles"] and parts[3] == "manifest":
                self._send(200, self.store.fetch_manifest(parts[2]))
            else:
                raise NotFound(f"no route for {self.path}")
        except (InvalidBundle, NotFound, StorageFull) as exc:
            self._error(exc)

    def do_POST(self):
        if self._route() != ["v1", "bundles"]:
            self._error(NotFound(f"no route for {self.path}"))
            return
        try:
            length = int(self.headers.get("Content-Length", ""))
        except ValueError:
            self._error(InvalidBundle("Content-Length required"))
            return
        if length > MAX_BODY:
            self._error(StorageFull("bundle exceeds upload limit"))
            return
        body = self.rfile.read(length)
        try:
            entry, created = self.store.publish(body)
        except (InvalidBundle, StorageFull) as exc:
            self._error(exc)
            return
        self._json(HTTPStatus.CREATED if created else HTTPStatus.OK, entry.to_dict())


class RegistryServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, store: RegistryStore, host: str = "127.0.0.1", port: int = 0):
        self.store = store
        super().__init__((host, port), RegistryHandler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="gridseer-registry", daemon=True)
        t.start()
        return t
