"""HTTP service exposing the shield and policy-management endpoints.

    POST /v1/shield/prompt      {"text", "tenant"?, "jurisdiction"?,
    POST /v1/shield/response     "policy_ids"?, "detectors"?} -> verdict JSON
    GET  /v1/health
    GET  /policies              list loaded templates
    GET  /policies/{id}         the stored YAML source
    PUT  /policies/{id}         upload + validate a template (YAML body)
    DELETE /policies/{id}

Built on the stdlib threading HTTP server: one thread per request, graceful
shutdown drains in-flight handlers before the process exits.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .config import AppConfig, Runtime, build_runtime, load_config
from .errors import GuardgateError, ValidationError
from .model import Direction
from .policy import parse_template
from .wire import shield_request_from_payload, verdict_to_dict

logger = logging.getLogger(__name__)

_MAX_BODY = 8 * 1024 * 1024


class _GateServer(ThreadingHTTPServer):
    daemon_threads = False
    block_on_close = True      # server_close waits for in-flight handlers
    runtime: Runtime

    def handle_error(self, request, client_address):
        logger.exception("unhandled error serving %s", client_address)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    # Idle keep-alive connections must reap themselves, or block_on_close
    # would wait on them forever at shutdown.  Active handlers are not
    # affected: the timeout only fires on a blocking read.
    timeout = 1.0
    server: _GateServer

    # -- plumbing -------------------------------------------------------------

    def log_message(self, fmt, *args):
        logger.debug("%s " + fmt, self.address_string(), *args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_text(self, status: int, text: str,
                   content_type: str = "application/x-yaml") -> None:
        body = text.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, code: str, message: str) -> None:
        self._send_json(status, {"error": code, "message": message})

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        if length > _MAX_BODY:
            raise ValidationError("MALFORMED_REQUEST", "body too large")
        return self.rfile.read(length) if length else b""

    # -- routing ----------------------------------------------------------------

    def do_GET(self):
        if self.path == "/v1/health":
            rt = self.server.runtime
            self._send_json(200, {
                "status": "ready",
                "detectors": rt.registry.ids(),
                "policies": sorted(rt.engine.policy_ids()),
            })
        elif self.path == "/policies":
            rt = self.server.runtime
            out = []
            for pid in sorted(rt.engine.policy_ids()):
                t = rt.engine.get(pid)
                out.append({"policy_id": pid, "jurisdiction": t.jurisdiction,
                            "rules": len(t.rules),
                            "default_action": t.default_action.value})
            self._send_json(200, {"policies": out})
        elif self.path.startswith("/policies/"):
            pid = self.path[len("/policies/"):]
            rt = self.server.runtime
            try:
                template = rt.engine.get(pid)
            except ValidationError as exc:
                self._error(404, exc.code, str(exc))
                return
            self._send_text(200, template.source)
        else:
            self._error(404, "NOT_FOUND", f"no route {self.path}")

    def do_POST(self):
        routes = {
            "/v1/shield/prompt": Direction.PROMPT,
            "/v1/shield/response": Direction.RESPONSE,
        }
        direction = routes.get(self.path)
        if direction is None:
            self._error(404, "NOT_FOUND", f"no route {self.path}")
            return
        try:
            raw = self._read_body()
            payload = json.loads(raw.decode("utf-8")) if raw else {}
        except (ValidationError, ValueError) as exc:
            self._error(400, "MALFORMED_REQUEST", f"bad request body: {exc}")
            return
        rt = self.server.runtime
        defaults = ("default",) if "default" in rt.engine else ()
        try:
            req = shield_request_from_payload(payload, direction, defaults)
            verdict = rt.orchestrator.shield(req)
        except ValidationError as exc:
            self._error(400, exc.code, str(exc))
            return
        except GuardgateError as exc:
            self._error(500, exc.code, str(exc))
            return
        self._send_json(200, verdict_to_dict(verdict))

    def do_PUT(self):
        if not self.path.startswith("/policies/"):
            self._error(404, "NOT_FOUND", f"no route {self.path}")
            return
        pid = self.path[len("/policies/"):]
        try:
            body = self._read_body().decode("utf-8")
        except (ValidationError, UnicodeDecodeError) as exc:
            self._error(400, "MALFORMED_REQUEST", str(exc))
            return
        rt = self.server.runtime
        try:
            template = parse_template(body, source_name=pid)
        except GuardgateError as exc:
            self._error(400, exc.code, str(exc))
            return
        if template.policy_id != pid:
            self._error(400, "POLICY_ID_MISMATCH",
                        f"document declares {template.policy_id!r}, path says {pid!r}")
            return
        try:
            rt.persist_policy(template)
        except GuardgateError as exc:
            self._error(500, exc.code, str(exc))
            return
        self._send_json(200, {"policy_id": pid, "rules": len(template.rules)})

    def do_DELETE(self):
        if not self.path.startswith("/policies/"):
            self._error(404, "NOT_FOUND", f"no route {self.path}")
            return
        pid = self.path[len("/policies/"):]
        rt = self.server.runtime
        try:
            rt.remove_policy(pid)
        except ValidationError as exc:
            self._error(404, exc.code, str(exc))
            return
        except GuardgateError as exc:
            self._error(500, exc.code, str(exc))
            return
        self._send_json(200, {"deleted": pid})


class ServiceHandle:
    """A running service: address, stop(), and wait()."""

    def __init__(self, server: _GateServer, runtime: Runtime):
        self._server = server
        self._runtime = runtime
        self._stopped = threading.Event()
        self._thread = threading.Thread(
            target=server.serve_forever, name="guardgate-http", daemon=True)
        self._thread.start()

    @property
    def host(self) -> str:
        return self._server.server_address[0]

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def runtime(self) -> Runtime:
        return self._runtime

    def stop(self) -> None:
        """Stop accepting, drain in-flight requests, release the pool."""
        if self._stopped.is_set():
            return
        self._server.shutdown()
        self._thread.join()
        self._server.server_close()
        self._runtime.close()
        self._stopped.set()

    def wait(self) -> None:
        self._stopped.wait()

    def __enter__(self) -> "ServiceHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(config: AppConfig | str | Path | None = None) -> ServiceHandle:
    """Build the runtime and start listening.

    A port already in use surfaces as BIND_FAILURE.  Pass port 0 to bind an
    ephemeral port (the handle reports the real one).
    """
    cfg = config if isinstance(config, AppConfig) else load_config(config)
    runtime = build_runtime(cfg)
    try:
        server = _GateServer((cfg.host, cfg.port), _Handler)
    except OSError as exc:
        runtime.close()
        raise GuardgateError(
            "BIND_FAILURE", f"cannot bind {cfg.host}:{cfg.port}: {exc}") from exc
    server.runtime = runtime
    handle = ServiceHandle(server, runtime)
    logger.info("listening on %s:%d", handle.host, handle.port)
    return handle
