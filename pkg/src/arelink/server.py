"""HTTP/JSON session service exposing the editing-and-fitting loop.

One in-memory session per process. Mutations (bridges, edit, undo) are
serialized under a single lock and every mutating endpoint returns the full
new structure, so clients re-sync from responses instead of tracking state.
Fits run in the request's own thread against a snapshot, with completion
observable via GET /fit/status; a second fit while one is running gets 503.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, unquote, urlparse

from .augment import AugmentError, st_augment
from .fit import FitError, fit_model, summary_json
from .formula import FormulaError
from .geom import AreaCollection, GeometryError, dump_areas
from .nbgraph import (
    NbError,
    NbStructure,
    check_islands,
    export,
    manual_cut,
    manual_join,
    st_bridges,
    to_json_obj,
)
from .render import (
    NbMapOpts,
    PredMapOpts,
    RenderError,
    render_nb_map,
    render_pred_maps,
)


class ApiError(Exception):
    """An HTTP failure with a status code and a one-line message."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


class Session:
    """The single mutable session: collection, current structure, edit history."""

    def __init__(self, coll: AreaCollection, k: int = 1):
        self.lock = threading.RLock()
        self.coll = AreaCollection(coll.units)
        self.initial_nb = st_bridges(self.coll, link_islands_k=k, add_to_dataframe=False)
        self.nb = self.initial_nb
        self.history: list[tuple[str, str, str]] = []
        self.latest_fit = None
        self.latest_aug = None
        self.fit_state: dict = {"state": "idle"}
        self._fit_running = False

    # -- reads ---------------------------------------------------------------

    def areas_json(self) -> bytes:
        with self.lock:
            return dump_areas(self.coll)

    def nb_json(self) -> dict:
        with self.lock:
            return to_json_obj(self.nb)

    def audit_json(self) -> list:
        with self.lock:
            return check_islands(self.nb).as_list()

    def replay(self) -> NbStructure:
        """Re-apply the recorded edits to the initial structure."""
        with self.lock:
            nb = self.initial_nb
            for op, a, b in self.history:
                nb = manual_join(nb, a, b) if op == "join" else manual_cut(nb, a, b)
            return nb

    # -- mutations -----------------------------------------------------------

    def rebuild(self, k: int, remove_islands: bool) -> dict:
        with self.lock:
            try:
                coll2 = st_bridges(
                    self.coll, link_islands_k=k, remove_islands=remove_islands
                )
            except NbError as exc:
                raise ApiError(409, str(exc)) from exc
            self.coll = AreaCollection(coll2.units)
            self.initial_nb = coll2.nb
            self.nb = coll2.nb
            self.history = []
            return to_json_obj(self.nb)

    def edit(self, op: str, a, b) -> dict:
        if op not in ("join", "cut"):
            raise ApiError(400, f"op must be 'join' or 'cut', got {op!r}")
        with self.lock:
            try:
                pa = self.nb.resolve(a)
                pb = self.nb.resolve(b)
                fn = manual_join if op == "join" else manual_cut
                self.nb = fn(self.nb, pa, pb)
            except NbError as exc:
                raise ApiError(409, str(exc)) from exc
            self.history.append((op, self.nb.names[pa - 1], self.nb.names[pb - 1]))
            return to_json_obj(self.nb)

    def undo(self) -> dict:
        with self.lock:
            if not self.history:
                raise ApiError(409, "nothing to undo")
            self.history.pop()
            nb = self.initial_nb
            for op, a, b in self.history:
                nb = manual_join(nb, a, b) if op == "join" else manual_cut(nb, a, b)
            self.nb = nb
            return to_json_obj(self.nb)

    def save(self, path: str) -> dict:
        with self.lock:
            Path(path).write_bytes(export(self.nb, "json"))
            return {"path": str(path)}

    # -- fitting -------------------------------------------------------------

    def fit(self, formula: str, family: str) -> dict:
        with self.lock:
            if self._fit_running:
                raise ApiError(503, "a fit is already running")
            self._fit_running = True
            self.fit_state = {"state": "running"}
            coll, nb = self.coll, self.nb
        try:
            fit = fit_model(coll, formula, family=family, nb=nb)
            aug = st_augment(fit, coll)
            summary = summary_json(fit)
        except (FitError, FormulaError, AugmentError, GeometryError, ValueError) as exc:
            with self.lock:
                self.fit_state = {"state": "error", "error": str(exc)}
                self._fit_running = False
            raise ApiError(400, str(exc)) from exc
        with self.lock:
            self.latest_fit = fit
            self.latest_aug = aug
            self.fit_state = {"state": "done", "summary": summary}
            self._fit_running = False
        return summary

    def status(self) -> dict:
        with self.lock:
            return dict(self.fit_state)

    # -- rendering -----------------------------------------------------------

    def nb_svg(self, query: dict) -> bytes:
        nodes = (query.get("nodes") or ["point"])[0]
        hulls = (query.get("hulls") or ["0"])[0] in ("1", "true", "yes")
        with self.lock:
            coll, nb = self.coll, self.nb
        try:
            return render_nb_map(coll, nb, NbMapOpts(nodes=nodes, concavehull=hulls))
        except RenderError as exc:
            raise ApiError(400, str(exc)) from exc

    def pred_svg(self, column: str, query: dict) -> bytes:
        with self.lock:
            aug = self.latest_aug
        if aug is None:
            raise ApiError(404, "no fit available yet")
        if column not in aug.prediction_columns:
            raise ApiError(404, f"unknown prediction column {column!r}")

        def pick(key, default):
            return (query.get(key) or [default])[0]

        opts = PredMapOpts(
            scale_low=pick("low", "darkgreen"),
            scale_mid=pick("mid", "ivory"),
            scale_high=pick("high", "darkred"),
            scale_midpoint=float(pick("midpoint", "0")),
        )
        from .augment import AugmentedCollection

        one = AugmentedCollection(
            base=aug.base, added=((column, aug.column(column)),)
        )
        try:
            return render_pred_maps(one, opts)[0]
        except (RenderError, ValueError) as exc:
            raise ApiError(400, str(exc)) from exc


class SessionHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def session(self) -> Session:
        return self.server.session  # type: ignore[attr-defined]

    def log_message(self, *args) -> None:  # keep test output quiet
        pass

    # -- plumbing ------------------------------------------------------------

    def _cors_headers(self) -> None:
        origin = self.headers.get("Origin", "")
        if origin.startswith(("http://localhost", "http://127.0.0.1")):
            self.send_header("Access-Control-Allow-Origin", origin)
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _send(self, status: int, body: bytes, ctype: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self._cors_headers()
        self.end_headers()
        self.wfile.write(body)

    def _json(self, status: int, obj) -> None:
        self._send(status, json.dumps(obj).encode(), "application/json")

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ApiError(400, f"malformed JSON body: {exc}") from exc
        if not isinstance(obj, dict):
            raise ApiError(400, "body must be a JSON object")
        return obj

    def _dispatch(self, fn) -> None:
        try:
            fn()
        except ApiError as exc:
            self._json(exc.status, {"error": str(exc)})
        except Exception as exc:  # pragma: no cover - last-resort guard
            self._json(500, {"error": f"{type(exc).__name__}: {exc}"})

    # -- verbs ---------------------------------------------------------------

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self.send_header("Content-Length", "0")
        self._cors_headers()
        self.end_headers()

    def do_GET(self) -> None:
        self._dispatch(self._get)

    def do_POST(self) -> None:
        self._dispatch(self._post)

    def _get(self) -> None:
        url = urlparse(self.path)
        route = url.path.rstrip("/") or "/"
        query = parse_qs(url.query)
        if route == "/areas":
            self._send(200, self.session.areas_json(), "application/geo+json")
        elif route == "/nb":
            self._json(200, self.session.nb_json())
        elif route == "/nb/audit":
            self._json(200, self.session.audit_json())
        elif route == "/fit/status":
            self._json(200, self.session.status())
        elif route == "/render/nb.svg":
            self._send(200, self.session.nb_svg(query), "image/svg+xml")
        elif route.startswith("/render/preds/") and route.endswith(".svg"):
            column = unquote(route[len("/render/preds/") : -len(".svg")])
            self._send(200, self.session.pred_svg(column, query), "image/svg+xml")
        else:
            raise ApiError(404, f"no such resource {route!r}")

    def _post(self) -> None:
        route = urlparse(self.path).path.rstrip("/")
        body = self._body()
        if route == "/bridges":
            k = body.get("k", 1)
            remove = body.get("remove_islands", False)
            if not isinstance(k, int) or isinstance(k, bool):
                raise ApiError(400, f"k must be an integer, got {k!r}")
            if not isinstance(remove, bool):
                raise ApiError(400, f"remove_islands must be a boolean, got {remove!r}")
            self._json(200, self.session.rebuild(k, remove))
        elif route == "/edit":
            for key in ("op", "a", "b"):
                if key not in body:
                    raise ApiError(400, f"edit body needs {key!r}")
            self._json(200, self.session.edit(body["op"], body["a"], body["b"]))
        elif route == "/undo":
            self._json(200, self.session.undo())
        elif route == "/fit":
            formula = body.get("formula")
            if not isinstance(formula, str) or not formula:
                raise ApiError(400, "fit body needs a 'formula' string")
            family = body.get("family", "gaussian")
            self._json(200, self.session.fit(formula, family))
        elif route == "/save":
            path = body.get("path", "nb.json")
            if not isinstance(path, str) or not path:
                raise ApiError(400, "path must be a non-empty string")
            self._json(200, self.session.save(path))
        else:
            raise ApiError(404, f"no such resource {route!r}")


def make_server(coll: AreaCollection, port: int = 0, k: int = 1) -> ThreadingHTTPServer:
    """Build a ready-to-run server; port 0 picks a free port."""
    httpd = ThreadingHTTPServer(("127.0.0.1", port), SessionHandler)
    httpd.daemon_threads = True
    httpd.session = Session(coll, k=k)  # type: ignore[attr-defined]
    return httpd


def serve_forever(coll: AreaCollection, port: int) -> None:
    make_server(coll, port).serve_forever()
