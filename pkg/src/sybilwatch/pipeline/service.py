"""HTTP scoring and stats service."""

from __future__ import annotations

import threading
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from ..detector import ClassifierConfig, StreamDetector
from ..events import REQUEST_SENT, MalformedEvent, decode, sort_key
from ..features import FeatureError
from ..graph import GraphError
from ..topology import extract_sybil_subgraph, report
from .config import Settings, TopologyParams

SCHEMA_VERSION = 1


def _body(code: int, **payload) -> JSONResponse:
    return JSONResponse(status_code=code, content={"schema_version": SCHEMA_VERSION, **payload})


class ServiceState:
    """Detector state behind a single writer lock."""

    def __init__(self, cfg: ClassifierConfig, strict: bool = True, topology: Optional[TopologyParams] = None):
        self.det = StreamDetector(cfg, strict=True)
        self.strict = strict
        self.topology = topology or TopologyParams()
        self.requests = []  # request_sent events, for edge-origin analysis
        self.lock = threading.Lock()

    def post(self, text: str) -> tuple:
        parsed, errors = [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                parsed.append((lineno, decode(line)))
            except MalformedEvent as exc:
                errors.append({"line": lineno, "error": str(exc)})
        if errors and self.strict:
            return 400, {"accepted": 0, "errors": errors}

        with self.lock:
            last = self.det.features.last_ts
            if self.strict:
                keys = [sort_key(e) for _, e in parsed]
                if any(a > b for a, b in zip(keys, keys[1:])) or (parsed and parsed[0][1].ts < last):
                    return 409, {"accepted": 0, "errors": [{"line": None, "error": "batch is out of order"}]}
            else:
                parsed.sort(key=lambda p: sort_key(p[1]))
            applied = verdicts = 0
            for lineno, e in parsed:
                if e.ts < self.det.features.last_ts:
                    errors.append({"line": lineno, "error": f"event at t={e.ts} precedes t={self.det.features.last_ts}"})
                    continue
                try:
                    verdicts += len(self.det.process(e))
                except (FeatureError, GraphError, MalformedEvent) as exc:
                    errors.append({"line": lineno, "error": str(exc)})
                    continue
                if e.type == REQUEST_SENT:
                    self.requests.append(e)
                applied += 1
            return 202, {
                "accepted": applied,
                "verdicts": verdicts,
                "errors": errors,
                "last_applied_ts": self.det.features.last_ts,
            }

    def topology_report(self) -> dict:
        with self.lock:
            g = self.det.features.graph
            labels = {r.id: ("sybil" if r.id in self.det.banned else "normal") for r in g.accounts()}
            sg = extract_sybil_subgraph(g, labels)
            created = {u: g.account(u).created_at for u in sg.nodes}
            t = self.topology
            rep = report(
                sg,
                created,
                self.requests,
                t.burst_threshold,
                t.burst_window_seconds,
                t.loose_density,
                t.loose_clustering,
            )
            return rep.to_dict()


def create_app(settings: Optional[Settings] = None) -> FastAPI:
    settings = settings or Settings()
    state = ServiceState(settings.classifier, settings.strict, settings.topology)
    app = FastAPI(title="sybilwatch")
    app.state.sybilwatch = state

    @app.post("/v1/events")
    async def post_events(request: Request):
        raw = await request.body()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            return _body(400, accepted=0, errors=[{"line": None, "error": "body is not UTF-8"}])
        status, payload = state.post(text)
        return _body(status, **payload)

    @app.get("/v1/accounts/{account}/features")
    def get_features(account: str):
        with state.lock:
            st = state.det.features
            if account not in st:
                raise HTTPException(404, f"unknown account {account!r}")
            fv = st.snapshot(account)
            return _body(200, account=account, at=st.last_ts, features=fv.to_dict())

    @app.get("/v1/accounts/{account}/verdict")
    def get_verdict(account: str):
        with state.lock:
            if account not in state.det.features:
                raise HTTPException(404, f"unknown account {account!r}")
            v = state.det.latest.get(account)
            if v is None:
                raise HTTPException(404, f"no verdict yet for {account!r}")
            banned_at = state.det.banned.get(account)
            return _body(200, verdict=v.to_dict(), banned=banned_at is not None, first_flagged=banned_at)

    @app.get("/v1/stats/topology")
    def get_topology():
        return _body(200, report=state.topology_report())

    @app.get("/v1/healthz")
    def healthz():
        return _body(200, status="ok", last_applied_ts=state.det.features.last_ts)

    @app.exception_handler(HTTPException)
    async def http_error(request, exc: HTTPException):
        return _body(exc.status_code, error=exc.detail)

    return app


def serve(settings: Optional[Settings] = None, host: str = "127.0.0.1", port: int = 8080) -> None:
    import uvicorn

    uvicorn.run(create_app(settings), host=host, port=port)
