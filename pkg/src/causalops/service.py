"""HTTP review service for interactive graph refinement and localization.

Sessions live in memory with optional JSON snapshots after each round; the
CLI and HTTP paths drive the identical refinement engine, so the same verdict
sequence yields byte-identical final graphs either way.
"""
from __future__ import annotations

import json
import pathlib
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from . import graphbuild, localize, refine
from .dataset import TelemetryDataset
from .errors import CausalOpsError, ValidationError


@dataclass
class Session:
    session_id: str
    refinement: refine.RefinementSession
    created_at: str
    lock: threading.Lock = field(default_factory=threading.Lock)


class CreateSessionBody(BaseModel):
    graph_path: str
    dataset_path: str
    alpha: float = 0.05
    seed: int = 0


class DecisionBody(BaseModel):
    kind: str
    src: str
    dst: str
    decision: str  # accept | reject


def create_app(state_dir: str | None = None, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="causal review service")
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    state = pathlib.Path(state_dir) if state_dir else None
    if state:
        state.mkdir(parents=True, exist_ok=True)

    def _session(session_id: str) -> Session:
        with registry_lock:
            s = sessions.get(session_id)
        if s is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return s

    def _snapshot(s: Session) -> None:
        if not state:
            return
        payload = {
            "session_id": s.session_id,
            "created_at": s.created_at,
            "graph": json.loads(graphbuild.export_causal(s.refinement.graph)),
            "state": s.refinement.to_obj(),
        }
        (state / f"{s.session_id}.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True))

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz() -> str:
        return "ok"

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        try:
            graph = graphbuild.import_graph(pathlib.Path(body.graph_path).read_text())
            if isinstance(graph, graphbuild.ConfounderGraph):
                graph = graphbuild.collapse(graph)
            data = TelemetryDataset.from_csv(
                pathlib.Path(body.dataset_path).read_bytes())
        except (OSError, ValueError, CausalOpsError) as e:
            raise HTTPException(status_code=400, detail=str(e))
        session = Session(
            session_id=uuid.uuid4().hex,
            refinement=refine.RefinementSession(
                graph=graph, data=data, alpha=body.alpha, seed=body.seed),
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        with registry_lock:
            sessions[session.session_id] = session
        _snapshot(session)
        return {"session_id": session.session_id, "created_at": session.created_at}

    @app.get("/sessions/{session_id}/graph")
    def get_graph(session_id: str):
        s = _session(session_id)
        with s.lock:
            graph = json.loads(graphbuild.export_causal(s.refinement.graph))
            candidates = {
                (c.edge[0], c.edge[1]): c.kind
                for c in s.refinement.current_candidates()
            }
            for edge in graph["edges"]:
                kind = candidates.get((edge["src"], edge["dst"]))
                edge["status"] = f"candidate-{kind}" if kind else "confirmed"
            return {"graph": graph, "phase": s.refinement.phase,
                    "round": s.refinement.round_no}

    @app.get("/sessions/{session_id}/candidates")
    def get_candidates(session_id: str):
        s = _session(session_id)
        with s.lock:
            batch = s.refinement.current_candidates()
            return {
                "phase": s.refinement.phase,
                "candidates": [
                    {
                        **c.ref(),
                        "evidence": c.evidence,
                        "connectivity_changing": c.connectivity_changing,
                        "rank": c.rank,
                    }
                    for c in batch
                ],
            }

    @app.post("/sessions/{session_id}/decisions")
    def post_decisions(session_id: str, body: list[DecisionBody]):
        s = _session(session_id)
        with s.lock:
            batch = {(c.kind, c.edge[0], c.edge[1]): c
                     for c in s.refinement.current_candidates()}
            verdicts = []
            for d in body:
                if d.decision not in (refine.ACCEPT, refine.REJECT):
                    raise HTTPException(status_code=400,
                                        detail=f"bad decision {d.decision!r}")
                cand = batch.get((d.kind, d.src, d.dst))
                if cand is None:
                    raise HTTPException(
                        status_code=409,
                        detail=f"stale candidate {d.kind} {d.src}->{d.dst}")
                verdicts.append(refine.Verdict(cand, d.decision, "interactive"))
            try:
                s.refinement.apply_verdicts(verdicts)
            except CausalOpsError as e:
                raise HTTPException(status_code=409, detail=str(e))
            _snapshot(s)
            batch = s.refinement.current_candidates()
            return {
                "phase": s.refinement.phase,
                "round": s.refinement.round_no,
                "candidates": [
                    {**c.ref(), "evidence": c.evidence,
                     "connectivity_changing": c.connectivity_changing,
                     "rank": c.rank}
                    for c in batch
                ],
            }

    @app.get("/sessions/{session_id}/attribution")
    def get_attribution(
        session_id: str,
        symptom: str = Query(...),
        normal: str = Query(...),
        anomalous: str = Query(...),
        topk: int = Query(3),
        seed: int = Query(0),
    ):
        s = _session(session_id)
        with s.lock:
            graph = s.refinement.graph.copy()
        try:
            normal_ds = TelemetryDataset.from_csv(pathlib.Path(normal).read_bytes())
            anomalous_ds = TelemetryDataset.from_csv(
                pathlib.Path(anomalous).read_bytes())
            report = localize.distribution_change(
                graph, normal_ds, anomalous_ds, symptom, seed=seed, top_k=topk)
        except (OSError, ValueError) as e:
            raise HTTPException(status_code=400, detail=str(e))
        except ValidationError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return report.to_obj()

    if static_dir and pathlib.Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
