"""Rating service: serves panels and audio, enforces completion rules,
persists rating records.

Sessions are assigned one of the design's test sets round-robin by arrival
order. Panels are delivered strictly in each participant's generated order;
a record is accepted only when every stimulus was listened to completion
and every slider moved, and it is appended durably to the store before the
next panel is released. System identity never appears in any payload sent
to a client; stimuli are addressed by opaque ids.

Store: one append-only JSONL file per experiment. Events::

    {"type": "session_start", "participant": ..., "test_set": k, "ts": ...}
    {"type": "rating", "participant": ..., "panel_id": ..., "sentence": ...,
     "scores": {stim: int}, "systems": {stim: system},
     "all_listened": true, "all_moved": true, "ts": ...}

Replaying the store reconstructs every session (panel sequences are a pure
function of the experiment seed and participant id).

HTTP API (JSON bodies):

    POST /api/start    {"participant": str, "resume": bool?}
                       -> {"token", "participant", "test_set", "panel_count",
                           "completed", "done", "panel" | null}
    GET  /api/panel?token=...
                       -> {"done": bool, "panel" | null, ...}
    POST /api/submit   {"token", "panel_id", "scores": {sid: int},
                        "listened": {sid: bool}, "moved": {sid: bool}}
                       -> {"accepted": true, "done": bool, "panel" | null}
    GET  /api/report?alpha=0.05&margin=10
                       -> analysis report (systems, pairwise, counts)
    GET  /audio/<token>/<panel_id>/<stimulus_id|ref>   -> wav bytes

Errors are JSON: {"error": str, "details": [...]}. The store directory
defaults to the POLYVOX_STORE environment variable.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .mushra import (DEFAULT_ANOMALY_MARGIN, MushraDesign, MushraPanel, ScoredRecord,
                     build_report, filter_anomalies, generate_panels)

STORE_ENV_VAR = "POLYVOX_STORE"


class ServiceError(Exception):
    def __init__(self, status: int, message: str, details: list | None = None):
        super().__init__(message)
        self.status = status
        self.message = message
        self.details = details or []

    def payload(self) -> dict:
        out = {"error": self.message}
        if self.details:
            out["details"] = self.details
        return out


class ExperimentStore:
    """Append-only JSONL event log; writes are flushed before returning."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, event: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()

    def replay(self) -> list[dict]:
        if not self.path.exists():
            return []
        events = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                events.append(json.loads(line))
        return events


@dataclass
class Session:
    participant: str
    test_set: int
    panels: list[MushraPanel]
    completed: set[str] = field(default_factory=set)
    token: str | None = None

    @property
    def next_index(self) -> int:
        for i, panel in enumerate(self.panels):
            if panel.id not in self.completed:
                return i
        return len(self.panels)

    @property
    def done(self) -> bool:
        return self.next_index >= len(self.panels)


class RatingService:
    """Session and record logic, independent of the HTTP layer."""

    def __init__(self, design: MushraDesign, store: ExperimentStore):
        self.design = design
        self.store = store
        self.sessions: dict[str, Session] = {}
        self._tokens: dict[str, str] = {}        # token -> participant
        self._arrivals = 0
        self._lock = threading.Lock()
        self._restore()

    # ----- persistence -----------------------------------------------------

    def _restore(self) -> None:
        for event in self.store.replay():
            if event["type"] == "session_start":
                participant = event["participant"]
                if participant not in self.sessions:
                    self.sessions[participant] = Session(
                        participant=participant,
                        test_set=int(event["test_set"]),
                        panels=generate_panels(self.design, participant,
                                               int(event["test_set"])),
                    )
                    self._arrivals += 1
            elif event["type"] == "rating":
                session = self.sessions.get(event["participant"])
                if session is not None:
                    session.completed.add(event["panel_id"])

    # ----- session flow ----------------------------------------------------

    def start(self, participant: str, resume: bool = False) -> dict:
        if not participant or not participant.strip():
            raise ServiceError(400, "participant id required")
        participant = participant.strip()
        with self._lock:
            session = self.sessions.get(participant)
            if session is None:
                test_set = self._arrivals % self.design.num_test_sets
                self._arrivals += 1
                session = Session(participant=participant, test_set=test_set,
                                  panels=generate_panels(self.design, participant, test_set))
                self.sessions[participant] = session
                self.store.append({"type": "session_start", "participant": participant,
                                   "test_set": test_set, "ts": time.time()})
            elif session.token is not None and not session.done and not resume:
                raise ServiceError(409, f"participant {participant!r} already has an active "
                                        "session (pass resume=true to take it over)")
            if session.token is not None:
                self._tokens.pop(session.token, None)
            session.token = secrets.token_hex(16)
            self._tokens[session.token] = participant
            return self._session_payload(session)

    def _session_for_token(self, token: str | None) -> Session:
        participant = self._tokens.get(token or "")
        if participant is None:
            raise ServiceError(403, "unknown or expired session token")
        return self.sessions[participant]

    def current_panel(self, token: str) -> dict:
        with self._lock:
            return self._session_payload(self._session_for_token(token))

    def submit(self, token: str, panel_id: str, scores: dict, listened: dict,
               moved: dict) -> dict:
        with self._lock:
            session = self._session_for_token(token)
            if session.done:
                raise ServiceError(409, "session already complete")
            expected = session.panels[session.next_index]
            if panel_id in session.completed:
                raise ServiceError(409, f"panel {panel_id!r} already submitted")
            if panel_id != expected.id:
                raise ServiceError(409, f"out-of-order submission: expected panel "
                                        f"{expected.id!r}, got {panel_id!r}")
            details = []
            for stim in expected.stimuli:
                if not listened.get(stim.id, False):
                    details.append({"stimulus": stim.id, "reason": "not played to completion"})
                if not moved.get(stim.id, False):
                    details.append({"stimulus": stim.id, "reason": "slider not moved"})
                score = scores.get(stim.id)
                if score is None:
                    details.append({"stimulus": stim.id, "reason": "missing score"})
                elif not isinstance(score, int) or not 0 <= score <= 100:
                    details.append({"stimulus": stim.id,
                                    "reason": f"score {score!r} not an integer in [0, 100]"})
            extra = set(scores) - {s.id for s in expected.stimuli}
            if extra:
                details.append({"stimulus": sorted(extra)[0], "reason": "not in this panel"})
            if details:
                raise ServiceError(400, "incomplete record", details)
            # persist before releasing the next panel
            self.store.append({
                "type": "rating", "participant": session.participant,
                "panel_id": expected.id, "sentence": expected.sentence,
                "scores": {s.id: int(scores[s.id]) for s in expected.stimuli},
                "systems": {s.id: s.system for s in expected.stimuli},
                "all_listened": True, "all_moved": True, "ts": time.time(),
            })
            session.completed.add(expected.id)
            return {"accepted": True, **self._session_payload(session)}

    def _session_payload(self, session: Session) -> dict:
        payload = {
            "token": session.token,
            "participant": session.participant,
            "test_set": session.test_set,
            "panel_count": len(session.panels),
            "completed": len(session.completed),
            "done": session.done,
            "panel": None,
        }
        if not session.done:
            panel = session.panels[session.next_index]
            base = f"/audio/{session.token}/{panel.id}"
            payload["panel"] = {
                "panel_id": panel.id,
                "index": session.next_index,
                "count": len(session.panels),
                "reference_audio": f"{base}/ref",
                "stimuli": [{"id": s.id, "audio": f"{base}/{s.id}",
                             "initial_slider": s.initial_slider}
                            for s in panel.stimuli],
            }
        return payload

    # ----- audio + analysis --------------------------------------------------

    def audio_path(self, token: str, panel_id: str, stimulus_id: str) -> Path:
        with self._lock:
            session = self._session_for_token(token)
        for panel in session.panels:
            if panel.id == panel_id:
                if stimulus_id == "ref":
                    return panel.reference_path
                for stim in panel.stimuli:
                    if stim.id == stimulus_id:
                        return stim.audio_path
                raise ServiceError(404, f"unknown stimulus {stimulus_id!r}")
        raise ServiceError(404, f"unknown panel {panel_id!r}")

    def scored_records(self) -> list[ScoredRecord]:
        records = []
        for event in self.store.replay():
            if event["type"] != "rating":
                continue
            systems = event["systems"]
            records.append(ScoredRecord(
                participant=event["participant"], panel_id=event["panel_id"],
                sentence=event["sentence"],
                scores={systems[sid]: int(score) for sid, score in event["scores"].items()},
            ))
        return records

    def report(self, alpha: float = 0.05, margin: int = DEFAULT_ANOMALY_MARGIN) -> dict:
        records = self.scored_records()
        kept, discarded = filter_anomalies(records, self.design.resynthesis, margin)
        systems = list(self.design.all_systems())
        report = build_report(kept, systems, alpha=alpha, discarded=len(discarded))
        return {
            "experiment": self.design.name,
            "alpha": alpha,
            "margin": margin,
            "records": len(records),
            "kept": len(kept),
            "discarded": len(discarded),
            "systems": [{"system": r.system, "n": r.n, "mean": r.mean,
                         "median": r.median, "average_rank": r.average_rank}
                        for r in report.rows],
            "pairwise": [{"system_a": t.system_a, "system_b": t.system_b,
                          "n_pairs": t.n_pairs, "statistic": t.statistic,
                          "p_value": t.p_value, "p_adjusted": t.p_adjusted,
                          "significant": t.reject, "degenerate": t.degenerate}
                         for t in report.pairwise],
            "flags": list(report.flags),
        }


# ----- HTTP layer ------------------------------------------------------------

_CONTENT_TYPES = {".html": "text/html; charset=utf-8",
                  ".js": "application/javascript",
                  ".css": "text/css",
                  ".wav": "audio/wav",
                  ".png": "image/png",
                  ".svg": "image/svg+xml"}


def make_handler(service: RatingService, ui_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):   # quiet by default
            pass

        def _send_json(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_file(self, path: Path) -> None:
            if not path.is_file():
                self._send_json(404, {"error": f"file not found: {path.name}"})
                return
            body = path.read_bytes()
            self.send_response(200)
            ctype = _CONTENT_TYPES.get(path.suffix.lower(), "application/octet-stream")
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_json(self) -> dict:
            length = int(self.headers.get("Content-Length", "0"))
            if length == 0:
                return {}
            try:
                return json.loads(self.rfile.read(length))
            except json.JSONDecodeError:
                raise ServiceError(400, "request body is not valid JSON") from None

        def do_GET(self):
            try:
                parsed = urllib.parse.urlparse(self.path)
                query = urllib.parse.parse_qs(parsed.query)
                parts = [p for p in parsed.path.split("/") if p]
                if parsed.path == "/api/panel":
                    token = query.get("token", [None])[0]
                    self._send_json(200, service.current_panel(token))
                elif parsed.path == "/api/report":
                    alpha = float(query.get("alpha", ["0.05"])[0])
                    margin = int(query.get("margin", [str(DEFAULT_ANOMALY_MARGIN)])[0])
                    self._send_json(200, service.report(alpha=alpha, margin=margin))
                elif len(parts) == 4 and parts[0] == "audio":
                    self._send_file(service.audio_path(parts[1], parts[2], parts[3]))
                elif ui_dir is not None:
                    rel = "index.html" if parsed.path in ("", "/") else parsed.path.lstrip("/")
                    target = (ui_dir / rel).resolve()
                    if not str(target).startswith(str(ui_dir.resolve())):
                        self._send_json(403, {"error": "path outside UI directory"})
                    else:
                        self._send_file(target)
                else:
                    self._send_json(404, {"error": f"unknown path {parsed.path!r}"})
            except ServiceError as err:
                self._send_json(err.status, err.payload())

        def do_POST(self):
            try:
                body = self._read_json()
                if self.path == "/api/start":
                    self._send_json(200, service.start(
                        str(body.get("participant", "")), bool(body.get("resume", False))))
                elif self.path == "/api/submit":
                    self._send_json(200, service.submit(
                        token=body.get("token"),
                        panel_id=str(body.get("panel_id", "")),
                        scores=body.get("scores") or {},
                        listened=body.get("listened") or {},
                        moved=body.get("moved") or {},
                    ))
                else:
                    self._send_json(404, {"error": f"unknown path {self.path!r}"})
            except ServiceError as err:
                self._send_json(err.status, err.payload())

    return Handler


def serve(design: MushraDesign, store_path: str | Path, port: int,
          ui_dir: str | Path | None = None,
          host: str = "127.0.0.1") -> ThreadingHTTPServer:
    """Build the HTTP server (caller decides whether to run it forever)."""
    service = RatingService(design, ExperimentStore(store_path))
    handler = make_handler(service, Path(ui_dir) if ui_dir else None)
    server = ThreadingHTTPServer((host, port), handler)
    server.rating_service = service          # handy for tests
    return server
