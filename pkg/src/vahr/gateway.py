"""Live session gateway: newline-delimited JSON frames over one TCP stream.

The operator console connects, receives a brief frame, sends {"t":"start"},
then drives the run with intent and puzzle frames while the gateway streams
state, speech and partial-metrics frames back. All simulation state mutates
on the session thread; the socket reader only enqueues parsed frames.

Inbound frames:  {"t":"intent","text":...} {"t":"puzzle","piece_id":...}
                 {"t":"start"} {"t":"abort"}
Outbound frames: {"t":"brief",...} {"t":"state",...} {"t":"speech",...}
                 {"t":"metrics",...} {"t":"error",...}
"""
from __future__ import annotations

import json
import queue
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import VahrError
from .events import dumps_record
from .metrics import build_report
from .assistant import NoIntentMatched, RobotUnreachable
from .runner import FrameOperator, RunReport, SimRun
from .scenario import Scenario
from .sim import Process

STATE_INTERVAL_MS = 500
METRICS_INTERVAL_MS = 1000


class GatewayError(VahrError):
    pass


class BindFailure(GatewayError):
    pass


class SessionAbandoned(GatewayError):
    pass


def _reader(conn: socket.socket, inbox: "queue.Queue[dict | None]") -> None:
    """Socket reader thread: one parsed frame per line, None on EOF."""
    buf = b""
    try:
        while True:
            chunk = conn.recv(4096)
            if not chunk:
                break
            buf += chunk
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                if not line.strip():
                    continue
                try:
                    inbox.put(json.loads(line))
                except json.JSONDecodeError:
                    inbox.put({"t": "_malformed", "raw": line.decode("utf-8", "replace")})
    except OSError:
        pass
    finally:
        inbox.put(None)


@dataclass
class SessionResult:
    report: RunReport
    frames: list[dict[str, Any]]
    out_dir: Path | None


class Session:
    """One live run bound to one client connection."""

    def __init__(self, conn: socket.socket, scenario: Scenario, seed: int,
                 pace: str = "real", out_dir: str | Path | None = None):
        self.conn = conn
        self.scenario = scenario
        self.seed = seed
        self.pace = pace
        self.out_dir = Path(out_dir) if out_dir else None
        self.sim = SimRun(scenario, seed, "live")
        self.op = FrameOperator(self.sim)
        self.frames: list[dict[str, Any]] = []
        self.inbox: "queue.Queue[dict | None]" = queue.Queue()
        # writes go through a bounded queue and a writer thread so a stalled
        # client cannot block the session thread
        self.outbox: "queue.Queue[bytes | None]" = queue.Queue(maxsize=1000)
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._writer.start()
        self._eof = False
        self._aborted = False
        self._records_sent = 0

    # -- outbound ------------------------------------------------------------

    def _write_loop(self) -> None:
        while True:
            data = self.outbox.get()
            if data is None:
                return
            try:
                self.conn.sendall(data)
            except OSError:
                self._eof = True
                return

    def send(self, frame: dict[str, Any]) -> None:
        if self._eof:
            return
        try:
            self.outbox.put_nowait((dumps_record(frame) + "\n").encode("utf-8"))
        except queue.Full:
            self._eof = True

    def _state_frame(self, done: bool) -> dict[str, Any]:
        sim = self.sim
        robots = [{
            "id": r.id,
            "x": round(r.position[0], 3),
            "y": round(r.position[1], 3),
            "phase": r.phase.value,
            "status": r.status,
            "cargo": r.cargo.package_id if r.cargo else None,
            "target": r.nav_target,
        } for r in sim.robots]
        shadows = [sim.shadows.peek(r.thing_id).to_json_dict() for r in sim.robots]
        return {"t": "state", "now_ms": sim.clock(), "robots": robots,
                "shadows": shadows, "done": done}

    def _metrics_frame(self) -> dict[str, Any]:
        report = build_report(self.sim.log.records, self.sim.task_specs)
        return {"t": "metrics", "now_ms": self.sim.clock(),
                "report": report.to_json_dict()}

    def _flush_speech(self) -> None:
        records = self.sim.log.records
        for rec in records[self._records_sent:]:
            if rec.get("kind") == "speech":
                self.send({"t": "speech", "from": rec["from"], "text": rec["text"]})
            elif rec.get("kind") == "utterance":
                self.send({"t": "speech", "from": rec["speaker"], "text": rec["text"]})
        self._records_sent = len(records)

    # -- inbound -------------------------------------------------------------

    def _apply_inbound(self, frame: dict[str, Any]) -> None:
        kind = frame.get("t")
        now = self.sim.clock()
        if kind == "_malformed" or not isinstance(kind, str):
            self.send({"t": "error", "code": "bad_frame", "msg": "unparseable frame"})
            return
        if kind == "abort":
            self._aborted = True
            return
        if kind not in ("start", "intent", "puzzle"):
            self.send({"t": "error", "code": "unknown_frame", "msg": f"unknown frame type {kind!r}"})
            return
        self.frames.append({"t": now, "frame": frame})
        if kind == "start":
            self.op.started.fire()
        elif kind == "puzzle":
            self.op.apply_puzzle(frame.get("piece_id"))
        elif kind == "intent":
            try:
                self.op.handle_intent_frame(str(frame.get("text", "")))
            except NoIntentMatched:
                self.send({"t": "error", "code": "NoIntentMatched",
                           "msg": f"no intent for {frame.get('text')!r}"})
            except RobotUnreachable as exc:
                self.send({"t": "error", "code": "RobotUnreachable", "msg": str(exc)})

    # -- main loop -------------------------------------------------------------

    def run(self) -> SessionResult:
        sim = self.sim
        threading.Thread(target=_reader, args=(self.conn, self.inbox), daemon=True).start()
        proc = Process(sim.scheduler, self.op.main()).start()
        sim.scheduler.call_in(sim.scenario.tick_ms, sim._pump_ticks)
        if sim.scenario.shadow_poll_interval_ms:
            sim.scheduler.call_in(sim.scenario.shadow_poll_interval_ms, sim._pump_polling)

        self.send({
            "t": "brief",
            "zone_assignments": {str(k): v for k, v in sim.zone_assignments.items()},
            "tasks": list(sim.scenario.tasks),
            "seed": self.seed,
        })

        wall_start = time.monotonic()
        chunk = sim.scenario.tick_ms
        next_state = 0
        next_metrics = 0
        # wall-clock floors keep fast-pace sessions from flooding the stream
        next_state_wall = 0.0
        next_metrics_wall = 0.0
        while not proc.done.fired and not self._aborted and not self._eof:
            # inbound frames land at the current logical instant
            while True:
                try:
                    frame = self.inbox.get_nowait()
                except queue.Empty:
                    break
                if frame is None:
                    self._eof = True
                    break
                self._apply_inbound(frame)
            if self._eof or self._aborted:
                break

            target = sim.scheduler.now_ms + chunk
            if target > sim.scenario.timeout_ms:
                sim.timed_out = True
                break
            sim.scheduler.run_until(target)

            self._flush_speech()
            wall = time.monotonic()
            if sim.clock() >= next_state and wall >= next_state_wall:
                self.send(self._state_frame(done=False))
                next_state = sim.clock() + STATE_INTERVAL_MS
                next_state_wall = wall + 0.02
            if sim.clock() >= next_metrics and wall >= next_metrics_wall:
                self.send(self._metrics_frame())
                next_metrics = sim.clock() + METRICS_INTERVAL_MS
                next_metrics_wall = wall + 0.1

            if self.pace == "real":
                lag = target / 1000.0 - (time.monotonic() - wall_start)
                if lag > 0:
                    time.sleep(lag)
            else:
                time.sleep(0)  # let the socket threads run between chunks

        sim.active = False
        completed = proc.done.fired and not self._aborted and not sim.timed_out
        report = sim._finish(time.monotonic() - wall_start, completed=completed)
        self._flush_speech()
        self.send(self._state_frame(done=True))
        self.send(self._metrics_frame())

        out = None
        if self.out_dir is not None:
            out = report.save(self.out_dir)
            frames_text = "".join(dumps_record(f) + "\n" for f in self.frames)
            (out / "frames.jsonl").write_text(frames_text, encoding="utf-8")
        try:
            self.outbox.put_nowait(None)
        except queue.Full:
            pass
        self._writer.join(timeout=10.0)
        try:
            self.conn.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        if self._eof and not completed:
            raise SessionAbandoned("client disconnected before the run completed")
        return SessionResult(report=report, frames=self.frames, out_dir=out)


def serve_session(scenario: Scenario, bind: tuple[str, int], seed: int = 0,
                  pace: str = "real", out_dir: str | Path | None = None,
                  sessions: int | None = 1,
                  on_ready=None) -> list[SessionResult]:
    """Accept console connections and run one session per client.

    `sessions=None` serves until interrupted. Returns the completed session
    results (abandoned sessions are skipped with their reports saved).
    """
    try:
        server = socket.create_server(bind, reuse_port=False)
    except OSError as exc:
        raise BindFailure(f"cannot bind {bind}: {exc}") from None
    server.listen(1)
    if on_ready is not None:
        on_ready(server.getsockname())

    results: list[SessionResult] = []
    count = 0
    try:
        while sessions is None or count < sessions:
            conn, _addr = server.accept()
            conn.settimeout(None)
            session = Session(conn, scenario, seed + count, pace=pace,
                              out_dir=_session_dir(out_dir, count))
            try:
                results.append(session.run())
            except SessionAbandoned:
                pass
            finally:
                try:
                    conn.close()
                except OSError:
                    pass
            count += 1
    finally:
        server.close()
    return results


def _session_dir(out_dir: str | Path | None, index: int) -> Path | None:
    if out_dir is None:
        return None
    return Path(out_dir) / f"session{index:03d}"
