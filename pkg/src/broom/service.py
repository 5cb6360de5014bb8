"""Live experiment server: a paced simulation behind a WebSocket.

One asyncio task owns the simulation; WebSocket handlers only enqueue
commands and receive snapshot fan-out, so every state mutation happens on
the single owner.  Commands are applied at tick boundaries in arrival
order.  Frame schemas are documented in docs/protocol.md.
"""

from __future__ import annotations

import asyncio
import json
import time
from collections import deque
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .engine import EngineHalted, SimConfig, Stimulus, World
from .instance import InstanceTree
from .model import REAL


class ExperimentSession:
    """Simulation owner: world, clients, command queue, pacing state."""

    def __init__(self, tree: InstanceTree, config: SimConfig,
                 speed: float = 1.0):
        self.tree = tree
        self.config = config
        self.world = World(tree, config)
        self.speed = speed
        self.paused = False
        self.running = True
        self.behind_ms = 0.0
        self.clients: dict[WebSocket, Optional[list[str]]] = {}
        self.commands: deque = deque()
        self._deadline: Optional[float] = None

    # -- snapshots -----------------------------------------------------------

    def _signals(self, selectors: Optional[list[str]]) -> dict:
        out = {}
        for path in self.tree.order:
            cls = self.tree.nodes[path].cls
            blk = cls.block
            if blk is not None:
                sel = f"{path}:{blk.out}"
                if selectors is None or sel in selectors:
                    out[sel] = self.world.attrs[path][blk.out]
            for a in cls.attributes:
                if blk is not None and a.name == blk.out:
                    continue
                sel = f"{path}:{a.name}"
                if selectors is not None and sel in selectors:
                    out[sel] = self.world.attrs[path][a.name]
        return out

    def snapshot(self, selectors: Optional[list[str]] = None) -> dict:
        return {
            "type": "snapshot",
            "tick": self.world.tick,
            "time": self.world.tick * self.config.dt,
            "behind_ms": round(self.behind_ms, 3),
            "signals": self._signals(selectors),
            "fsm_states": dict(self.world.fsm_state),
        }

    async def _broadcast_snapshots(self) -> None:
        for ws, selectors in list(self.clients.items()):
            try:
                await ws.send_text(json.dumps(self.snapshot(selectors)))
            except Exception:
                self.clients.pop(ws, None)

    async def _broadcast(self, frame: dict) -> None:
        for ws in list(self.clients):
            try:
                await ws.send_text(json.dumps(frame))
            except Exception:
                self.clients.pop(ws, None)

    # -- stepping ------------------------------------------------------------

    @property
    def at_end(self) -> bool:
        return self.world.tick >= self.config.ticks or self.world.halted

    async def _step_once(self, snapshot_always: bool) -> None:
        try:
            events = self.world.step()
        except EngineHalted:
            self.paused = True
            return
        if events and events[-1].kind == "runtime_error":
            ev = events[-1]
            await self._broadcast({
                "type": "error", "code": "E_RUNTIME",
                "message": f"{ev.name} in {ev.src} at tick {ev.tick}"})
            self.paused = True
        if snapshot_always or \
                self.world.tick % self.config.snapshot_every == 0:
            await self._broadcast_snapshots()

    # -- command handling ----------------------------------------------------

    async def apply(self, ws: Optional[WebSocket], cmd: dict) -> None:
        kind = cmd.get("type")

        async def err(code: str, message: str) -> None:
            if ws is not None:
                await ws.send_text(json.dumps(
                    {"type": "error", "code": code, "message": message}))

        async def ack() -> None:
            if ws is not None:
                await ws.send_text(json.dumps(
                    {"type": "ack", "command": kind,
                     "tick": self.world.tick}))

        try:
            if kind == "set_attr":
                path, attr = cmd["path"], cmd["attr"]
                node = self.tree.nodes.get(path)
                a = node.cls.find_attribute(attr) if node else None
                if a is None:
                    await err("E_PROTOCOL", f"no attribute {path}:{attr}")
                    return
                if not a.tunable:
                    await err("E_TUNABLE",
                              f"attribute {path}:{attr} is not tunable")
                    return
                value = cmd["value"]
                if a.type.kind == REAL and isinstance(value, int):
                    value = float(value)
                self.world.attrs[path][attr] = value
                await ack()
            elif kind == "inject":
                self.world.inject(Stimulus(
                    0, cmd["path"], cmd["port"], cmd["name"],
                    cmd.get("kind", "message"), list(cmd.get("args", []))))
                await ack()
            elif kind == "pause":
                self.paused = True
                self._deadline = None
                await ack()
            elif kind == "resume":
                self.paused = False
                self._deadline = None
                await ack()
            elif kind == "step":
                n = int(cmd.get("n", 1))
                for _ in range(max(0, n)):
                    if self.at_end:
                        break
                    await self._step_once(snapshot_always=True)
                await ack()
            elif kind == "set_speed":
                speed = float(cmd["speed"])
                if speed <= 0:
                    await err("E_PROTOCOL", "speed must be > 0")
                    return
                self.speed = speed
                self._deadline = None
                await ack()
            elif kind == "subscribe":
                sel = cmd.get("signals")
                if ws is not None:
                    self.clients[ws] = list(sel) if sel is not None else None
                await ack()
            elif kind == "shutdown":
                await ack()
                self.running = False
            else:
                await err("E_PROTOCOL", f"unknown command type {kind!r}")
        except (KeyError, TypeError, ValueError) as e:
            await err("E_PROTOCOL", f"malformed {kind} command: {e}")

    # -- paced loop ----------------------------------------------------------

    async def loop(self) -> None:
        while self.running:
            while self.commands:
                ws, cmd = self.commands.popleft()
                await self.apply(ws, cmd)
            if self.paused or self.at_end:
                self._deadline = None
                await asyncio.sleep(0.005)
                continue
            now = time.monotonic()
            if self._deadline is None:
                self._deadline = now
            wait = self._deadline - now
            if wait > 0:
                await asyncio.sleep(wait)
            now = time.monotonic()
            self.behind_ms = max(0.0, (now - self._deadline) * 1000.0)
            self._deadline += self.config.dt / self.speed
            await self._step_once(snapshot_always=False)
        for ws in list(self.clients):
            try:
                await ws.close()
            except Exception:
                pass
        self.clients.clear()


def create_app(tree: InstanceTree, config: SimConfig,
               speed: float = 1.0) -> FastAPI:
    session = ExperimentSession(tree, config, speed)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        task = asyncio.create_task(session.loop())
        yield
        session.running = False
        task.cancel()
        try:
            await task
        except asyncio.CancelledError:
            pass

    app = FastAPI(lifespan=lifespan)
    app.state.session = session

    @app.websocket("/experiment")
    async def experiment(ws: WebSocket):
        await ws.accept()
        session.clients[ws] = None
        await ws.send_text(json.dumps(session.snapshot()))
        try:
            while True:
                text = await ws.receive_text()
                try:
                    cmd = json.loads(text)
                    if not isinstance(cmd, dict) or "type" not in cmd:
                        raise ValueError("frame must be an object "
                                         "with a 'type' field")
                except ValueError as e:
                    await ws.send_text(json.dumps(
                        {"type": "error", "code": "E_PROTOCOL",
                         "message": str(e)}))
                    continue
                session.commands.append((ws, cmd))
        except WebSocketDisconnect:
            pass
        finally:
            session.clients.pop(ws, None)

    return app


def serve(tree: InstanceTree, config: SimConfig, host: str = "127.0.0.1",
          port: int = 8787, speed: float = 1.0) -> None:
    """Run until a shutdown command or interrupt."""
    import uvicorn
    app = create_app(tree, config, speed)
    uvicorn.run(app, host=host, port=port, log_level="warning")
