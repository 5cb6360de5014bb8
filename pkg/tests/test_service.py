"""Experiment service: command handling, snapshots, error frames.

Each test drives the WebSocket endpoint through starlette's TestClient and
pauses the paced loop first so assertions see deterministic tick counts.
"""

import pytest
from starlette.testclient import TestClient

from broom import SimConfig, World
from broom.service import ExperimentSession, create_app


@pytest.fixture()
def client(heatcool):
    _, tree = heatcool
    app = create_app(tree, SimConfig(dt=0.01, duration=600.0))
    with TestClient(app) as c:
        yield c


def _drain_until(ws, typ, command=None, collected=None):
    """Read frames until one of `typ` arrives; return it."""
    for _ in range(200):
        frame = ws.receive_json()
        if frame["type"] == typ and (
                command is None or frame.get("command") == command):
            return frame
        if collected is not None:
            collected.append(frame)
    raise AssertionError(f"no {typ} frame received")


def test_initial_snapshot_on_connect(client):
    with client.websocket_connect("/experiment") as ws:
        snap = ws.receive_json()
        assert snap["type"] == "snapshot"
        assert snap["tick"] >= 0
        assert snap["time"] == pytest.approx(snap["tick"] * 0.01)
        assert "root/cabin:temp_c" in snap["signals"]
        assert snap["fsm_states"]["root/system/panel"] == "Off"
        assert snap["behind_ms"] >= 0.0


def test_pause_and_step(client):
    with client.websocket_connect("/experiment") as ws:
        ws.receive_json()
        ws.send_json({"type": "pause"})
        ack = _drain_until(ws, "ack", "pause")
        paused_at = ack["tick"]
        ws.send_json({"type": "step", "n": 3})
        snaps = []
        ack = _drain_until(ws, "ack", "step", collected=snaps)
        ticks = [f["tick"] for f in snaps if f["type"] == "snapshot"]
        # one snapshot per stepped tick, consecutive, ending at the ack tick
        assert ticks == [paused_at + 1, paused_at + 2, paused_at + 3]
        assert ack["tick"] == paused_at + 3


def test_set_attr_tunable(client):
    with client.websocket_connect("/experiment") as ws:
        ws.receive_json()
        ws.send_json({"type": "pause"})
        _drain_until(ws, "ack", "pause")
        ws.send_json({"type": "set_attr", "path": "root/system/ctrl",
                      "attr": "setpoint", "value": 25})
        ack = _drain_until(ws, "ack", "set_attr")
        assert ack["type"] == "ack"


def test_set_attr_non_tunable_rejected(client):
    with client.websocket_connect("/experiment") as ws:
        ws.receive_json()
        ws.send_json({"type": "set_attr", "path": "root/system/ctrl",
                      "attr": "measured", "value": 1.0})
        err = _drain_until(ws, "error")
        assert err["code"] == "E_TUNABLE"


def test_set_attr_unknown_attribute(client):
    with client.websocket_connect("/experiment") as ws:
        ws.receive_json()
        ws.send_json({"type": "set_attr", "path": "root/system/ctrl",
                      "attr": "nope", "value": 1.0})
        err = _drain_until(ws, "error")
        assert err["code"] == "E_PROTOCOL"


def test_inject_drives_fsm(client):
    with client.websocket_connect("/experiment") as ws:
        ws.receive_json()
        ws.send_json({"type": "pause"})
        _drain_until(ws, "ack", "pause")
        ws.send_json({"type": "inject", "path": "root/system",
                      "port": "panel_in", "name": "btn_mode",
                      "kind": "message", "args": []})
        _drain_until(ws, "ack", "inject")
        ws.send_json({"type": "step", "n": 2})
        snaps = []
        _drain_until(ws, "ack", "step", collected=snaps)
        states = [f["fsm_states"]["root/system/panel"] for f in snaps
                  if f["type"] == "snapshot"]
        assert states[-1] == "Auto"


def test_malformed_frame_protocol_error(client):
    with client.websocket_connect("/experiment") as ws:
        ws.receive_json()
        ws.send_text("this is not json")
        err = _drain_until(ws, "error")
        assert err["code"] == "E_PROTOCOL"


def test_unknown_command_protocol_error(client):
    with client.websocket_connect("/experiment") as ws:
        ws.receive_json()
        ws.send_json({"type": "warp_ten"})
        err = _drain_until(ws, "error")
        assert err["code"] == "E_PROTOCOL"


def test_bad_speed_rejected(client):
    with client.websocket_connect("/experiment") as ws:
        ws.receive_json()
        ws.send_json({"type": "set_speed", "speed": 0})
        err = _drain_until(ws, "error")
        assert err["code"] == "E_PROTOCOL"


def test_subscribe_restricts_signals(client):
    with client.websocket_connect("/experiment") as ws:
        ws.receive_json()
        ws.send_json({"type": "pause"})
        _drain_until(ws, "ack", "pause")
        ws.send_json({"type": "subscribe",
                      "signals": ["root/system/ctrl:setpoint"]})
        _drain_until(ws, "ack", "subscribe")
        ws.send_json({"type": "step", "n": 1})
        snaps = []
        _drain_until(ws, "ack", "step", collected=snaps)
        sig = [f["signals"] for f in snaps if f["type"] == "snapshot"][-1]
        assert list(sig) == ["root/system/ctrl:setpoint"]
        assert sig["root/system/ctrl:setpoint"] == 22.0


def test_stepped_session_matches_plain_world(heatcool):
    # with no live interference a stepped session is the engine, verbatim
    _, tree = heatcool
    cfg = SimConfig(dt=0.01, duration=10.0)
    session = ExperimentSession(tree, cfg)
    reference = World(tree, cfg)
    session_events = []
    for _ in range(200):
        session_events.extend(session.world.step())
    ref_events = []
    for _ in range(200):
        ref_events.extend(reference.step())
    assert [e.to_line() for e in session_events] == \
        [e.to_line() for e in ref_events]
    assert session.world.attrs == reference.attrs
    assert session.world.fsm_state == reference.fsm_state
