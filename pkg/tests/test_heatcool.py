"""End-to-end behavior of the heating/cooling reference fixture."""

from broom import SimConfig, Stimulus, World, run, validate


def _temps(trace):
    return [(ev.tick, ev.payload[0]) for ev in trace.events
            if ev.kind == "sample" and ev.src == "root/cabin"
            and ev.name == "temp_c"]


def test_fixture_is_clean(heatcool):
    unit, tree = heatcool
    assert validate(unit) == []
    assert "root/system/ctrl" in tree.nodes
    assert "root/cabin" in tree.nodes


def test_regulation_reaches_setpoint(heatcool_trace):
    temps = _temps(heatcool_trace)
    # default setpoint is 22.0; the last 10 simulated seconds must sit
    # within 0.1 degrees of it
    tail = [t for tick, t in temps if tick >= 5000]
    assert tail
    assert all(abs(t - 22.0) < 0.1 for t in tail), \
        f"worst: {max(abs(t - 22.0) for t in tail):.3f}"


def test_disturbance_rejection(heatcool):
    _, tree = heatcool
    # outside air jumps from -10 to +5 degrees mid-run
    st = [Stimulus(6000, "root/outside", "ctl", "set_temp", "method", [5.0])]
    trace = run(tree, SimConfig(dt=0.01, duration=120.0), stimuli=st)
    temps = dict(_temps(trace))
    settled_before = temps[5999]
    assert abs(settled_before - 22.0) < 0.1
    # the step disturbs the cabin...
    excursion = max(abs(temps[k] - 22.0) for k in range(6000, 9000)
                    if k in temps)
    assert excursion > 0.0
    # ...and the loop re-converges
    tail = [temps[k] for k in range(11000, 12001) if k in temps]
    assert all(abs(t - 22.0) < 0.1 for t in tail)


def test_ventilator_inherits_fan_behavior(heatcool):
    _, tree = heatcool
    vent = tree.nodes["root/system/vent"].cls
    names = {m.name for m in vent.methods}
    # copy-down inheritance: the subclass sees fan_on/fan_off plus its own
    assert {"fan_on", "fan_off", "set_speed"} <= names
    assert {p.name for p in vent.ports} >= {"basic", "speed_ctl"}


def test_panel_fsm_walk(heatcool):
    _, tree = heatcool
    w = World(tree, SimConfig(dt=0.01, duration=1.0))
    assert w.fsm_state["root/system/panel"] == "Off"
    for expected in ("Auto", "Heat", "Cool", "Off"):
        w.inject(Stimulus(0, "root/system", "panel_in", "btn_mode",
                          "message", []))
        w.step()
        assert w.fsm_state["root/system/panel"] == expected


def test_panel_buttons_change_setpoint(heatcool):
    _, tree = heatcool
    st = [
        Stimulus(1, "root/system", "panel_in", "btn_mode", "message", []),
        Stimulus(2, "root/system", "panel_in", "btn_up", "message", []),
        Stimulus(3, "root/system", "panel_in", "btn_up", "message", []),
    ]
    trace = run(tree, SimConfig(dt=0.01, duration=1.0), stimuli=st)
    sets = [ev for ev in trace.events if ev.kind == "msg_send"
            and ev.name == "set_target"]
    assert [ev.payload[0] for ev in sets] == [22.5, 23.0]


def test_sensor_cadence(heatcool_trace):
    readings = [ev.tick for ev in heatcool_trace.events
                if ev.kind == "msg_send" and ev.name == "reading"]
    assert readings[:4] == [5, 10, 15, 20]


def test_display_refresh_every_500(heatcool_trace):
    shows = [ev.tick for ev in heatcool_trace.events
             if ev.kind == "call" and ev.name == "show"]
    assert shows[:3] == [500, 1000, 1500]


def test_relay_port_resolves_to_final_provider(heatcool):
    _, tree = heatcool
    # the sensor's `air` port relays through the system boundary to the cabin
    assert tree.bindings[("root/system/sensor", "air", "temp")] \
        == "root/cabin"
