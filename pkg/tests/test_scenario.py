"""Scenario conformance: embedding, windows, strict mode, packages."""

import json

import pytest

from broom import (
    Arrow, Scenario, SimConfig, Trace, TraceEvent, check_conformance,
    load_package, load_scenario, load_stimuli, rehearse_package,
)
from broom.scenario import (
    LifelineError, PackageEntry, ScenarioPackage, detect_conflicts,
)


def _ev(tick, kind, src, dst, name):
    return TraceEvent(tick=tick, time=tick * 0.01, kind=kind,
                      src=src, dst=dst, name=name, payload=[])


def _trace(events):
    return Trace(model="T", dt=0.01, duration=1.0, version="0.1.0",
                 events=events)


BASE = _trace([
    _ev(1, "msg_send", "A", "B", "m1"),
    _ev(2, "call", "B", "C", "c1"),
    _ev(5, "msg_send", "A", "B", "m2"),
    _ev(6, "call", "B", "C", "c2"),
])


def _scen(arrows, strict=False):
    return Scenario(name="s", lifelines=["A", "B", "C"],
                    arrows=arrows, strict=strict)


class TestConformance:
    def test_subsequence_embedding(self):
        v = check_conformance(BASE, _scen([
            Arrow("A", "B", "m1"),
            Arrow("B", "C", "c1", kind="call"),
            Arrow("A", "B", "m2"),
        ]))
        assert v.ok and v.matched == 3

    def test_gaps_allowed_when_not_strict(self):
        v = check_conformance(BASE, _scen([
            Arrow("A", "B", "m1"),
            Arrow("B", "C", "c2", kind="call"),
        ]))
        assert v.ok

    def test_missing_arrow_reports_index(self):
        v = check_conformance(BASE, _scen([
            Arrow("A", "B", "m1"),
            Arrow("B", "C", "c1", kind="call"),
            Arrow("A", "B", "mX"),          # never sent
        ]))
        assert not v.ok
        assert v.matched == 2
        assert v.divergence is not None
        assert v.divergence.arrow_index == 2
        assert v.divergence.reason == "missing"

    def test_reordered_arrows_fail(self):
        v = check_conformance(BASE, _scen([
            Arrow("A", "B", "m2"),
            Arrow("B", "C", "c1", kind="call"),   # c1 precedes m2
        ]))
        assert not v.ok
        assert v.divergence.arrow_index == 1

    def test_kind_mismatch_is_no_match(self):
        v = check_conformance(BASE, _scen([Arrow("B", "C", "c1")]))  # msg
        assert not v.ok

    def test_window_satisfied(self):
        v = check_conformance(BASE, _scen([
            Arrow("A", "B", "m1"),
            Arrow("A", "B", "m2", window=(3, 10)),
        ]))
        assert v.ok

    def test_window_violation(self):
        v = check_conformance(BASE, _scen([
            Arrow("A", "B", "m1"),
            Arrow("A", "B", "m2", window=(1, 2)),   # actual gap is 4
        ]))
        assert not v.ok
        assert v.divergence.arrow_index == 1
        assert v.divergence.reason in ("window-violation", "missing")

    def test_strict_flags_interleaved_event(self):
        v = check_conformance(BASE, _scen([
            Arrow("A", "B", "m1"),
            Arrow("A", "B", "m2"),
        ], strict=True))
        assert not v.ok
        assert v.divergence.reason == "extra-event-in-strict"

    def test_strict_clean_passes(self):
        v = check_conformance(BASE, _scen([
            Arrow("A", "B", "m1"),
            Arrow("B", "C", "c1", kind="call"),
            Arrow("A", "B", "m2"),
            Arrow("B", "C", "c2", kind="call"),
        ], strict=True))
        assert v.ok

    def test_empty_scenario_passes(self):
        assert check_conformance(BASE, _scen([])).ok

    def test_unknown_lifeline_raises(self, heatcool):
        _, tree = heatcool
        s = Scenario(name="s", lifelines=["root/nope"], arrows=[])
        with pytest.raises(LifelineError):
            check_conformance(BASE, s, tree)


class TestPackage:
    def test_heatcool_package_all_pass(self, heatcool, heatcool_dir):
        _, tree = heatcool
        pkg = load_package(str(heatcool_dir / "package.json"))
        results = rehearse_package(tree, SimConfig(dt=0.01, duration=60.0),
                                   pkg)
        assert [name for name, _, _ in results] == [
            "S1 closed-loop regulation",
            "S3 setpoint change through the panel",
            "S2 outside-temperature disturbance",
            "S4 fan operation",
            "S5 display refresh",
        ]   # priority order, not file order
        for name, verdict, report in results:
            assert verdict.ok, f"{name}: {verdict.divergence}"
            assert report.ok, f"{name}: {len(report.violations)} violations"

    def test_failing_scenario_does_not_abort_package(self, heatcool,
                                                     heatcool_dir):
        _, tree = heatcool
        pkg = load_package(str(heatcool_dir / "package.json"))
        pkg.entries[0].scenario.arrows.insert(0, Arrow("env", "root",
                                                       "never_sent"))
        results = rehearse_package(tree, SimConfig(dt=0.01, duration=5.0),
                                   pkg)
        assert len(results) == 5
        failed = [v for _, v, _ in results if not v.ok]
        assert failed and failed[0].divergence.arrow_index == 0

    def test_conflict_detection(self):
        a = Scenario("a", ["X", "Y"], [Arrow("X", "Y", "m1"),
                                       Arrow("X", "Y", "m2")])
        b = Scenario("b", ["X", "Y"], [Arrow("X", "Y", "m1"),
                                       Arrow("X", "Y", "m3")])
        pkg = ScenarioPackage("p", [PackageEntry(a), PackageEntry(b)])
        conflicts = detect_conflicts(pkg)
        assert conflicts == [("a", "b", 1)]

    def test_no_conflict_when_disjoint(self):
        a = Scenario("a", ["X", "Y"], [Arrow("X", "Y", "m1")])
        b = Scenario("b", ["P", "Q"], [Arrow("P", "Q", "m1")])
        pkg = ScenarioPackage("p", [PackageEntry(a), PackageEntry(b)])
        assert detect_conflicts(pkg) == []


class TestFiles:
    def test_load_scenario_roundtrip(self, heatcool_dir):
        s = load_scenario(str(heatcool_dir / "s1_regulation.json"))
        assert s.name == "S1 closed-loop regulation"
        assert s.arrows[0].source == "env"
        assert s.arrows[0].name == "set_target"

    def test_load_stimuli(self, heatcool_dir):
        st = load_stimuli(str(heatcool_dir / "stimuli_s2.json"))
        assert len(st) == 1
        assert st[0].at_tick == 100 and st[0].name == "set_temp"

    def test_window_json_shape(self, heatcool_dir, tmp_path):
        obj = {"name": "w", "lifelines": ["A", "B"], "strict": True,
               "arrows": [{"from": "A", "to": "B", "name": "m",
                           "kind": "msg", "window": [2, 9]}]}
        p = tmp_path / "w.json"
        p.write_text(json.dumps(obj))
        s = load_scenario(str(p))
        assert s.strict and s.arrows[0].window == (2, 9)
