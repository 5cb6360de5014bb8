"""Scenario specifications (message-sequence-chart style) and trace
conformance checking.

A scenario is a list of lifelines (instance paths or "env") and an ordered
list of arrows; each arrow names the sending and receiving lifeline, a
signature, a kind (call or msg), and an optional tick window relative to
the previously matched arrow.  Non-strict checking asks whether the arrow
sequence embeds as a subsequence of the trace's matching events; strict
checking additionally forbids any other event on the scenario's lifelines
between matched arrows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .engine import SimConfig, Stimulus, TimelinessReport, check_timeliness, run
from .instance import InstanceTree
from .trace import Trace, TraceEvent

PRIORITIES = ("feasibility", "reuse", "key-property", "least-understood",
              "extra")

# arrow kinds map onto the event kinds that can match them
_ARROW_EVENT = {"call": "call", "msg": "msg_send"}


class LifelineError(Exception):
    """A scenario lifeline resolves to no instance (code E_LIFELINE)."""

    code = "E_LIFELINE"


@dataclass
class Arrow:
    source: str
    target: str
    name: str
    kind: str = "msg"                       # "call" | "msg"
    window: Optional[tuple[int, int]] = None  # [min,max] ticks after previous


@dataclass
class Scenario:
    name: str
    lifelines: list[str]
    arrows: list[Arrow] = field(default_factory=list)
    strict: bool = False


@dataclass
class Divergence:
    arrow_index: int
    reason: str          # missing | out-of-order | window-violation
    #                    # | extra-event-in-strict
    trace_position: int  # index into trace.events


@dataclass
class Verdict:
    ok: bool
    matched: int
    divergence: Optional[Divergence] = None


@dataclass
class PackageEntry:
    scenario: Scenario
    priority: str = "extra"
    stimuli: list[Stimulus] = field(default_factory=list)


@dataclass
class ScenarioPackage:
    name: str
    entries: list[PackageEntry] = field(default_factory=list)


def _check_lifelines(scenario: Scenario, tree: Optional[InstanceTree]) -> None:
    for ll in scenario.lifelines:
        if ll == "env":
            continue
        if tree is not None and ll not in tree.nodes:
            raise LifelineError(
                f"lifeline '{ll}' resolves to no instance")


def _arrow_matches(arrow: Arrow, ev: TraceEvent) -> bool:
    return (ev.kind == _ARROW_EVENT[arrow.kind]
            and ev.src == arrow.source
            and ev.dst == arrow.target
            and ev.name == arrow.name)


def _embed(arrows: list[Arrow], events: list[tuple[int, TraceEvent]],
           ) -> tuple[Optional[list[int]], int, Optional[Divergence]]:
    """Find an embedding respecting windows; backtracking search.

    `events` holds (trace index, event).  Returns (positions into `events`
    or None, deepest arrow reached, divergence at the deepest failure).
    """
    n = len(arrows)
    best_depth = 0
    best_div: Optional[Divergence] = None

    def attempt(ai: int, start: int, prev_tick: Optional[int]):
        nonlocal best_depth, best_div
        if ai == n:
            return []
        arrow = arrows[ai]
        saw_candidate = False
        for pos in range(start, len(events)):
            idx, ev = events[pos]
            if not _arrow_matches(arrow, ev):
                continue
            saw_candidate = True
            if arrow.window is not None and prev_tick is not None:
                lo, hi = arrow.window
                delta = ev.tick - prev_tick
                if delta < lo:
                    continue
                if delta > hi:
                    if ai >= best_depth:
                        best_depth = ai
                        best_div = Divergence(ai, "window-violation", idx)
                    break  # later events are only further away
            if ai + 1 > best_depth:
                best_depth = ai + 1
                best_div = None
            rest = attempt(ai + 1, pos + 1, ev.tick)
            if rest is not None:
                return [pos] + rest
        if best_div is None and best_depth <= ai:
            best_depth = ai
            reason = "missing"
            if saw_candidate:
                reason = "window-violation" if arrow.window else "out-of-order"
            best_div = Divergence(
                ai, reason, events[-1][0] + 1 if events else 0)
        return None

    positions = attempt(0, 0, None)
    return positions, best_depth, best_div


def check_conformance(trace: Trace, scenario: Scenario,
                      tree: Optional[InstanceTree] = None) -> Verdict:
    """Check a trace against one scenario; first divergence is reported."""
    _check_lifelines(scenario, tree)
    lifelines = set(scenario.lifelines)
    if not scenario.arrows:
        return Verdict(ok=True, matched=0)
    # candidate events: matchable kinds touching the scenario's lifelines
    events = [(i, ev) for i, ev in enumerate(trace.events)
              if ev.kind in ("call", "msg_send")
              and (ev.src in lifelines or ev.dst in lifelines)]
    positions, depth, div = _embed(scenario.arrows, events)
    if positions is None:
        return Verdict(ok=False, matched=depth,
                       divergence=div or Divergence(depth, "missing", 0))
    if scenario.strict:
        # between consecutive matches no other candidate event may occur
        matched_set = set(positions)
        lo = 0
        for k, pos in enumerate(positions):
            for p in range(lo, pos):
                if p not in matched_set:
                    return Verdict(
                        ok=False, matched=k,
                        divergence=Divergence(k, "extra-event-in-strict",
                                              events[p][0]))
            lo = pos + 1
    return Verdict(ok=True, matched=len(scenario.arrows))


def rehearse_package(
        tree: InstanceTree, config: SimConfig, package: ScenarioPackage,
) -> list[tuple[str, Verdict, TimelinessReport]]:
    """Run every scenario's stimuli and check conformance and timeliness.

    Execution order follows the priority tags (feasibility first, extras
    last), stable within a tag.  A failing scenario never aborts the rest.
    """
    ordered = sorted(
        package.entries,
        key=lambda e: PRIORITIES.index(e.priority)
        if e.priority in PRIORITIES else len(PRIORITIES))
    results = []
    for entry in ordered:
        try:
            trace = run(tree, config, entry.stimuli)
            verdict = check_conformance(trace, entry.scenario, tree)
            report = check_timeliness(trace, tree)
        except Exception as e:  # isolation: report and continue
            verdict = Verdict(ok=False, matched=0,
                              divergence=Divergence(0, f"error: {e}", 0))
            report = TimelinessReport()
        results.append((entry.scenario.name, verdict, report))
    return results


def detect_conflicts(package: ScenarioPackage) -> list[tuple[str, str, int]]:
    """Conservative syntactic conflict check between scenario pairs.

    Flags (name_a, name_b, shared prefix length) when two scenarios,
    projected onto their shared lifelines, agree on a non-empty arrow
    prefix and then mandate different next signatures from the same
    sending lifeline.  Warnings, not errors.
    """
    conflicts = []
    entries = package.entries
    for i in range(len(entries)):
        for j in range(i + 1, len(entries)):
            a, b = entries[i].scenario, entries[j].scenario
            shared = set(a.lifelines) & set(b.lifelines)
            if not shared:
                continue
            pa = [ar for ar in a.arrows
                  if ar.source in shared and ar.target in shared]
            pb = [ar for ar in b.arrows
                  if ar.source in shared and ar.target in shared]
            k = 0
            while k < len(pa) and k < len(pb) and \
                    (pa[k].source, pa[k].target, pa[k].name, pa[k].kind) == \
                    (pb[k].source, pb[k].target, pb[k].name, pb[k].kind):
                k += 1
            if k == 0 or (k >= len(pa) or k >= len(pb)):
                continue
            if pa[k].source == pb[k].source and \
                    (pa[k].name, pa[k].target) != (pb[k].name, pb[k].target):
                conflicts.append((a.name, b.name, k))
    return conflicts


# ---------------------------------------------------------------------------
# JSON file formats

def scenario_from_json(obj: dict) -> Scenario:
    arrows = []
    for a in obj.get("arrows", []):
        window = tuple(a["window"]) if a.get("window") is not None else None
        arrows.append(Arrow(a["from"], a["to"], a["name"],
                            a.get("kind", "msg"), window))
    return Scenario(name=obj["name"], lifelines=list(obj["lifelines"]),
                    arrows=arrows, strict=bool(obj.get("strict", False)))


def scenario_to_json(s: Scenario) -> dict:
    return {
        "name": s.name,
        "lifelines": list(s.lifelines),
        "strict": s.strict,
        "arrows": [
            {"from": a.source, "to": a.target, "name": a.name,
             "kind": a.kind,
             **({"window": list(a.window)} if a.window else {})}
            for a in s.arrows],
    }


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        return scenario_from_json(json.load(f))


def stimuli_from_json(objs: list[dict]) -> list[Stimulus]:
    return [Stimulus(o["at_tick"], o["path"], o["port"], o["name"],
                     o.get("kind", "message"), list(o.get("args", [])))
            for o in objs]


def load_stimuli(path: str) -> list[Stimulus]:
    with open(path, "r", encoding="utf-8") as f:
        return stimuli_from_json(json.load(f))


def load_package(path: str, base_dir: Optional[str] = None) -> ScenarioPackage:
    """Package file: {name, scenarios:[{file, priority, stimuli?}]}.

    Scenario and stimulus file paths are taken relative to the package file.
    """
    import os
    with open(path, "r", encoding="utf-8") as f:
        obj = json.load(f)
    base = base_dir if base_dir is not None else os.path.dirname(path)
    pkg = ScenarioPackage(name=obj["name"])
    for entry in obj["scenarios"]:
        scenario = load_scenario(os.path.join(base, entry["file"]))
        stimuli = []
        if entry.get("stimuli"):
            stimuli = load_stimuli(os.path.join(base, entry["stimuli"]))
        pkg.entries.append(PackageEntry(
            scenario, entry.get("priority", "extra"), stimuli))
    return pkg
