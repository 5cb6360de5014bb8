"""BROOM: a textual actor-modeling language with a deterministic hybrid
simulator, scenario rehearsal, C code generation, and a live experiment
service."""

from .model import Diagnostic, ModelUnit, SourceSpan
from .parser import parse, parse_file
from .printer import render
from .validate import validate
from .instance import (
    InstanceTree, ModelError, flatten_inheritance, instantiate,
)
from .blocks import PiState, Pt1State, limiter, pi_step, pt1_step
from .engine import (
    EngineHalted, SimConfig, Stimulus, TimelinessReport, World,
    check_timeliness, run,
)
from .trace import Trace, TraceEvent, read_ndjson, read_trace_file
from .scenario import (
    Arrow, Scenario, ScenarioPackage, Verdict, check_conformance,
    load_package, load_scenario, load_stimuli, rehearse_package,
)
from .codegen import CodegenConfig, FlatProgram, flatten, emit
from .fixtures import fixture_dir, load_fixture

__version__ = "0.1.0"

__all__ = [
    "Diagnostic", "ModelUnit", "SourceSpan", "parse", "parse_file",
    "render", "validate", "InstanceTree", "ModelError",
    "flatten_inheritance", "instantiate", "PiState", "Pt1State",
    "limiter", "pi_step", "pt1_step", "EngineHalted", "SimConfig",
    "Stimulus", "TimelinessReport", "World", "check_timeliness", "run",
    "Trace", "TraceEvent", "read_ndjson", "read_trace_file",
    "Arrow", "Scenario", "ScenarioPackage", "Verdict", "check_conformance",
    "load_package", "load_scenario", "load_stimuli", "rehearse_package",
    "CodegenConfig", "FlatProgram", "flatten", "emit",
    "fixture_dir", "load_fixture",
    "__version__",
]
