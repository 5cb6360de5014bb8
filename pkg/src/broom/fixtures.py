"""Locate the bundled example models.

The examples live next to the source tree (examples/ at the repository
root), so resolution walks upward from this file until it finds them.
Installed copies that carry the examples alongside the package also work.
"""

from __future__ import annotations

import os

from .instance import InstanceTree, instantiate
from .model import ModelUnit
from .parser import parse_file
from .validate import validate


def fixture_dir(name: str) -> str:
    """Absolute path of examples/<name>; raises if it cannot be found."""
    here = os.path.dirname(os.path.abspath(__file__))
    probe = here
    for _ in range(6):
        cand = os.path.join(probe, "examples", name)
        if os.path.isdir(cand):
            return cand
        probe = os.path.dirname(probe)
    raise FileNotFoundError(f"fixture directory examples/{name} not found")


def load_fixture(name: str = "heatcool") -> tuple[ModelUnit, InstanceTree]:
    """Parse, validate and instantiate a bundled example model."""
    path = os.path.join(fixture_dir(name), name + ".broom")
    unit = parse_file(path)
    if isinstance(unit, list):
        raise ValueError("fixture fails to parse: "
                         + "; ".join(d.format() for d in unit))
    diags = validate(unit)
    if diags:
        raise ValueError("fixture fails validation: "
                         + "; ".join(d.format() for d in diags))
    return unit, instantiate(unit)
