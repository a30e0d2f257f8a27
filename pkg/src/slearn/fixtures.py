"""Canned configuration fixtures shipped with the package.

`paper_sle` is the pre-learned four-member ensemble, `default_sle` the
stock-parameter ensemble, and `random_sle` a randomly parameterized one.
The fixture directory can be overridden with the SLEARN_FIXTURES
environment variable; names resolve there first, then in the packaged
files.
"""

from __future__ import annotations

import os
from importlib import resources
from pathlib import Path

from .ensemble import Sle, load_sle

ENV_VAR = "SLEARN_FIXTURES"
BUILTIN_SLES = ("paper_sle", "default_sle", "random_sle")


def fixture_path(name: str) -> Path:
    """Resolve `name` (without extension) to a fixture file path."""
    override = os.environ.get(ENV_VAR)
    if override:
        candidate = Path(override) / name
        for suffix in ("", ".json", ".graph"):
            p = candidate.with_name(candidate.name + suffix)
            if p.exists():
                return p
    base = resources.files(__package__) / "fixtures"
    for suffix in ("", ".json", ".graph"):
        p = Path(str(base / (name + suffix)))
        if p.exists():
            return p
    raise FileNotFoundError(f"no fixture named {name!r}")


def load_fixture_sle(name: str) -> Sle:
    return load_sle(fixture_path(name))
