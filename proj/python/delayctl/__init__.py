"""Python front end for the delayctl solver.

Histories are passed as the same JSON objects the spec files use; plain
dicts are serialized here.
"""

import json

from . import _delayctl
from ._delayctl import (
    ConfigError,
    DelayctlError,
    Field,
    Spec,
    ValidationError,
    check,
    demo,
    demo_names,
    identity,
    load_field,
    load_spec,
    run_cli,
    simulate,
    solve,
)

__all__ = [
    "ConfigError",
    "DelayctlError",
    "Field",
    "Spec",
    "ValidationError",
    "check",
    "demo",
    "demo_names",
    "grad_B",
    "identity",
    "load_field",
    "load_spec",
    "run_cli",
    "simulate",
    "solve",
    "spec_from_json",
    "value",
]


def _text(obj):
    if obj is None:
        return ""
    return obj if isinstance(obj, str) else json.dumps(obj)


def spec_from_json(obj):
    return _delayctl.spec_from_json(_text(obj))


def value(spec, field, t, y=None, history=None):
    """v(t, x) with x built from (y, history); either defaults to the spec's initial data."""
    return _delayctl.value(spec, field, t, y, _text(history))


def grad_B(spec, field, t, y=None, history=None):
    return _delayctl.grad_B(spec, field, t, y, _text(history))
