"""Scenario documents: parsing, validation and path resolution."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..control import (
    ControlSystem,
    MeasureControl,
    VectorFieldRule,
    control_from_document,
    system_from_document,
    vector_field_from_document,
)
from ..errors import ConfigError, MdeLabError
from ..measures import DiscreteMeasure, measure_from_document
from .bumps import SplineBump, bump_from_document


@dataclass
class Scenario:
    name: str
    system: ControlSystem
    initial: DiscreteMeasure
    N_list: list
    horizon_T: float
    control: MeasureControl | None = None
    controls: list = field(default_factory=list)
    k_list: list = field(default_factory=list)
    initial_alt: DiscreteMeasure | None = None
    mvf: VectorFieldRule | None = None
    probes: list = field(default_factory=list)
    test_functions: list = field(default_factory=list)
    seed: int = 0
    epsilons: list = field(default_factory=list)
    max_ratio: float | None = None
    control_lipschitz: float | None = None
    output_times: list | None = None
    document: dict = field(default_factory=dict, repr=False)

    def vector_field(self):
        """Rule driving the dynamics: the explicit mvf if given, else the control."""
        if self.mvf is not None:
            return self.mvf
        if self.control is None:
            raise ConfigError("scenario has neither a control nor an mvf", "control")
        from ..control import ControlInduced

        return ControlInduced(self.system, self.control)


def _read_json(path: Path, where: str):
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}", where) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}", where) from None


def _resolve(value, base: Path, where: str):
    """Inline documents pass through; strings are paths relative to ``base``."""
    if isinstance(value, str):
        return _read_json(base / value, where)
    return value


def _measure(value, base, where) -> DiscreteMeasure:
    doc = _resolve(value, base, where)
    try:
        return measure_from_document(doc)
    except (ValueError, TypeError, MdeLabError) as exc:
        raise ConfigError(str(exc), where) from None


def _wrap(where, fn, *args):
    """Re-raise library validation errors as ConfigError at field ``where``."""
    try:
        return fn(*args)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, MdeLabError) as exc:
        raise ConfigError(str(exc), where) from None


def scenario_from_document(doc: dict, base_dir=".") -> Scenario:
    base = Path(base_dir)
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object", "")
    for key in ("system", "initial", "N_list", "T"):
        if key not in doc:
            raise ConfigError(f"missing required field '{key}'", key)

    sys_doc = dict(_resolve(doc["system"], base, "system"))
    metric = sys_doc.get("control_metric")
    if isinstance(metric, str) and metric != "euclidean":
        sys_doc["control_metric"] = _read_json(base / metric, "system.control_metric")
    system = _wrap("system", system_from_document, sys_doc, "system")

    initial = _measure(doc["initial"], base, "initial")
    if initial.dim != system.dim:
        raise ConfigError(f"initial measure has dimension {initial.dim}, system {system.dim}", "initial")

    N_list = doc["N_list"]
    if not isinstance(N_list, list) or not N_list or not all(isinstance(n, int) and n >= 1 for n in N_list):
        raise ConfigError("expected a nonempty list of positive integers", "N_list")
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ConfigError("N_list must be strictly increasing", "N_list")
    try:
        T = float(doc["T"])
    except (TypeError, ValueError):
        raise ConfigError("horizon must be a number", "T") from None
    if not T > 0:
        raise ConfigError("horizon must be positive", "T")
    for N in N_list:
        if abs(T * N - round(T * N)) > 1e-9:
            raise ConfigError(f"horizon {T} is not a multiple of 1/{N}", "T")

    sc = Scenario(doc.get("name", "scenario"), system, initial, list(N_list), T, document=doc)
    if "control" in doc:
        sc.control = _wrap("control", control_from_document, _resolve(doc["control"], base, "control"), system, "control")
    for i, c in enumerate(doc.get("controls", [])):
        where = f"controls[{i}]"
        sc.controls.append(_wrap(where, control_from_document, _resolve(c, base, where), system, where))
    sc.k_list = list(doc.get("k_list", range(1, len(sc.controls) + 1)))
    if len(sc.k_list) != len(sc.controls):
        raise ConfigError(f"{len(sc.k_list)} labels for {len(sc.controls)} controls", "k_list")
    if "initial_alt" in doc:
        sc.initial_alt = _measure(doc["initial_alt"], base, "initial_alt")
    if "mvf" in doc:
        sc.mvf = _wrap("mvf", vector_field_from_document, _resolve(doc["mvf"], base, "mvf"), system, "mvf")
    sc.probes = [_measure(p, base, f"probes[{i}]") for i, p in enumerate(doc.get("probes", []))]
    for i, p in enumerate(sc.probes):
        if p.dim != system.dim:
            raise ConfigError("probe dimension differs from the state dimension", f"probes[{i}]")
    for i, g in enumerate(doc.get("test_functions", [])):
        bump = _wrap(f"test_functions[{i}]", bump_from_document, g)
        if bump.dim != system.dim:
            raise ConfigError("test function center has the wrong dimension", f"test_functions[{i}].center")
        sc.test_functions.append(bump)
    sc.seed = int(doc.get("seed", 0))
    eps = doc.get("epsilons", doc.get("epsilon", []))
    sc.epsilons = [float(e) for e in np.atleast_1d(eps)]
    if any(e <= 0 for e in sc.epsilons):
        raise ConfigError("epsilon must be positive", "epsilon")
    sc.max_ratio = None if doc.get("max_ratio") is None else float(doc["max_ratio"])
    sc.control_lipschitz = None if doc.get("control_lipschitz") is None else float(doc["control_lipschitz"])
    sc.output_times = doc.get("output_times")
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    doc = _read_json(path, "scenario")
    return scenario_from_document(doc, path.parent)


__all__ = ["Scenario", "SplineBump", "load_scenario", "scenario_from_document"]
