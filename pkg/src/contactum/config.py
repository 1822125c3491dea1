"""JSON run configurations.

A config is one JSON object. Expressions are JSON strings; ``null`` in a box
bound means unbounded. Recognised keys::

    model            {"builtin": name, "n": int, "options": {...}} or {"atlas": {...}}
    parameters       {name: number}
    definitions      {name: expression}   substituted into every expression
    hamiltonian      expression, or {chart id: expression}
    homogeneous_hamiltonian   H(q0.., p0..) for the projective model
    section          expression, or {chart id: expression}
    initial          {"chart": id, "coords": [...]} or {"chart": id, "values": {name: x}}
    integrator       {"t0": 0, "t1": 1, "h": 0.01}
    grid             {"chart": id, "lo": [...], "hi": [...], "counts": [...], "times": [...]}
    characteristics  {"chart": id, "q0": [[...], ...], "t0", "t1", "h"}
    verify           {"samples": 100, "brackets": [[F, G], ...], "rescale": g, ...}
    seed             integer
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

from .contact import ContactModel, ModelError, SectionModel, projective_reduction
from .exprparse import ExprSyntaxError, as_expr
from .geometry import Atlas, Box, Chart, ChartPoint, GeometryError, TransitionMap, builtin
from .hj import Grid

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "atlas_from_dict"]


class ConfigError(ValueError):
    pass


def _bound(v, default):
    if v is None:
        return default
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ConfigError(f"box bound must be a number or null, got {v!r}")
    return float(v)


def _box(node, dim: int, what: str) -> Box:
    if not isinstance(node, Mapping) or "lo" not in node or "hi" not in node:
        raise ConfigError(f"{what}: expected {{'lo': [...], 'hi': [...]}}")
    lo, hi = node["lo"], node["hi"]
    if len(lo) != dim or len(hi) != dim:
        raise ConfigError(f"{what}: bounds must have length {dim}")
    return Box(tuple(_bound(v, -math.inf) for v in lo), tuple(_bound(v, math.inf) for v in hi))


def atlas_from_dict(node: Mapping) -> Atlas:
    """Build an inline atlas: ``{"name", "charts": [...], "transitions": [...]}``."""
    try:
        charts = []
        for c in node["charts"]:
            n = int(c["n"])
            dim = 2 * n + 1
            charts.append(
                Chart(
                    id=str(c["id"]),
                    n=n,
                    names=tuple(c["names"]),
                    domain=_box(c.get("domain", {"lo": [None] * dim, "hi": [None] * dim}), dim, "domain"),
                    core=_box(c["core"], dim, "core"),
                    momentum_signs=tuple(float(s) for s in c.get("momentum_signs", ())),
                    margin=float(c.get("margin", 0.1)),
                )
            )
        dims = {c.id: c.dim for c in charts}
        transitions = []
        for t in node.get("transitions", ()):
            dim = dims[t["source"]]
            transitions.append(
                TransitionMap(
                    source=str(t["source"]),
                    target=str(t["target"]),
                    overlap=tuple(_box(b, dim, "overlap") for b in t["overlap"]),
                    forward=tuple(as_expr(e) for e in t["forward"]),
                    cocycle=as_expr(t["cocycle"]),
                )
            )
        return Atlas(str(node.get("name", "inline")), tuple(charts), tuple(transitions), str(node.get("description", "")))
    except KeyError as exc:
        raise ConfigError(f"inline atlas: missing key {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"inline atlas: {exc}") from exc


@dataclass
class RunConfig:
    atlas: Atlas
    model: Optional[ContactModel]
    section: Optional[SectionModel] = None
    parameters: Dict[str, float] = field(default_factory=dict)
    initial: Optional[ChartPoint] = None
    t0: float = 0.0
    t1: float = 1.0
    h: float = 0.01
    grid: Optional[Grid] = None
    grid_chart: Optional[str] = None
    grid_times: Tuple[float, ...] = (0.0,)
    characteristics: Optional[dict] = None
    verify: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    raw: Dict[str, Any] = field(default_factory=dict)

    def require_model(self) -> ContactModel:
        if self.model is None:
            raise ConfigError("config has no hamiltonian")
        return self.model

    def require_section(self) -> SectionModel:
        if self.section is None:
            raise ConfigError("config has no section")
        return self.section


def _number(node: Mapping, key: str, default):
    v = node.get(key, default)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ConfigError(f"{key!r} must be a number")
    return float(v)


def _atlas(node: Mapping) -> Atlas:
    model = node.get("model")
    if not isinstance(model, Mapping):
        raise ConfigError("'model' must be an object")
    if "atlas" in model:
        return atlas_from_dict(model["atlas"])
    name = model.get("builtin")
    if not isinstance(name, str):
        raise ConfigError("'model' needs 'builtin' or 'atlas'")
    try:
        return builtin(name, int(model.get("n", 1)), **dict(model.get("options", {})))
    except (GeometryError, TypeError) as exc:
        raise ConfigError(f"model: {exc}") from exc


def _initial(node, atlas: Atlas) -> Optional[ChartPoint]:
    if node is None:
        return None
    try:
        chart = atlas.chart(node["chart"])
    except (KeyError, GeometryError) as exc:
        raise ConfigError(f"initial: unknown or missing chart ({exc})") from exc
    if "coords" in node:
        coords = [float(v) for v in node["coords"]]
        if len(coords) != chart.dim:
            raise ConfigError(f"initial: chart {chart.id!r} needs {chart.dim} coords")
        return ChartPoint(chart.id, tuple(coords))
    values = node.get("values")
    if not isinstance(values, Mapping) or set(values) != set(chart.names):
        raise ConfigError(f"initial: 'values' must name exactly {list(chart.names)}")
    return ChartPoint(chart.id, tuple(float(values[k]) for k in chart.names))


def _grid(node, atlas: Atlas):
    if node is None:
        return None, None, (0.0,)
    chart_id = node.get("chart", atlas.charts[0].id)
    try:
        chart = atlas.chart(chart_id)
    except GeometryError as exc:
        raise ConfigError(f"grid: unknown chart {chart_id!r}") from exc
    n = chart.n
    lo = node.get("lo")
    hi = node.get("hi")
    counts = node.get("counts")

    def widen(v, cast):
        if isinstance(v, list):
            return tuple(cast(x) for x in v)
        return (cast(v),) * n

    try:
        grid = Grid(widen(lo, float), widen(hi, float), widen(counts, int))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from exc
    if len(grid.lo) != n:
        raise ConfigError(f"grid: chart {chart_id!r} has {n} base coordinates")
    times = tuple(float(t) for t in node.get("times", [0.0]))
    return grid, chart_id, times


def parse_config(node: Mapping) -> RunConfig:
    if not isinstance(node, Mapping):
        raise ConfigError("config must be a JSON object")
    atlas = _atlas(node)
    params = node.get("parameters", {})
    if not isinstance(params, Mapping):
        raise ConfigError("'parameters' must be an object")
    params = {str(k): float(v) for k, v in params.items()}
    definitions = node.get("definitions")
    try:
        model = None
        if "homogeneous_hamiltonian" in node:
            if atlas.name != "projective":
                raise ConfigError("'homogeneous_hamiltonian' needs the projective model")
            model = ContactModel.build(atlas, projective_reduction(atlas, node["homogeneous_hamiltonian"]), params, definitions)
        elif "hamiltonian" in node:
            model = ContactModel.build(atlas, node["hamiltonian"], params, definitions)
        section = None
        if "section" in node:
            section = SectionModel.build(atlas, node["section"], params, definitions)
    except (ExprSyntaxError, ModelError, GeometryError, KeyError, TypeError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc
    integ = node.get("integrator", {})
    grid, grid_chart, grid_times = _grid(node.get("grid"), atlas)
    seed = node.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("'seed' must be an integer")
    verify = node.get("verify", {})
    if not isinstance(verify, Mapping):
        raise ConfigError("'verify' must be an object")
    chars = node.get("characteristics")
    if chars is not None and not isinstance(chars, Mapping):
        raise ConfigError("'characteristics' must be an object")
    return RunConfig(
        atlas=atlas,
        model=model,
        section=section,
        parameters=params,
        initial=_initial(node.get("initial"), atlas),
        t0=_number(integ, "t0", 0.0),
        t1=_number(integ, "t1", 1.0),
        h=_number(integ, "h", 0.01),
        grid=grid,
        grid_chart=grid_chart,
        grid_times=grid_times,
        characteristics=dict(chars) if chars is not None else None,
        verify=dict(verify),
        seed=seed,
        raw=dict(node),
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            node = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(node)
