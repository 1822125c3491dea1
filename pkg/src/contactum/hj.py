"""Contact Hamilton-Jacobi residuals, tangency reports and characteristics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .contact import ContactModel, SectionModel, jet_prolong, tangency_residual
from .dynamics import Trajectory, integrate
from .geometry import Chart

__all__ = [
    "HJReport",
    "Grid",
    "hj_residual",
    "hj_verify",
    "hj_characteristics",
    "characteristic_table",
]


@dataclass(frozen=True)
class Grid:
    """Uniform per-axis grid over the base ``q`` coordinates, endpoints inclusive."""

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    counts: Tuple[int, ...]

    def __post_init__(self):
        if not len(self.lo) == len(self.hi) == len(self.counts):
            raise ValueError("grid lo/hi/counts must have equal length")
        if any(c < 1 for c in self.counts):
            raise ValueError("grid counts must be >= 1")

    @classmethod
    def uniform(cls, lo: float, hi: float, count: int, n: int) -> "Grid":
        return cls((float(lo),) * n, (float(hi),) * n, (int(count),) * n)

    def axes(self) -> List[np.ndarray]:
        out = []
        for a, b, c in zip(self.lo, self.hi, self.counts):
            out.append(np.array([a]) if c == 1 else np.linspace(a, b, c))
        return out

    def points(self):
        """Grid points in row-major order (last axis fastest)."""
        return [tuple(float(v) for v in p) for p in itertools.product(*self.axes())]

    def describe(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "counts": list(self.counts)}


@dataclass
class HJReport:
    grid: dict
    chart: str
    times: List[float]
    max_residual: float
    argmax: dict
    max_tangency: float
    table: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "chart": self.chart,
            "times": list(self.times),
            "max_residual": self.max_residual,
            "argmax": self.argmax,
            "max_tangency": self.max_tangency,
            "table": self.table,
        }


def hj_residual(model: ContactModel, section: SectionModel, chart: Chart, q, t: float = 0.0) -> float:
    """``H_hat(j^1 S_t(q), t) + dS/dt(q, t)``; the time term is 0 for static sections."""
    point = jet_prolong(section, chart, q, t)
    value = model.value(point, t)
    if not section.is_time_dependent(chart.id):
        return value
    return value + float(section.jet(chart, q, t).gradient[chart.n])


def hj_verify(
    model: ContactModel,
    section: SectionModel,
    chart_id: str,
    grid: Grid,
    times: Sequence[float] = (0.0,),
) -> HJReport:
    """Residual and tangency tables over ``grid x times``."""
    chart = model.atlas.chart(chart_id)
    if len(grid.lo) != chart.n:
        raise ValueError(f"grid has {len(grid.lo)} axes, chart {chart_id!r} has n={chart.n}")
    table = []
    worst = -1.0
    argmax = {}
    worst_tan = 0.0
    for t in times:
        for q in grid.points():
            r = hj_residual(model, section, chart, q, t)
            tan = tangency_residual(model, section, chart, q, t)
            table.append({"q": list(q), "t": float(t), "residual": r, "tangency": tan})
            if abs(r) > worst:
                worst = abs(r)
                argmax = {"q": list(q), "t": float(t), "residual": r}
            worst_tan = max(worst_tan, tan)
    return HJReport(grid.describe(), chart_id, [float(t) for t in times], max(worst, 0.0), argmax, worst_tan, table)


def hj_characteristics(
    model: ContactModel,
    section: SectionModel,
    chart_id: str,
    q0_grid: Sequence,
    t0: float,
    t1: float,
    h: float,
) -> List[Trajectory]:
    """Integrate the contact field from ``j^1 S_{t0}(q0)`` for each launch point.

    Crossing characteristics are not detected.
    """
    chart = model.atlas.chart(chart_id)
    out = []
    for q0 in q0_grid:
        start = jet_prolong(section, chart, q0, t0)
        out.append(integrate(model, start, t0, t1, h))
    return out


def characteristic_table(trajectories: Sequence[Trajectory]) -> List[tuple]:
    """Rows ``(launch index, t, chart, coords...)`` for a sampled graph."""
    rows = []
    for k, tr in enumerate(trajectories):
        for t, p in tr.samples:
            rows.append((k, t, p.chart) + tuple(p.coords))
    return rows
