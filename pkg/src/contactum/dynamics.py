"""Fixed-step RK4 integration of contact Hamiltonian fields across charts."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .contact import ContactModel, _hjet, contact_hvf
from .diffcalc import jet1
from .exprparse import Binary, Var
from .geometry import Atlas, Box, Chart, ChartPoint

__all__ = [
    "EscapeError",
    "Trajectory",
    "ExtendedPoint",
    "integrate",
    "decay_check",
    "decay_residuals",
    "autonomize_field",
    "extended_model",
    "ZETA",
]

log = logging.getLogger(__name__)

ZETA = "zeta"


class EscapeError(RuntimeError):
    """The trajectory left every chart domain."""


@dataclass
class Trajectory:
    samples: List[Tuple[float, ChartPoint]] = field(default_factory=list)
    events: List[Tuple[float, str, str]] = field(default_factory=list)
    h: float = 0.0
    method: str = "rk4"
    segments: List[int] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples])

    @property
    def end(self) -> ChartPoint:
        return self.samples[-1][1]

    def __len__(self) -> int:
        return len(self.samples)


def _rk4_step(model: ContactModel, chart: Chart, y: np.ndarray, t: float, dt: float) -> np.ndarray:
    def f(coords, tt):
        if not chart.domain.contains(coords):
            raise EscapeError(f"stage point {tuple(coords)} outside chart {chart.id!r} at t={tt}")
        return contact_hvf(model, ChartPoint(chart.id, coords), tt)

    k1 = f(y, t)
    k2 = f(y + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = f(y + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = f(y + dt * k3, t + dt)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _switch(atlas: Atlas, chart: Chart, y: np.ndarray, params) -> Optional[Tuple[str, np.ndarray]]:
    order = {c.id: i for i, c in enumerate(atlas.charts)}
    best = None
    for tr in atlas.transitions_from(chart.id):
        if not tr.contains(y):
            continue
        image = tr.apply(chart, y, params)
        if not atlas.chart(tr.target).core.contains(image):
            continue
        rank = order[tr.target]
        if best is None or rank < best[0]:
            best = (rank, tr.target, image)
    if best is None:
        return None
    return best[1], best[2]


def integrate(model: ContactModel, start: ChartPoint, t0: float, t1: float, h: float) -> Trajectory:
    """Classical RK4 on ``X^c(., t)`` with switches at step boundaries.

    After each step that leaves the core of the current chart, the point is
    moved through the first transition (by target declaration order) whose
    image lands in the target's core.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    atlas = model.atlas
    chart = atlas.chart(start.chart)
    if not chart.domain.contains(start.coords):
        raise EscapeError(f"start point outside chart {chart.id!r}")
    steps = max(1, int(math.ceil((t1 - t0) / h - 1e-9)))
    y = start.array
    traj = Trajectory(samples=[(float(t0), start)], h=float(h), segments=[0])
    segment = 0
    params = dict(model.parameters)
    t = float(t0)
    for k in range(1, steps + 1):
        t_next = t1 if k == steps else t0 + k * h
        y = _rk4_step(model, chart, y, t, t_next - t)
        t = t_next
        if not np.all(np.isfinite(y)):
            raise EscapeError(f"non-finite state at t={t}")
        if not chart.core.contains(y):
            params["t"] = t
            hop = _switch(atlas, chart, y, params)
            if hop is not None:
                target, y = hop
                log.debug("chart switch %s -> %s at t=%r", chart.id, target, t)
                traj.events.append((t, chart.id, target))
                chart = atlas.chart(target)
                segment += 1
            elif not chart.domain.contains(y):
                raise EscapeError(f"left chart {chart.id!r} at t={t} with no transition available")
        traj.samples.append((t, ChartPoint(chart.id, tuple(y))))
        traj.segments.append(segment)
    return traj


def decay_residuals(model: ContactModel, traj: Trajectory) -> np.ndarray:
    """Per-sample ``|dH/dt + (dH/dz) H - dH/dt_explicit|`` (interior samples).

    ``dH/dt`` along the path is a 3-point difference on the trajectory's own
    samples; stencils that straddle a chart switch are skipped (NaN).
    """
    n = len(traj.samples)
    out = np.full(n, np.nan)
    if n < 3:
        return out
    vals = []
    partials = []
    for t, p in traj.samples:
        chart, v, g, _ = _hjet(model, p, t)
        vals.append(v)
        partials.append(g[0])
    t_idx = _time_partials(model, traj)
    times = traj.times
    for i in range(1, n - 1):
        if not traj.segments[i - 1] == traj.segments[i] == traj.segments[i + 1]:
            continue
        h1 = times[i] - times[i - 1]
        h2 = times[i + 1] - times[i]
        deriv = (
            -h2 / (h1 * (h1 + h2)) * vals[i - 1]
            + (h2 - h1) / (h1 * h2) * vals[i]
            + h1 / (h2 * (h1 + h2)) * vals[i + 1]
        )
        out[i] = abs(deriv + partials[i] * vals[i] - t_idx[i])
    return out


def _time_partials(model: ContactModel, traj: Trajectory) -> np.ndarray:
    out = []
    for t, p in traj.samples:
        v, g = jet1(model.hamiltonians[p.chart], ("t",), model.env(p, t))
        out.append(g[0])
    return np.array(out)


def decay_check(model: ContactModel, traj: Trajectory) -> float:
    """Max of :func:`decay_residuals` over usable samples."""
    res = decay_residuals(model, traj)
    finite = res[np.isfinite(res)]
    return float(finite.max()) if finite.size else 0.0


@dataclass(frozen=True)
class ExtendedPoint:
    base: ChartPoint
    zeta: float
    t: float


def autonomize_field(model: ContactModel, point: ExtendedPoint) -> np.ndarray:
    """Field of the autonomized Hamiltonian ``H_hat + zeta`` on ``M x T*R``.

    Components ``(X^c_{H_t}(base), zeta_dot, 1)`` with
    ``zeta_dot = -dH/dt - zeta * dH/dz``; the second term comes from the
    rescaling of the fiber coordinate and vanishes on ``zeta = 0``.
    """
    base = contact_hvf(model, point.base, point.t)
    chart = model.atlas.chart(point.base.chart)
    env = model.env(point.base, point.t)
    _, g = jet1(model.hamiltonians[chart.id], (chart.z_name, "t"), env)
    zeta_dot = -g[1] - point.zeta * g[0]
    return np.concatenate((base, [zeta_dot, 1.0]))


def extended_model(model: ContactModel) -> ContactModel:
    """The same system as an autonomous model in ``2n + 3`` dimensions.

    Chart roles become ``(z, q.., t, p.., zeta)`` with form
    ``eta - zeta dt`` and Hamiltonian ``H_hat + zeta``. Time is a coordinate
    called ``t`` so the original expressions are reused verbatim.
    """
    charts = []
    hams = {}
    for c in model.atlas.charts:
        n = c.n + 1
        names = (c.z_name,) + c.q_names + ("t",) + c.p_names + (ZETA,)
        inf = math.inf
        lo = c.domain.lo[: c.n + 1] + (-inf,) + c.domain.lo[c.n + 1 :] + (-inf,)
        hi = c.domain.hi[: c.n + 1] + (inf,) + c.domain.hi[c.n + 1 :] + (inf,)
        clo = c.core.lo[: c.n + 1] + (-1e6,) + c.core.lo[c.n + 1 :] + (-1e6,)
        chi = c.core.hi[: c.n + 1] + (1e6,) + c.core.hi[c.n + 1 :] + (1e6,)
        charts.append(
            Chart(c.id, n, names, Box(lo, hi), Box(clo, chi), tuple(c.momentum_signs) + (1.0,), c.margin)
        )
        hams[c.id] = Binary("+", model.hamiltonians[c.id], Var(ZETA))
    atlas = Atlas(model.atlas.name + "-extended", tuple(charts), (), model.atlas.description)
    return ContactModel(atlas, hams, dict(model.parameters))
