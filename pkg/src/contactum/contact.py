"""Contact Hamiltonian vector fields, the Jacobi bracket and Legendre graphs.

All vectors and covectors are expressed in the stored coordinates of a
chart, in role order ``(z, q, p)``. Internally formulas run in Darboux
coordinates ``w = T u`` with ``T = diag(chart.signs)``.

Hamiltonians are chart-local reduced Hamiltonians ``H_hat`` -- one expression
per chart, related on overlaps by the contact-form cocycle. There is no
global Reeb field; :func:`reeb_field` is a per-chart object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .diffcalc import fd_gradient, jet1, jet2
from .exprparse import Expr, as_expr, evaluate, free_variables, substitute
from .geometry import Atlas, Chart, ChartPoint, TransitionMap, transition_jacobian

__all__ = [
    "ContactModel",
    "SectionModel",
    "ModelError",
    "darboux_form",
    "eta_differential",
    "reeb_field",
    "contact_hvf",
    "contact_field_jacobian",
    "jacobi_bracket",
    "bracket_via_fields",
    "jacobi_identity_residual",
    "jet_prolong",
    "tangency_residual",
    "nondegeneracy",
    "pfaffian",
    "volume_coefficient",
    "defining_equation_residuals",
    "cartan_residual",
    "decay_relation_residual",
    "hamiltonian_cocycle_residual",
    "chart_invariance_residual",
    "section_equivariance_residual",
    "projective_reduction",
]

TIME = "t"


class ModelError(ValueError):
    pass


def _per_chart(atlas: Atlas, node, what: str) -> dict:
    if isinstance(node, Mapping):
        out = {cid: as_expr(e) for cid, e in node.items()}
        missing = [c.id for c in atlas.charts if c.id not in out]
        if missing:
            raise ModelError(f"{what} missing for charts {missing}")
        unknown = [cid for cid in out if cid not in {c.id for c in atlas.charts}]
        if unknown:
            raise ModelError(f"{what} given for unknown charts {unknown}")
        return out
    expr = as_expr(node)
    return {c.id: expr for c in atlas.charts}


def _expand(exprs: dict, definitions: Optional[Mapping]) -> dict:
    if not definitions:
        return exprs
    defs = {k: as_expr(v) for k, v in definitions.items()}
    # definitions may refer to each other; substitute to a fixed point
    for _ in range(len(defs) + 1):
        new = {k: substitute(v, defs) for k, v in defs.items()}
        if new == defs:
            break
        defs = new
    if any(free_variables(v) & set(defs) for v in defs.values()):
        raise ModelError("cyclic definitions")
    return {cid: substitute(e, defs) for cid, e in exprs.items()}


@dataclass(frozen=True)
class ContactModel:
    """An atlas plus one reduced Hamiltonian per chart.

    ``hamiltonians[chart]`` may use the chart coordinates, ``t`` and the
    names in ``parameters``.
    """

    atlas: Atlas
    hamiltonians: Mapping[str, Expr]
    parameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for chart in self.atlas.charts:
            if chart.id not in self.hamiltonians:
                raise ModelError(f"no Hamiltonian for chart {chart.id!r}")
            unbound = free_variables(self.hamiltonians[chart.id]) - set(chart.names) - {TIME} - set(self.parameters)
            if unbound:
                raise ModelError(f"chart {chart.id!r}: unbound names {sorted(unbound)}")

    @classmethod
    def build(cls, atlas: Atlas, hamiltonian, parameters=None, definitions=None) -> "ContactModel":
        exprs = _expand(_per_chart(atlas, hamiltonian, "hamiltonian"), definitions)
        return cls(atlas, exprs, dict(parameters or {}))

    def env(self, point: ChartPoint, t: float = 0.0) -> dict:
        env = dict(self.parameters)
        env[TIME] = float(t)
        env.update(self.atlas.chart(point.chart).bind(point.coords))
        return env

    def hamiltonian(self, chart_id: str) -> Expr:
        return self.hamiltonians[chart_id]

    def value(self, point: ChartPoint, t: float = 0.0) -> float:
        return evaluate(self.hamiltonians[point.chart], self.env(point, t))

    def with_hamiltonian(self, hamiltonian) -> "ContactModel":
        return ContactModel(self.atlas, _per_chart(self.atlas, hamiltonian, "hamiltonian"), self.parameters)


def projective_reduction(atlas: Atlas, hamiltonian) -> dict:
    """Per-chart reduced Hamiltonians of a 1-homogeneous ``H(q0.., p0..)``.

    In chart ``U_k`` the fiber coordinate is ``s = -p_k``, so ``H_hat_k`` is
    ``H`` with ``p_k -> -1`` and ``p_j -> -p{k}_j``.
    """
    expr = as_expr(hamiltonian)
    n = atlas.n
    out = {}
    for k in range(n + 1):
        mapping = {f"p{k}": as_expr(-1.0)}
        for j in range(n + 1):
            if j != k:
                mapping[f"p{j}"] = as_expr(f"-p{k}_{j}")
        out[f"U{k}"] = substitute(expr, mapping)
    return out


@dataclass(frozen=True)
class SectionModel:
    """Per-chart generating functions ``S(q, t)`` of Legendre graphs."""

    atlas: Atlas
    sections: Mapping[str, Expr]
    parameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for cid, expr in self.sections.items():
            chart = self.atlas.chart(cid)
            unbound = free_variables(expr) - set(chart.q_names) - {TIME} - set(self.parameters)
            if unbound:
                raise ModelError(f"section on {cid!r}: unbound names {sorted(unbound)}")

    @classmethod
    def build(cls, atlas: Atlas, section, parameters=None, definitions=None) -> "SectionModel":
        if isinstance(section, Mapping):
            exprs = {cid: as_expr(e) for cid, e in section.items()}
        else:
            exprs = {c.id: as_expr(section) for c in atlas.charts}
        return cls(atlas, _expand(exprs, definitions), dict(parameters or {}))

    def is_time_dependent(self, chart_id: str) -> bool:
        return TIME in free_variables(self.sections[chart_id])

    def jet(self, chart: Chart, q, t: float = 0.0):
        """Jet of S w.r.t. ``(q_1..q_n, t)`` at a base point."""
        env = dict(self.parameters)
        env.update(zip(chart.q_names, (float(v) for v in q)))
        env[TIME] = float(t)
        return jet2(self.sections[chart.id], chart.q_names + (TIME,), env)


# ---------------------------------------------------------------------------
# forms and fields


def darboux_form(chart: Chart, coords) -> np.ndarray:
    """``eta = dz - p_i dq^i`` (role-signed) as a covector."""
    return chart.eta(coords)


def eta_differential(chart: Chart, coords) -> np.ndarray:
    """Matrix ``d(eta)(e_i, e_j) = d_i eta_j - d_j eta_i`` via forward jets."""
    env = chart.bind(coords)
    d = np.array([jet1(e, chart.names, env)[1] for e in chart.eta_expressions()])
    # row j holds grad of eta_j, so d[j, i] = d_i eta_j
    return d.T - d


def reeb_field(chart: Chart) -> np.ndarray:
    r = np.zeros(chart.dim)
    r[0] = 1.0
    return r


def _hjet(model: ContactModel, point: ChartPoint, t: float, order: int = 1):
    chart = model.atlas.chart(point.chart)
    env = model.env(point, t)
    expr = model.hamiltonians[point.chart]
    if order == 1:
        v, g = jet1(expr, chart.names, env)
        return chart, v, g, None
    j = jet2(expr, chart.names, env)
    return chart, j.value, j.gradient, j.hessian


def _field(chart: Chart, coords, value: float, grad: np.ndarray) -> np.ndarray:
    n = chart.n
    T = chart.signs
    w = T * np.asarray(coords, dtype=float)
    gw = T * grad
    P = w[n + 1 :]
    Hz, Hq, HP = gw[0], gw[1 : n + 1], gw[n + 1 :]
    xw = np.empty(chart.dim)
    xw[0] = P @ HP - value
    xw[1 : n + 1] = HP
    xw[n + 1 :] = -Hq - P * Hz
    return T * xw


def _field_jacobian(chart: Chart, coords, grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    n = chart.n
    T = chart.signs
    w = T * np.asarray(coords, dtype=float)
    gw = T * grad
    Hw = (T[:, None] * hess) * T[None, :]
    P = w[n + 1 :]
    q = slice(1, n + 1)
    p = slice(n + 1, 2 * n + 1)
    J = np.zeros((chart.dim, chart.dim))
    J[0] = P @ Hw[p] - gw
    J[0, p] += gw[p]
    J[q] = Hw[p]
    J[p] = -Hw[q] - np.outer(P, Hw[0])
    J[p, p] -= np.eye(n) * gw[0]
    return (T[:, None] * J) * T[None, :]


def contact_hvf(model: ContactModel, point: ChartPoint, t: float = 0.0) -> np.ndarray:
    """Contact Hamiltonian vector field of the chart's reduced Hamiltonian.

    In Darboux coordinates: ``qdot = dH/dp``, ``pdot = -dH/dq - p dH/dz``,
    ``zdot = p dH/dp - H``.
    """
    chart, v, g, _ = _hjet(model, point, t)
    return _field(chart, point.coords, v, g)


def contact_field_jacobian(model: ContactModel, point: ChartPoint, t: float = 0.0) -> np.ndarray:
    """``d X^c / d coords`` assembled from the Hessian of the Hamiltonian."""
    chart, _, g, h = _hjet(model, point, t, order=2)
    return _field_jacobian(chart, point.coords, g, h)


def _fn_jet(chart: Chart, expr: Expr, coords, t: float, params, order: int):
    env = dict(params or {})
    env[TIME] = float(t)
    env.update(chart.bind(coords))
    if order == 1:
        v, g = jet1(expr, chart.names, env)
        return v, g, None
    j = jet2(expr, chart.names, env)
    return j.value, j.gradient, j.hessian


def _pick(fn, chart_id: str) -> Expr:
    if isinstance(fn, Mapping):
        return as_expr(fn[chart_id])
    return as_expr(fn)


def bracket_from_jets(chart: Chart, coords, F: tuple, H: tuple) -> float:
    """Jacobi bracket from ``(value, gradient)`` pairs in stored coordinates."""
    n = chart.n
    T = chart.signs
    P = (T * np.asarray(coords, dtype=float))[n + 1 :]
    fv, fg = F[0], T * np.asarray(F[1])
    hv, hg = H[0], T * np.asarray(H[1])
    q = slice(1, n + 1)
    p = slice(n + 1, 2 * n + 1)
    return float(
        fg[q] @ hg[p]
        - fg[p] @ hg[q]
        + (fv - P @ fg[p]) * hg[0]
        - (hv - P @ hg[p]) * fg[0]
    )


def jacobi_bracket(atlas: Atlas, F, H, point: ChartPoint, t: float = 0.0, params=None) -> float:
    """Contact Jacobi bracket ``{F, H}`` of two reduced functions.

    ``F_q H_p - F_p H_q + (F - p F_p) H_z - (H - p H_p) F_z``.
    """
    chart = atlas.chart(point.chart)
    fj = _fn_jet(chart, _pick(F, chart.id), point.coords, t, params, 1)
    hj = _fn_jet(chart, _pick(H, chart.id), point.coords, t, params, 1)
    return bracket_from_jets(chart, point.coords, fj[:2], hj[:2])


def bracket_via_fields(atlas: Atlas, F, H, point: ChartPoint, t: float = 0.0, params=None) -> float:
    """``eta([X_F, X_H])`` with the Lie bracket built from field Jacobians."""
    chart = atlas.chart(point.chart)
    fv, fg, fh = _fn_jet(chart, _pick(F, chart.id), point.coords, t, params, 2)
    hv, hg, hh = _fn_jet(chart, _pick(H, chart.id), point.coords, t, params, 2)
    xf = _field(chart, point.coords, fv, fg)
    xh = _field(chart, point.coords, hv, hg)
    jf = _field_jacobian(chart, point.coords, fg, fh)
    jh = _field_jacobian(chart, point.coords, hg, hh)
    lie = jh @ xf - jf @ xh
    return float(chart.eta(point.coords) @ lie)


def _bracket_with_fd(atlas: Atlas, F, inner, point: ChartPoint, t: float, params, h: float) -> float:
    # {F, K} where K = inner(coords) is only available pointwise
    chart = atlas.chart(point.chart)
    x = np.asarray(point.coords, dtype=float)
    kv = inner(x)
    kg = fd_gradient(lambda y: np.array([inner(y)]), x, h)[0]
    fj = _fn_jet(chart, _pick(F, chart.id), point.coords, t, params, 1)
    return bracket_from_jets(chart, point.coords, fj[:2], (kv, kg))


def jacobi_identity_residual(atlas: Atlas, F, G, H, point: ChartPoint, t: float = 0.0, params=None, h: float = 1e-5) -> float:
    """Cyclic sum ``{F,{G,H}} + {G,{H,F}} + {H,{F,G}}``; inner brackets differentiated by central differences."""
    cid = point.chart

    def inner(A, B):
        return lambda y: jacobi_bracket(atlas, A, B, ChartPoint(cid, tuple(y)), t, params)

    return (
        _bracket_with_fd(atlas, F, inner(G, H), point, t, params, h)
        + _bracket_with_fd(atlas, G, inner(H, F), point, t, params, h)
        + _bracket_with_fd(atlas, H, inner(F, G), point, t, params, h)
    )


# ---------------------------------------------------------------------------
# Legendre graphs


def jet_prolong(section: SectionModel, chart: Chart, q, t: float = 0.0) -> ChartPoint:
    """``j^1 S(q) = (S(q), q, dS/dq)`` (momenta role-signed)."""
    j = section.jet(chart, q, t)
    n = chart.n
    moms = np.asarray(chart.momentum_signs) * j.gradient[:n]
    coords = (j.value,) + tuple(float(v) for v in q) + tuple(moms)
    return ChartPoint(chart.id, coords)


def tangency_residual(model: ContactModel, section: SectionModel, chart: Chart, q, t: float = 0.0) -> float:
    """Sup-norm defect of ``X^c`` from the tangent space of the graph of ``j^1 S``.

    The graph tangent along the base direction ``v = X^c_q`` is
    ``(S_q v, v, S_qq v)``; for time-dependent sections the time derivative
    of the moving graph, ``(S_t, 0, S_qt)``, is added.
    """
    n = chart.n
    j = section.jet(chart, q, t)
    point = jet_prolong(section, chart, q, t)
    x = contact_hvf(model, point, t)
    v = x[1 : n + 1]
    sig = np.asarray(chart.momentum_signs)
    grad = j.gradient[:n]
    hess = j.hessian[:n, :n]
    tangent = np.concatenate(([grad @ v], v, sig * (hess @ v)))
    tangent[0] += j.gradient[n]
    tangent[n + 1 :] += sig * j.hessian[:n, n]
    return float(np.max(np.abs(x - tangent)))


def section_equivariance_residual(section: SectionModel, tr: TransitionMap, q, t: float = 0.0) -> Optional[float]:
    """Defect of ``F(j^1 S_source(q)) = j^1 S_target(q')``; None outside the overlap."""
    atlas = section.atlas
    src = atlas.chart(tr.source)
    tgt = atlas.chart(tr.target)
    start = jet_prolong(section, src, q, t)
    if not tr.contains(start.coords):
        return None
    image = tr.apply(src, start.coords, section.parameters)
    again = jet_prolong(section, tgt, image[1 : tgt.n + 1], t)
    return float(np.max(np.abs(np.asarray(again.coords) - image)))


# ---------------------------------------------------------------------------
# volume form


def pfaffian(a: np.ndarray) -> float:
    """Pfaffian of a small antisymmetric matrix (expansion along row 0)."""
    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    if m == 0:
        return 1.0
    if m % 2:
        return 0.0
    total = 0.0
    rest = list(range(1, m))
    for idx, j in enumerate(rest):
        if a[0, j] == 0.0:
            continue
        keep = [k for k in rest if k != j]
        sub = a[np.ix_(keep, keep)]
        sign = -1.0 if idx % 2 else 1.0
        total += sign * a[0, j] * pfaffian(sub)
    return total


def _volume_from(alpha: np.ndarray, dalpha: np.ndarray, n: int) -> float:
    # (e0 ^ alpha + d alpha)^(n+1) = (n+1) e0 ^ alpha ^ (d alpha)^n  and
    # top power / (n+1)! = Pf(.) vol, hence alpha ^ (d alpha)^n = n! Pf(.)
    dim = len(alpha)
    m = np.zeros((dim + 1, dim + 1))
    m[0, 1:] = alpha
    m[1:, 0] = -alpha
    m[1:, 1:] = dalpha
    return math.factorial(n) * pfaffian(m)


def nondegeneracy(chart: Chart, coords) -> float:
    """Coefficient of ``eta ^ (d eta)^n`` on ``dz ^ dq ^ ... ^ dp``."""
    return _volume_from(chart.eta(coords), eta_differential(chart, coords), chart.n)


def volume_coefficient(form, coords, n: int, h: float = 1e-5) -> float:
    """Same coefficient for an arbitrary covector field ``form(coords)``; d by central differences."""
    coords = np.asarray(coords, dtype=float)
    d = fd_gradient(form, coords, h)  # d[j, i] = d_i form_j
    return _volume_from(np.asarray(form(coords)), d.T - d, n)


# ---------------------------------------------------------------------------
# identity residuals


def defining_equation_residuals(model: ContactModel, point: ChartPoint, t: float = 0.0):
    """``(i_X eta + H, i_X d eta - dH + (dH/dz) eta)``."""
    chart, v, g, _ = _hjet(model, point, t)
    x = _field(chart, point.coords, v, g)
    eta = chart.eta(point.coords)
    deta = eta_differential(chart, point.coords)
    first = eta @ x + v
    second = x @ deta - g + g[0] * eta
    return first, second


def cartan_residual(model: ContactModel, point: ChartPoint, t: float = 0.0) -> np.ndarray:
    """``d(i_X eta) + i_X d eta + (dH/dz) eta`` as a covector."""
    chart, v, g, h = _hjet(model, point, t, order=2)
    x = _field(chart, point.coords, v, g)
    jx = _field_jacobian(chart, point.coords, g, h)
    eta = chart.eta(point.coords)
    env = chart.bind(point.coords)
    deta_rows = np.array([jet1(e, chart.names, env)[1] for e in chart.eta_expressions()])
    d_contract = deta_rows.T @ x + jx.T @ eta
    deta = deta_rows.T - deta_rows
    return d_contract + x @ deta + g[0] * eta


def decay_relation_residual(model: ContactModel, point: ChartPoint, t: float = 0.0) -> float:
    """``X^c(H) + (dH/dz) H``."""
    chart, v, g, _ = _hjet(model, point, t)
    x = _field(chart, point.coords, v, g)
    return float(g @ x + g[0] * v)


def hamiltonian_cocycle_residual(model: ContactModel, tr: TransitionMap, coords, t: float = 0.0) -> float:
    """``|H_target(F x) - c(x) H_source(x)|``."""
    atlas = model.atlas
    src = atlas.chart(tr.source)
    params = dict(model.parameters, t=float(t))
    image = tr.apply(src, coords, params)
    h_src = model.value(ChartPoint(tr.source, coords), t)
    h_tgt = model.value(ChartPoint(tr.target, image), t)
    return abs(h_tgt - tr.factor(src, coords, params) * h_src)


def chart_invariance_residual(model: ContactModel, tr: TransitionMap, coords, t: float = 0.0) -> float:
    """``|DF X^c_source - X^c_target(F x)|_inf`` on an overlap point."""
    atlas = model.atlas
    src = atlas.chart(tr.source)
    params = dict(model.parameters, t=float(t))
    image = tr.apply(src, coords, params)
    jac = transition_jacobian(atlas, tr, coords, params)
    pushed = jac @ contact_hvf(model, ChartPoint(tr.source, coords), t)
    there = contact_hvf(model, ChartPoint(tr.target, image), t)
    return float(np.max(np.abs(pushed - there)))
