"""Symplectic cover ``P = R^x x M`` of a chart and its homogeneous dynamics.

Coordinates on the cover are ``(s, chart coords)`` with ``s != 0``. The
symplectic form is ``omega = ds ^ eta + s d eta`` and Hamiltonian fields
solve ``i_X omega = dH`` by a dense linear solve. The closed-form contact
equations in :mod:`contactum.contact` are never used here, so comparing the
two is a genuine check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contact import ContactModel, _fn_jet, _pick, contact_hvf, eta_differential
from .diffcalc import jet1
from .exprparse import Binary, Expr, Var, as_expr
from .geometry import Atlas, ChartPoint

__all__ = [
    "SymplecticError",
    "CoverPoint",
    "S_MIN",
    "omega",
    "homogeneous_hamiltonian",
    "hamiltonian_field",
    "symplectic_hvf",
    "projection_check",
    "poisson_bracket",
    "evolution_diagnostic",
    "omega_homogeneity_residual",
    "omega_exactness_residual",
    "weight_zero_residual",
    "scale",
]

S_MIN = 1e-8
FIBER = "s"


class SymplecticError(ValueError):
    pass


@dataclass(frozen=True)
class CoverPoint:
    s: float
    base: ChartPoint

    def __post_init__(self):
        if not abs(self.s) >= S_MIN:
            raise SymplecticError(f"|s| must be >= {S_MIN}, got {self.s!r}")

    @property
    def array(self) -> np.ndarray:
        return np.concatenate(([self.s], self.base.array))


def scale(point: CoverPoint, lam: float) -> CoverPoint:
    """Principal action ``h_lambda(s, y) = (lambda s, y)``."""
    return CoverPoint(lam * point.s, point.base)


def omega(atlas: Atlas, point: CoverPoint) -> np.ndarray:
    """Matrix ``W[i, j] = omega(e_i, e_j)`` in coordinates ``(s, chart coords)``."""
    chart = atlas.chart(point.base.chart)
    eta = chart.eta(point.base.coords)
    deta = eta_differential(chart, point.base.coords)
    dim = chart.dim + 1
    w = np.zeros((dim, dim))
    w[0, 1:] = eta
    w[1:, 0] = -eta
    w[1:, 1:] = point.s * deta
    return w


def _solve(w: np.ndarray, dh: np.ndarray) -> np.ndarray:
    # i_X omega = dH  <=>  sum_i X_i W[i, j] = dH_j
    try:
        x = np.linalg.solve(w.T, dh)
    except np.linalg.LinAlgError as exc:
        raise SymplecticError("omega is singular (s = 0?)") from exc
    return x


def homogeneous_hamiltonian(model: ContactModel, point: CoverPoint, t: float = 0.0) -> float:
    return point.s * model.value(point.base, t)


def _homogeneous_differential(atlas: Atlas, expr: Expr, point: CoverPoint, t: float, params) -> np.ndarray:
    chart = atlas.chart(point.base.chart)
    v, g, _ = _fn_jet(chart, expr, point.base.coords, t, params, 1)
    return np.concatenate(([v], point.s * g))


def hamiltonian_field(atlas: Atlas, reduced, point: CoverPoint, t: float = 0.0, params=None) -> np.ndarray:
    """Hamiltonian field of ``H = s * reduced`` on the cover (linear solve)."""
    expr = _pick(reduced, point.base.chart)
    dh = _homogeneous_differential(atlas, expr, point, t, params)
    return _solve(omega(atlas, point), dh)


def symplectic_hvf(model: ContactModel, point: CoverPoint, t: float = 0.0) -> np.ndarray:
    """``X_H`` of the 1-homogeneous lift ``H = s * H_hat``, size ``2n + 2``."""
    return hamiltonian_field(model.atlas, model.hamiltonians, point, t, model.parameters)


def projection_check(model: ContactModel, point: CoverPoint, t: float = 0.0) -> float:
    """Sup-norm gap between the projected cover field and the contact field."""
    x = symplectic_hvf(model, point, t)
    return float(np.max(np.abs(x[1:] - contact_hvf(model, point.base, t))))


def poisson_bracket(atlas: Atlas, F, G, point: CoverPoint, t: float = 0.0, params=None) -> float:
    """``{s F, s G}_omega = omega(X_sF, X_sG)``."""
    w = omega(atlas, point)
    xf = hamiltonian_field(atlas, F, point, t, params)
    xg = hamiltonian_field(atlas, G, point, t, params)
    return float(xf @ w @ xg)


def evolution_diagnostic(model: ContactModel, rescale, point: ChartPoint, t: float = 0.0, s: float = 1.0):
    """Compare ``H_hat R`` before and after the trivialization change ``s' = g s``.

    Both vectors live on the cover at ``(s, point)``. ``R`` and ``R'`` are the
    Hamiltonian fields of ``-s`` and ``-s' = -g s``; ``H_hat' = H_hat / g``.
    Agreement for all ``g`` would make the evolution field geometric; it only
    happens for constant ``g``.
    """
    atlas = model.atlas
    chart = atlas.chart(point.chart)
    g_expr = _pick(rescale, point.chart)
    cover = CoverPoint(s, point)
    w = omega(atlas, cover)
    env_params = dict(model.parameters)
    gv, gg, _ = _fn_jet(chart, g_expr, point.coords, t, env_params, 1)
    if gv == 0.0:
        raise SymplecticError("rescaling function vanishes at the point")
    d_minus_s = np.zeros(chart.dim + 1)
    d_minus_s[0] = -1.0
    reeb = _solve(w, d_minus_s)
    d_minus_gs = -np.concatenate(([gv], s * gg))
    reeb_new = _solve(w, d_minus_gs)
    h = model.value(point, t)
    return h * reeb, (h / gv) * reeb_new


# ---------------------------------------------------------------------------
# identity residuals


def omega_homogeneity_residual(atlas: Atlas, point: CoverPoint, lam: float) -> float:
    """``|h_lambda^* omega - lambda omega|`` at ``point``."""
    dh = np.eye(atlas.chart(point.base.chart).dim + 1)
    dh[0, 0] = lam
    pulled = dh.T @ omega(atlas, scale(point, lam)) @ dh
    return float(np.max(np.abs(pulled - lam * omega(atlas, point))))


def omega_exactness_residual(atlas: Atlas, point: CoverPoint) -> float:
    """``|omega - d(i_{s d_s} omega)|`` with the 1-form differentiated by forward jets."""
    chart = atlas.chart(point.base.chart)
    names = (FIBER,) + chart.names
    env = chart.bind(point.base.coords)
    env[FIBER] = point.s
    # i_{s d_s} omega = s * eta, component-wise in (s, chart coords)
    theta = [as_expr(0.0)] + [Binary("*", Var(FIBER), e) for e in chart.eta_expressions()]
    rows = np.array([jet1(e, names, env)[1] for e in theta])
    d_theta = rows.T - rows
    return float(np.max(np.abs(d_theta - omega(atlas, point))))


def weight_zero_residual(model: ContactModel, point: CoverPoint, lam: float, t: float = 0.0) -> float:
    """``|(h_lambda)_* X_H(s, y) - X_H(lambda s, y)|``."""
    x = symplectic_hvf(model, point, t)
    pushed = x.copy()
    pushed[0] *= lam
    there = symplectic_hvf(model, scale(point, lam), t)
    return float(np.max(np.abs(pushed - there)))
