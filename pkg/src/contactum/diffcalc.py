"""Forward-mode first/second derivatives of expression trees.

Each node carries a truncated Taylor jet (value, gradient, Hessian) over an
ordered list of active variables. Subtrees that do not depend on any active
variable are folded to plain floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .exprparse import (
    Const,
    DomainError,
    Expr,
    Unary,
    UnboundVariableError,
    Var,
    apply_binary,
    apply_unary,
    evaluate,
    real_power,
)

__all__ = ["Jet2Value", "jet2", "jet1", "fd_check", "fd_gradient"]


@dataclass(frozen=True)
class Jet2Value:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    variables: tuple = ()

    def __post_init__(self):
        k = len(self.gradient)
        if self.hessian.shape != (k, k):
            raise ValueError("gradient/hessian dimension mismatch")


class _Jet:
    __slots__ = ("v", "g", "h")

    def __init__(self, v, g, h):
        self.v = v
        self.g = g
        self.h = h


def _chain(u: _Jet, f0: float, f1: float, f2: float) -> _Jet:
    """Compose a scalar function with derivatives (f0, f1, f2) onto jet u."""
    g = f1 * u.g
    h = None
    if u.h is not None:
        h = f1 * u.h + f2 * np.outer(u.g, u.g)
    return _Jet(f0, g, h)


def _unary_derivs(op: str, x: float):
    if op == "sin":
        s, c = math.sin(x), math.cos(x)
        return s, c, -s
    if op == "cos":
        s, c = math.sin(x), math.cos(x)
        return c, -s, -c
    if op == "exp":
        e = apply_unary("exp", x)
        return e, e, e
    if op == "ln":
        if x <= 0.0:
            raise DomainError(f"ln of non-positive value {x!r}")
        return math.log(x), 1.0 / x, -1.0 / (x * x)
    if op == "sqrt":
        if x <= 0.0:
            raise DomainError(f"sqrt not differentiable at {x!r}")
        r = math.sqrt(x)
        return r, 0.5 / r, -0.25 / (r * x)
    if op == "abs":
        if x == 0.0:
            raise DomainError("abs not differentiable at 0")
        return abs(x), math.copysign(1.0, x), 0.0
    raise ValueError(f"unknown unary operator {op!r}")


def _power_const_exponent(u: _Jet, k: float) -> _Jet:
    a = u.v
    if k == 0.0:
        return _Jet(1.0, 0.0 * u.g, None if u.h is None else 0.0 * u.h)
    integer = float(k).is_integer()
    if a == 0.0 and not integer:
        need = 1.0 if u.h is None else 2.0
        if k < need:
            raise DomainError(f"{k!r}-th power not differentiable at 0")
    f0 = real_power(a, k)
    f1 = k * real_power(a, k - 1.0) if (a != 0.0 or k >= 1.0) else 0.0
    if k == 1.0:
        f2 = 0.0
    elif a != 0.0 or k >= 2.0:
        f2 = k * (k - 1.0) * real_power(a, k - 2.0)
    else:
        f2 = 0.0
    return _chain(u, f0, f1, f2)


def _add(a, b, sign=1.0):
    if not isinstance(a, _Jet):
        if sign > 0:
            return _Jet(a + b.v, b.g, b.h)
        return _Jet(a - b.v, -b.g, None if b.h is None else -b.h)
    if not isinstance(b, _Jet):
        return _Jet(a.v + sign * b, a.g, a.h)
    h = None
    if a.h is not None:
        h = a.h + b.h if sign > 0 else a.h - b.h
    return _Jet(a.v + sign * b.v, a.g + sign * b.g, h)


def _mul(a, b):
    if not isinstance(a, _Jet):
        return _Jet(a * b.v, a * b.g, None if b.h is None else a * b.h)
    if not isinstance(b, _Jet):
        return _Jet(a.v * b, a.g * b, None if a.h is None else a.h * b)
    h = None
    if a.h is not None:
        cross = np.outer(a.g, b.g)
        h = a.v * b.h + b.v * a.h + cross + cross.T
    return _Jet(a.v * b.v, a.v * b.g + b.v * a.g, h)


def _reciprocal(b: _Jet) -> _Jet:
    if b.v == 0.0:
        raise DomainError("division by zero")
    r = 1.0 / b.v
    return _chain(b, r, -r * r, 2.0 * r * r * r)


def _walk(expr: Expr, index: Mapping[str, int], env: Mapping[str, float], k: int, order: int):
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        i = index.get(expr.name)
        if expr.name not in env:
            raise UnboundVariableError(expr.name)
        if i is None:
            return float(env[expr.name])
        g = np.zeros(k)
        g[i] = 1.0
        return _Jet(float(env[expr.name]), g, np.zeros((k, k)) if order == 2 else None)
    if isinstance(expr, Unary):
        u = _walk(expr.arg, index, env, k, order)
        if not isinstance(u, _Jet):
            return apply_unary(expr.op, u)
        if expr.op == "neg":
            return _Jet(-u.v, -u.g, None if u.h is None else -u.h)
        return _chain(u, *_unary_derivs(expr.op, u.v))
    a = _walk(expr.left, index, env, k, order)
    b = _walk(expr.right, index, env, k, order)
    op = expr.op
    if not isinstance(a, _Jet) and not isinstance(b, _Jet):
        out = apply_binary(op, a, b)
        if not math.isfinite(out):
            raise DomainError(f"non-finite result in {op!r}")
        return out
    if op == "+":
        return _add(a, b)
    if op == "-":
        return _add(a, b, -1.0)
    if op == "*":
        return _mul(a, b)
    if op == "/":
        if not isinstance(b, _Jet):
            if b == 0.0:
                raise DomainError("division by zero")
            return _mul(a, 1.0 / b)
        return _mul(a, _reciprocal(b))
    if op == "^":
        if not isinstance(b, _Jet):
            return _power_const_exponent(a, b)
        # variable exponent: a^b = exp(b ln a)
        base = a if isinstance(a, _Jet) else _Jet(a, 0.0 * b.g, None if b.h is None else 0.0 * b.h)
        if base.v <= 0.0:
            raise DomainError(f"variable exponent needs positive base, got {base.v!r}")
        log_a = _chain(base, *_unary_derivs("ln", base.v))
        e = _mul(b, log_a)
        return _chain(e, *_unary_derivs("exp", e.v))
    raise ValueError(f"unknown binary operator {op!r}")


def _run(expr, variables, point, order):
    variables = tuple(variables)
    index = {name: i for i, name in enumerate(variables)}
    if len(index) != len(variables):
        raise ValueError("duplicate variable in derivative list")
    for name in variables:
        if name not in point:
            raise UnboundVariableError(name)
    k = len(variables)
    out = _walk(expr, index, point, k, order)
    if not isinstance(out, _Jet):
        return float(out), np.zeros(k), np.zeros((k, k))
    h = out.h
    if not math.isfinite(out.v) or not np.all(np.isfinite(out.g)):
        raise DomainError("non-finite derivative")
    return float(out.v), out.g, h


def jet2(expr: Expr, variables: Sequence[str], point: Mapping[str, float]) -> Jet2Value:
    """Value, gradient and Hessian of ``expr`` w.r.t. ``variables`` at ``point``.

    Bound names not listed in ``variables`` act as constants.
    """
    v, g, h = _run(expr, variables, point, 2)
    if h is None:
        h = np.zeros((len(g), len(g)))
    h = 0.5 * (h + h.T)
    return Jet2Value(v, np.asarray(g, dtype=float), h, tuple(variables))


def jet1(expr: Expr, variables: Sequence[str], point: Mapping[str, float]):
    """Value and gradient only; cheaper than :func:`jet2`."""
    v, g, _ = _run(expr, variables, point, 1)
    return v, np.asarray(g, dtype=float)


def fd_gradient(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient (or Jacobian, for vector-valued ``fn``)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def fd_check(expr: Expr, variables: Sequence[str], point: Mapping[str, float], h: float = 1e-5) -> float:
    """Max abs deviation of the jet from central differences.

    Gradient is compared with differences of the value, Hessian with
    differences of the jet gradient (keeps rounding at O(eps/h)).
    """
    variables = tuple(variables)
    base = dict(point)
    jet = jet2(expr, variables, base)
    x0 = np.array([base[v] for v in variables], dtype=float)

    def bind(x):
        env = dict(base)
        env.update(zip(variables, x))
        return env

    grad_fd = fd_gradient(lambda x: evaluate(expr, bind(x)), x0, h)
    hess_fd = fd_gradient(lambda x: jet1(expr, variables, bind(x))[1], x0, h)
    dev = 0.0
    if len(variables):
        dev = max(float(np.max(np.abs(grad_fd - jet.gradient))), float(np.max(np.abs(hess_fd - jet.hessian))))
    return dev
