"""Darboux-chart atlases with scalar contact-form cocycles.

Every chart stores its coordinates in role order ``(z, q_1..q_n, p_1..p_n)``.
The local contact form is ``eta = dz - sum_i sigma_i * p_i dq^i`` where
``sigma_i = +1`` for an ordinary Darboux chart; ``sigma_i = -1`` lets a chart
keep natural coordinates whose momentum is the negative of the Darboux one
(used by the projective model). A transition ``alpha -> beta`` carries the
forward coordinate map and the factor ``c`` with ``eta_beta = c * eta_alpha``
(pulled back to the source chart).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .diffcalc import jet1
from .exprparse import Binary, Const, Expr, Var, as_expr, evaluate, serialize
from .rng import LCG

__all__ = [
    "GeometryError",
    "Box",
    "Chart",
    "ChartPoint",
    "TransitionMap",
    "Atlas",
    "builtin_trivial_jet",
    "builtin_mobius",
    "builtin_projective",
    "builtin",
    "BUILTIN_MODELS",
    "transit",
    "cocycle_at",
    "sample_in",
    "sample_overlap",
    "transition_jacobian",
    "cocycle_equation_residual",
    "round_trip_residual",
    "triple_cocycle_residual",
    "check_atlas",
]

DEFAULT_MARGIN = 0.1


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    """Product of open intervals; ``inf`` bounds allowed."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise GeometryError("box bounds of different lengths")
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise GeometryError(f"empty box {self.lo} .. {self.hi}")

    @classmethod
    def full(cls, dim: int) -> "Box":
        return cls((-math.inf,) * dim, (math.inf,) * dim)

    def contains(self, x) -> bool:
        return all(a < v < b for a, v, b in zip(self.lo, x, self.hi))

    def intersect(self, other: "Box") -> Optional["Box"]:
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(a >= b for a, b in zip(lo, hi)):
            return None
        return Box(lo, hi)

    def volume(self) -> float:
        return float(np.prod([b - a for a, b in zip(self.lo, self.hi)]))

    def is_bounded(self) -> bool:
        return all(math.isfinite(v) for v in self.lo + self.hi)


@dataclass(frozen=True)
class Chart:
    id: str
    n: int
    names: tuple  # (z, q_1..q_n, p_1..p_n)
    domain: Box
    core: Box
    momentum_signs: tuple = ()
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        if self.n < 1:
            raise GeometryError("chart needs n >= 1")
        dim = 2 * self.n + 1
        if not self.momentum_signs:
            object.__setattr__(self, "momentum_signs", (1.0,) * self.n)
        if len(self.names) != dim or len(set(self.names)) != dim:
            raise GeometryError(f"chart {self.id!r}: need {dim} distinct coordinate names")
        if len(self.momentum_signs) != self.n or any(s not in (1.0, -1.0) for s in self.momentum_signs):
            raise GeometryError(f"chart {self.id!r}: momentum signs must be +-1")
        if len(self.domain.lo) != dim or len(self.core.lo) != dim:
            raise GeometryError(f"chart {self.id!r}: box dimension mismatch")
        if not self.core.is_bounded():
            raise GeometryError(f"chart {self.id!r}: core box must be bounded")
        for i in range(dim):
            dlo, dhi = self.domain.lo[i], self.domain.hi[i]
            clo, chi = self.core.lo[i], self.core.hi[i]
            if math.isfinite(dlo) and clo < dlo + self.margin - 1e-12:
                raise GeometryError(f"chart {self.id!r}: core violates margin at {self.names[i]}")
            if math.isfinite(dhi) and chi > dhi - self.margin + 1e-12:
                raise GeometryError(f"chart {self.id!r}: core violates margin at {self.names[i]}")

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def z_name(self) -> str:
        return self.names[0]

    @property
    def q_names(self) -> tuple:
        return self.names[1 : self.n + 1]

    @property
    def p_names(self) -> tuple:
        return self.names[self.n + 1 :]

    @property
    def signs(self) -> np.ndarray:
        """Diagonal of the map from stored to Darboux coordinates."""
        return np.concatenate(([1.0], np.ones(self.n), np.asarray(self.momentum_signs, dtype=float)))

    def eta(self, coords) -> np.ndarray:
        """Components of the local contact form at ``coords``."""
        coords = np.asarray(coords, dtype=float)
        out = np.zeros(self.dim)
        out[0] = 1.0
        sig = np.asarray(self.momentum_signs, dtype=float)
        out[1 : self.n + 1] = -sig * coords[self.n + 1 :]
        return out

    def eta_expressions(self) -> tuple:
        comps = [Const(1.0)]
        for sig, pname in zip(self.momentum_signs, self.p_names):
            comps.append(Binary("*", Const(-float(sig)), Var(pname)))
        comps.extend(Const(0.0) for _ in range(self.n))
        return tuple(comps)

    def bind(self, coords) -> dict:
        return dict(zip(self.names, (float(c) for c in coords)))

    def describe(self) -> dict:
        return {
            "id": self.id,
            "n": self.n,
            "roles": {"z": self.z_name, "q": list(self.q_names), "p": list(self.p_names)},
            "momentum_signs": list(self.momentum_signs),
            "domain": {"lo": list(self.domain.lo), "hi": list(self.domain.hi)},
            "core": {"lo": list(self.core.lo), "hi": list(self.core.hi)},
        }


@dataclass(frozen=True)
class ChartPoint:
    chart: str
    coords: tuple

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


@dataclass(frozen=True)
class TransitionMap:
    source: str
    target: str
    overlap: tuple  # union of Boxes in source coordinates
    forward: tuple  # one Expr per target coordinate, in source variables
    cocycle: Expr

    def contains(self, coords) -> bool:
        return any(b.contains(coords) for b in self.overlap)

    def apply(self, source: Chart, coords, params: Optional[Mapping[str, float]] = None) -> np.ndarray:
        env = source.bind(coords)
        if params:
            env.update(params)
        return np.array([evaluate(e, env) for e in self.forward])

    def factor(self, source: Chart, coords, params: Optional[Mapping[str, float]] = None) -> float:
        env = source.bind(coords)
        if params:
            env.update(params)
        return evaluate(self.cocycle, env)

    def describe(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "overlap": [{"lo": list(b.lo), "hi": list(b.hi)} for b in self.overlap],
            "forward": [serialize(e) for e in self.forward],
            "cocycle": serialize(self.cocycle),
        }


@dataclass(frozen=True)
class Atlas:
    name: str
    charts: tuple
    transitions: tuple = ()
    description: str = ""
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        index = {c.id: c for c in self.charts}
        if len(index) != len(self.charts):
            raise GeometryError("duplicate chart id")
        ns = {c.n for c in self.charts}
        if len(ns) != 1:
            raise GeometryError("all charts must share n")
        for tr in self.transitions:
            if tr.source not in index or tr.target not in index:
                raise GeometryError(f"transition {tr.source}->{tr.target} references unknown chart")
            if len(tr.forward) != index[tr.target].dim:
                raise GeometryError(f"transition {tr.source}->{tr.target}: wrong number of components")
        object.__setattr__(self, "_index", index)

    @property
    def n(self) -> int:
        return self.charts[0].n

    def chart(self, chart_id: str) -> Chart:
        try:
            return self._index[chart_id]
        except KeyError:
            raise GeometryError(f"unknown chart {chart_id!r}") from None

    def transitions_from(self, chart_id: str) -> list:
        return [tr for tr in self.transitions if tr.source == chart_id]

    def find_transition(self, source: str, target: str, coords) -> TransitionMap:
        candidates = [tr for tr in self.transitions if tr.source == source and tr.target == target]
        if not candidates:
            raise GeometryError(f"no transition registered from {source!r} to {target!r}")
        for tr in candidates:
            if tr.contains(coords):
                return tr
        raise GeometryError(f"point {tuple(coords)} outside every {source!r}->{target!r} overlap")

    def describe(self, verbose: bool = False) -> dict:
        out = {
            "name": self.name,
            "description": self.description,
            "n": self.n,
            "dim": 2 * self.n + 1,
            "charts": [c.describe() for c in self.charts],
        }
        if verbose:
            out["transitions"] = [tr.describe() for tr in self.transitions]
        else:
            out["transition_count"] = len(self.transitions)
        return out


# ---------------------------------------------------------------------------
# builtin models


def _darboux_names(n: int) -> tuple:
    return ("z",) + tuple(f"q{i}" for i in range(1, n + 1)) + tuple(f"p{i}" for i in range(1, n + 1))


def builtin_trivial_jet(n: int = 1, half_width: float = 2.0) -> Atlas:
    """Jet space J^1(R^n, R) with a single global Darboux chart."""
    if n < 1:
        raise GeometryError("n must be >= 1")
    dim = 2 * n + 1
    chart = Chart(
        id="J",
        n=n,
        names=_darboux_names(n),
        domain=Box.full(dim),
        core=Box((-half_width,) * dim, (half_width,) * dim),
    )
    return Atlas("trivial-jet", (chart,), (), description=f"J^1(R^{n},R), eta = dz - p_i dq^i")


def builtin_mobius(margin: float = DEFAULT_MARGIN, half_width: float = 2.0) -> Atlas:
    """First-jet bundle of the dual Moebius line bundle over the circle.

    One chart ``x in (0, 3*pi)`` glued to itself: ``(x, pi, z) -> (x + 2*pi,
    -pi, -z)`` on ``x in (0, pi)``, which flips the contact form. The inverse
    gluing is registered too so trajectories can leave through either end.
    """
    two_pi = 2.0 * math.pi
    names = ("z", "x", "pi")
    inf = math.inf
    chart = Chart(
        id="U",
        n=1,
        names=names,
        domain=Box((-inf, 0.0, -inf), (inf, 3.0 * math.pi, inf)),
        core=Box((-half_width, margin, -half_width), (half_width, 3.0 * math.pi - margin, half_width)),
        margin=margin,
    )
    flip_z = as_expr("-z")
    flip_pi = as_expr("-pi")
    glue = TransitionMap(
        source="U",
        target="U",
        overlap=(Box((-inf, 0.0, -inf), (inf, math.pi, inf)),),
        forward=(flip_z, Binary("+", Var("x"), Const(two_pi)), flip_pi),
        cocycle=Const(-1.0),
    )
    unglue = TransitionMap(
        source="U",
        target="U",
        overlap=(Box((-inf, two_pi, -inf), (inf, 3.0 * math.pi, inf)),),
        forward=(flip_z, Binary("-", Var("x"), Const(two_pi)), flip_pi),
        cocycle=Const(-1.0),
    )
    return Atlas(
        "mobius",
        (chart,),
        (glue, unglue),
        description="J^1 of the dual Moebius bundle; eta flips sign across the gluing",
    )


def projective_chart_names(n: int, k: int) -> tuple:
    z = f"q{k}"
    qs = tuple(f"q{i}" for i in range(n + 1) if i != k)
    ps = tuple(f"p{k}_{i}" for i in range(n + 1) if i != k)
    return (z,) + qs + ps


def builtin_projective(
    n: int = 1,
    gap: float = 0.1,
    margin: float = DEFAULT_MARGIN,
    half_width: float = 2.0,
) -> Atlas:
    """Projectivized cotangent bundle P(T* R^{n+1}) with charts U_0..U_n.

    Chart ``U_k`` has coordinates ``q^0..q^n`` and ``p^k_j = p_j / p_k``;
    roles ``z = q^k`` and momenta ``-p^k_j`` so that the stored form is
    ``dq^k + sum_j p^k_j dq^j``. Overlaps ``U_k -> U_l`` require
    ``|p^k_l| > gap``.
    """
    if n < 1:
        raise GeometryError("n must be >= 1")
    dim = 2 * n + 1
    inf = math.inf
    charts = []
    for k in range(n + 1):
        charts.append(
            Chart(
                id=f"U{k}",
                n=n,
                names=projective_chart_names(n, k),
                domain=Box.full(dim),
                core=Box((-half_width,) * dim, (half_width,) * dim),
                momentum_signs=(-1.0,) * n,
                margin=margin,
            )
        )
    transitions = []
    for k in range(n + 1):
        src_names = projective_chart_names(n, k)
        for l in range(n + 1):
            if l == k:
                continue
            pivot = Var(f"p{k}_{l}")
            forward = [Var(f"q{l}")]
            forward += [Var(f"q{i}") for i in range(n + 1) if i != l]
            for j in range(n + 1):
                if j == l:
                    continue
                if j == k:
                    forward.append(Binary("/", Const(1.0), pivot))
                else:
                    forward.append(Binary("/", Var(f"p{k}_{j}"), pivot))
            slot = src_names.index(f"p{k}_{l}")
            lo_pos = [-inf] * dim
            hi_neg = [inf] * dim
            lo_pos[slot] = gap
            hi_neg[slot] = -gap
            overlap = (Box(tuple(lo_pos), (inf,) * dim), Box((-inf,) * dim, tuple(hi_neg)))
            transitions.append(
                TransitionMap(f"U{k}", f"U{l}", overlap, tuple(forward), Binary("/", Const(1.0), pivot))
            )
    return Atlas(
        "projective",
        tuple(charts),
        tuple(transitions),
        description=f"P(T* R^{n + 1}); eta_l = (1/p^k_l) eta_k on overlaps",
    )


BUILTIN_MODELS = ("trivial-jet", "mobius", "projective")


def builtin(name: str, n: int = 1, **options) -> Atlas:
    if name == "trivial-jet":
        return builtin_trivial_jet(n, **options)
    if name == "mobius":
        return builtin_mobius(**options)
    if name == "projective":
        return builtin_projective(n, **options)
    raise GeometryError(f"unknown builtin model {name!r}")


# ---------------------------------------------------------------------------
# queries


def transit(atlas: Atlas, point: ChartPoint, target: str, params=None) -> ChartPoint:
    tr = atlas.find_transition(point.chart, target, point.coords)
    image = tr.apply(atlas.chart(point.chart), point.coords, params)
    if not atlas.chart(target).domain.contains(image):
        raise GeometryError(f"transition image {tuple(image)} outside chart {target!r}")
    return ChartPoint(target, tuple(image))


def cocycle_at(atlas: Atlas, source: str, target: str, point, params=None) -> float:
    coords = point.coords if isinstance(point, ChartPoint) else tuple(point)
    tr = atlas.find_transition(source, target, coords)
    return tr.factor(atlas.chart(source), coords, params)


def sample_in(box: Box, rng: LCG) -> np.ndarray:
    return rng.uniform(box.lo, box.hi)


def sample_overlap(atlas: Atlas, tr: TransitionMap, rng: LCG) -> np.ndarray:
    """Uniform point of ``core(source) & overlap(tr)``."""
    core = atlas.chart(tr.source).core
    pieces = [b for b in (core.intersect(o) for o in tr.overlap) if b is not None]
    if not pieces:
        raise GeometryError(f"overlap {tr.source}->{tr.target} misses the source core")
    if len(pieces) == 1:
        return sample_in(pieces[0], rng)
    weights = np.cumsum([p.volume() for p in pieces])
    u = rng.random() * weights[-1]
    return sample_in(pieces[int(np.searchsorted(weights, u, side="right"))], rng)


def transition_jacobian(atlas: Atlas, tr: TransitionMap, coords, params=None) -> np.ndarray:
    chart = atlas.chart(tr.source)
    env = chart.bind(coords)
    if params:
        env.update(params)
    return np.array([jet1(e, chart.names, env)[1] for e in tr.forward])


def _eta_scaled_residual(atlas, tr, coords, params=None) -> float:
    src = atlas.chart(tr.source)
    tgt = atlas.chart(tr.target)
    image = tr.apply(src, coords, params)
    jac = transition_jacobian(atlas, tr, coords, params)
    pulled = jac.T @ tgt.eta(image)
    return float(np.max(np.abs(pulled - tr.factor(src, coords, params) * src.eta(coords))))


def cocycle_equation_residual(atlas: Atlas, tr: TransitionMap, coords, params=None) -> float:
    """``|F^* eta_target - c * eta_source|_inf`` at a source point."""
    return _eta_scaled_residual(atlas, tr, coords, params)


def round_trip_residual(atlas: Atlas, tr: TransitionMap, coords, params=None) -> float:
    src = atlas.chart(tr.source)
    image = tr.apply(src, coords, params)
    back = atlas.find_transition(tr.target, tr.source, image)
    again = back.apply(atlas.chart(tr.target), image, params)
    return float(np.max(np.abs(again - np.asarray(coords, dtype=float))))


def triple_cocycle_residual(atlas: Atlas, ab: TransitionMap, bc: TransitionMap, ac: TransitionMap, coords, params=None) -> float:
    """``|c_cb(F_ba x) * c_ba(x) - c_ca(x)|``."""
    a = atlas.chart(ab.source)
    b = atlas.chart(ab.target)
    mid = ab.apply(a, coords, params)
    lhs = bc.factor(b, mid, params) * ab.factor(a, coords, params)
    return abs(lhs - ac.factor(a, coords, params))


def check_atlas(atlas: Atlas, rng: LCG, samples: int = 1000, params=None) -> dict:
    """Max residuals of the atlas invariants over seeded overlap samples."""
    out = {"min_abs_cocycle": math.inf, "cocycle_equation": 0.0, "round_trip": 0.0, "triple_cocycle": 0.0, "image_in_domain": True}
    for tr in atlas.transitions:
        src = atlas.chart(tr.source)
        tgt = atlas.chart(tr.target)
        for _ in range(samples):
            x = sample_overlap(atlas, tr, rng)
            out["min_abs_cocycle"] = min(out["min_abs_cocycle"], abs(tr.factor(src, x, params)))
            out["cocycle_equation"] = max(out["cocycle_equation"], cocycle_equation_residual(atlas, tr, x, params))
            image = tr.apply(src, x, params)
            if not tgt.domain.contains(image):
                out["image_in_domain"] = False
            try:
                out["round_trip"] = max(out["round_trip"], round_trip_residual(atlas, tr, x, params))
            except GeometryError:
                out["round_trip"] = math.inf
    triples = 0
    for ab in atlas.transitions:
        for bc in atlas.transitions:
            if bc.source != ab.target or bc.target in (ab.source, ab.target) or ab.source == ab.target:
                continue
            acs = [t for t in atlas.transitions if t.source == ab.source and t.target == bc.target]
            if not acs:
                continue
            a = atlas.chart(ab.source)
            hits = 0
            for _ in range(samples * 4):
                x = sample_overlap(atlas, ab, rng)
                mid = ab.apply(a, x, params)
                ac = next((t for t in acs if t.contains(x)), None)
                if ac is None or not bc.contains(mid):
                    continue
                out["triple_cocycle"] = max(out["triple_cocycle"], triple_cocycle_residual(atlas, ab, bc, ac, x, params))
                hits += 1
                if hits >= samples:
                    break
            triples += hits
    out["triple_samples"] = triples
    return out
