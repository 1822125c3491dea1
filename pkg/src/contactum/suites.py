"""Identity suites run by ``contactum verify``.

Each suite reports the max residual over seeded sample points and passes
when it is at most ``tolerance * tolerance_scale``. Sample points are drawn
from chart cores (or core-overlap intersections) with :class:`~contactum.rng.LCG`.
"""

from __future__ import annotations

import math
from typing import Dict, List, Mapping, Optional

import numpy as np

from .contact import (
    TIME,
    ContactModel,
    bracket_via_fields,
    cartan_residual,
    chart_invariance_residual,
    decay_relation_residual,
    defining_equation_residuals,
    hamiltonian_cocycle_residual,
    jacobi_bracket,
    nondegeneracy,
)
from .exprparse import free_variables
from .geometry import ChartPoint, check_atlas, sample_in, sample_overlap
from .rng import LCG
from .symplectic import (
    CoverPoint,
    evolution_diagnostic,
    omega_exactness_residual,
    omega_homogeneity_residual,
    projection_check,
    weight_zero_residual,
)

__all__ = ["TOLERANCES", "run_suites", "default_brackets"]

# first-derivative identities 1e-9; Hessian-based ones 1e-7
TOLERANCES = {
    "defining_equations": 1e-9,
    "nondegeneracy": 1e-9,
    "cartan": 1e-7,
    "decay_relation": 1e-9,
    "bracket_equivalence": 1e-7,
    "bracket_antisymmetry": 1e-12,
    "hamiltonian_cocycle": 1e-9,
    "atlas_cocycle_equation": 1e-9,
    "atlas_round_trip": 1e-9,
    "atlas_triple_cocycle": 1e-9,
    "chart_invariance": 1e-7,
    "omega_homogeneity": 1e-9,
    "omega_exactness": 1e-7,
    "projection": 1e-7,
    "weight_zero": 1e-9,
    "evolution_constant_rescale": 1e-9,
}

LAMBDAS = (-2.0, 0.5, 3.0)


def default_brackets(model: ContactModel) -> List[tuple]:
    """``(H, z)``, ``(H, q_1)``, ``(H, p_1)`` and ``(z q_1, p_1^2)`` per chart."""
    ham = dict(model.hamiltonians)
    pairs = []
    for pick in (
        lambda c: c.z_name,
        lambda c: c.q_names[0],
        lambda c: c.p_names[0],
    ):
        pairs.append((ham, {c.id: pick(c) for c in model.atlas.charts}))
    pairs.append(
        (
            {c.id: f"{c.z_name} * {c.q_names[0]}" for c in model.atlas.charts},
            {c.id: f"{c.p_names[0]}^2" for c in model.atlas.charts},
        )
    )
    return pairs


def _suite(residual: float, tol: float, scale: float, samples: int) -> dict:
    limit = tol * scale
    ok = bool(np.isfinite(residual) and residual <= limit)
    return {"max_residual": float(residual), "tolerance": limit, "samples": samples, "pass": ok}


def _time_dependent(model: ContactModel) -> bool:
    return any(TIME in free_variables(e) for e in model.hamiltonians.values())


def run_suites(model: ContactModel, seed: int = 0, tolerance_scale: float = 1.0, options: Optional[Mapping] = None) -> dict:
    """Run every identity suite and return a JSON-ready report."""
    opts = dict(options or {})
    samples = int(opts.get("samples", 100))
    atlas_samples = int(opts.get("atlas_samples", samples))
    t_lo, t_hi = (float(v) for v in opts.get("t_range", (0.0, 1.0)))
    rng = LCG(seed)
    atlas = model.atlas
    params = dict(model.parameters)
    timed = _time_dependent(model)
    brackets = opts.get("brackets")
    if brackets is None:
        brackets = default_brackets(model)
    else:
        brackets = [tuple(p) for p in brackets]

    def draw_t():
        return float(rng.uniform([t_lo], [t_hi])[0]) if timed else 0.0

    acc: Dict[str, float] = {k: 0.0 for k in TOLERANCES}
    counts: Dict[str, int] = {k: 0 for k in TOLERANCES}

    def bump(name, value):
        acc[name] = max(acc[name], float(value)) if np.isfinite(value) else math.inf
        counts[name] += 1

    min_volume = math.inf
    for chart in atlas.charts:
        for _ in range(samples):
            x = tuple(sample_in(chart.core, rng))
            t = draw_t()
            point = ChartPoint(chart.id, x)
            first, second = defining_equation_residuals(model, point, t)
            bump("defining_equations", max(abs(first), float(np.max(np.abs(second)))))
            min_volume = min(min_volume, abs(nondegeneracy(chart, x)) / math.factorial(chart.n))
            bump("cartan", float(np.max(np.abs(cartan_residual(model, point, t)))))
            bump("decay_relation", abs(decay_relation_residual(model, point, t)))
            for F, G in brackets:
                a = jacobi_bracket(atlas, F, G, point, t, params)
                b = bracket_via_fields(atlas, F, G, point, t, params)
                bump("bracket_equivalence", abs(a - b))
                bump("bracket_antisymmetry", abs(a + jacobi_bracket(atlas, G, F, point, t, params)))
            s = float(rng.uniform([0.5], [2.0])[0])
            if rng.random() < 0.5:
                s = -s
            cover = CoverPoint(s, point)
            for lam in LAMBDAS:
                bump("omega_homogeneity", omega_homogeneity_residual(atlas, cover, lam))
                bump("weight_zero", weight_zero_residual(model, cover, lam, t))
            bump("omega_exactness", omega_exactness_residual(atlas, cover))
            bump("projection", projection_check(model, cover, t))
            r, r_const = evolution_diagnostic(model, 2.5, point, t, s)
            bump("evolution_constant_rescale", float(np.max(np.abs(r - r_const))))
    # Darboux charts have eta ^ (d eta)^n = +-n! dz ^ dq ^ dp
    acc["nondegeneracy"] = abs(min_volume - 1.0) if np.isfinite(min_volume) else 0.0
    counts["nondegeneracy"] = samples * len(atlas.charts)

    for tr in atlas.transitions:
        for _ in range(atlas_samples):
            x = tuple(sample_overlap(atlas, tr, rng))
            t = draw_t()
            bump("hamiltonian_cocycle", hamiltonian_cocycle_residual(model, tr, x, t))
            bump("chart_invariance", chart_invariance_residual(model, tr, x, t))
    geo = check_atlas(atlas, rng, atlas_samples, params)
    acc["atlas_cocycle_equation"] = geo["cocycle_equation"]
    acc["atlas_round_trip"] = geo["round_trip"]
    acc["atlas_triple_cocycle"] = geo["triple_cocycle"]
    n_over = atlas_samples * len(atlas.transitions)
    counts["atlas_cocycle_equation"] = counts["atlas_round_trip"] = n_over
    counts["atlas_triple_cocycle"] = geo["triple_samples"]

    suites = {k: _suite(acc[k], TOLERANCES[k], tolerance_scale, counts[k]) for k in TOLERANCES}
    if atlas.transitions:
        ok = geo["image_in_domain"] and geo["min_abs_cocycle"] > 0.0
        suites["atlas_cocycle_nonvanishing"] = {
            "min_abs_cocycle": float(geo["min_abs_cocycle"]),
            "image_in_domain": bool(geo["image_in_domain"]),
            "samples": n_over,
            "pass": bool(ok),
        }

    rescale = opts.get("rescale")
    info = {}
    if rescale is not None:
        chart = atlas.charts[0]
        where = opts.get("diagnostic_point")
        if where is None:
            # a generic interior point; the core centre often has H_hat = 0
            lo, hi = np.array(chart.core.lo), np.array(chart.core.hi)
            where = lo + 0.37 * (hi - lo)
        x = tuple(float(v) for v in where)
        r, r_new = evolution_diagnostic(model, rescale, ChartPoint(chart.id, x), 0.0, 1.0)
        info["evolution_rescale"] = {
            "rescale": rescale if isinstance(rescale, str) else dict(rescale),
            "chart": chart.id,
            "point": list(x),
            "difference": float(np.max(np.abs(r - r_new))),
        }

    return {
        "atlas": atlas.name,
        "charts": [c.id for c in atlas.charts],
        "seed": int(seed),
        "tolerance_scale": float(tolerance_scale),
        "suites": suites,
        "diagnostics": info,
        "pass": all(s["pass"] for s in suites.values()),
    }
