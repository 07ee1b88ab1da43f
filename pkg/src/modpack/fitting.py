"""Integer-point least-squares fitting of mod and step functions.

The target values are prescribed only at integers 0..B; the polynomial
degree D exceeds the number of sample points, so the linear system is
underdetermined and we take the minimum-l2-norm coefficient vector.
Coefficients are then divided by a scaling factor delta so every stored
coefficient stays below 1 in magnitude.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cheb import ChebSeries, eval_clenshaw, map_to_unit

# Gram matrices with condition estimates beyond this are treated as singular.
COND_LIMIT = 1e14
# Acceptable worst-case equation residual for a successful solve.
SOLVE_RESID_LIMIT = 1e-8


class RankDeficientError(ValueError):
    """The sample matrix lost full row rank (degree too small or duplicate points)."""


@dataclass(frozen=True)
class StepSpec:
    """Integer sample points (x, y) on [0, B] to be matched by a degree-D fit."""

    samples: tuple
    B: int
    D: int

    def __post_init__(self):
        samples = tuple((int(x), float(y)) for x, y in self.samples)
        xs = [x for x, _ in samples]
        if len(set(xs)) != len(xs):
            raise ValueError("sample abscissae must be distinct")
        if any(x < 0 or x > self.B for x in xs):
            raise ValueError(f"sample abscissae must lie in [0, {self.B}]")
        if self.D < len(samples) - 1:
            raise ValueError("degree too small for the number of samples")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class ModPlan:
    """A fitted, scaled approximation ready for homomorphic evaluation.

    delta * eval_clenshaw(series, i) reproduces the target value at every
    sample point i up to `residual`.  For mod fits `p` is the modulus; step
    fits carry p = None.
    """

    p: int | None
    B: int
    D: int
    delta: float
    residual: float
    series: ChebSeries

    def __post_init__(self):
        if np.max(np.abs(self.series.coeffs)) >= 1.0:
            raise ValueError("scaled coefficients must stay below 1; increase delta")


def build_system(spec: StepSpec):
    """Sample matrix A[j, i] = T_i(map(x_j)) and target vector y for a StepSpec."""
    xs = np.array([x for x, _ in spec.samples], dtype=float)
    y = np.array([v for _, v in spec.samples], dtype=float)
    t = map_to_unit(xs, spec.B)
    A = np.polynomial.chebyshev.chebvander(t, spec.D)
    return A, y


def solve_min_norm(A, y):
    """Minimum-l2-norm solution of the underdetermined system A a = y.

    Uses the full-row-rank identity a = A^T (A A^T)^{-1} y; the Gram matrix
    is small and the Chebyshev basis keeps it well conditioned.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    G = A @ A.T
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise RankDeficientError(
            f"Gram matrix condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e}; "
            "increase the degree or remove duplicate sample points"
        )
    alpha = A.T @ np.linalg.solve(G, y)
    resid = np.max(np.abs(A @ alpha - y)) if y.size else 0.0
    if resid > SOLVE_RESID_LIMIT:
        raise RankDeficientError(f"solver residual {resid:.3e} exceeds {SOLVE_RESID_LIMIT:.0e}")
    return alpha


def suggest_delta(alpha, headroom: float) -> float:
    """Smallest power of ten delta with max|alpha_i| / delta <= headroom."""
    if not 0 < headroom < 1:
        raise ValueError("headroom must lie in (0, 1)")
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size == 0:
        raise ValueError("alpha must be non-empty")
    top = np.max(np.abs(alpha))
    delta = 1.0
    while top / delta > headroom:
        delta *= 10.0
    return delta


# Automatic delta choice when the caller does not pin one.
DELTA_HEADROOM = 0.5


def default_delta(D: int) -> float:
    """Scaling factor used by the error-table runs: 1000 at degree 35, else 100."""
    return 1000.0 if D == 35 else 100.0


def _fit(spec: StepSpec, delta: float | None, p: int | None) -> ModPlan:
    A, y = build_system(spec)
    alpha = solve_min_norm(A, y)
    if delta is None:
        delta = suggest_delta(alpha, DELTA_HEADROOM)
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    series = ChebSeries(alpha / delta, float(spec.B))
    xs = np.array([x for x, _ in spec.samples], dtype=float)
    residual = float(np.max(np.abs(delta * eval_clenshaw(series, xs) - y)))
    return ModPlan(p=p, B=spec.B, D=spec.D, delta=float(delta), residual=residual, series=series)


def fit_step(spec: StepSpec, delta: float | None = None) -> ModPlan:
    """Fit an arbitrary integer-point step function; returns a ModPlan-shaped artifact."""
    return _fit(spec, delta, p=None)


def fit_modp(p: int, B: int, D: int, delta: float | None = None) -> ModPlan:
    """Fit x mod p at the integers 0..B with a degree-D scaled Chebyshev series.

    delta=None picks the smallest power of ten keeping coefficients below
    DELTA_HEADROOM.
    """
    if p < 2:
        raise ValueError(f"modulus must be at least 2, got {p}")
    if D <= B:
        raise ValueError(f"degree must exceed the interval bound (D={D}, B={B})")
    samples = tuple((i, float(i % p)) for i in range(B + 1))
    return _fit(StepSpec(samples=samples, B=B, D=D), delta, p=p)


def plan_to_dict(plan: ModPlan) -> dict:
    return {
        "p": plan.p,
        "B": plan.B,
        "D": plan.D,
        "delta": plan.delta,
        "residual": plan.residual,
        "coeffs": plan.series.coeffs.tolist(),
    }


def plan_from_dict(d: dict) -> ModPlan:
    series = ChebSeries(np.array(d["coeffs"], dtype=float), float(d["B"]))
    return ModPlan(
        p=d["p"] if d["p"] is None else int(d["p"]),
        B=int(d["B"]),
        D=int(d["D"]),
        delta=float(d["delta"]),
        residual=float(d["residual"]),
        series=series,
    )


def save_plan(plan: ModPlan, path):
    Path(path).write_text(json.dumps(plan_to_dict(plan)) + "\n")


def load_plan(path) -> ModPlan:
    return plan_from_dict(json.loads(Path(path).read_text()))
