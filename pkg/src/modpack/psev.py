"""Paterson-Stockmeyer evaluation of Chebyshev series over a generic backend.

The backend contract is duck-typed: any value supporting +, -, unary -,
and * against itself and against Python scalars works.  Plain floats and
numpy arrays satisfy it natively; hesim.SlotCiphertext satisfies it with
level accounting.  The same code path therefore evaluates on plaintext
and on simulated ciphertexts.

Depth schedule.  The series is padded to a full-degree polynomial of
degree k*(2^m - 1) and decomposed by repeated Chebyshev-basis long
division against the precomputed powers T_{k*2^j}; the division rests on
the product identity 2*T_a*T_b = T_{a+b} + T_{|a-b|}.  With m sized so the
capacity reaches the next power of two above the series degree D, the
consumed multiplicative depth is exactly ceil(log2 D) + 2 (one level for
the caller's domain map, the rest for the evaluation tree), independent of
slot values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cheb import ChebSeries
from .fitting import ModPlan

# Cap on repeated-addition exponents; packing layers stay far below this.
POW2_ADD_LIMIT = 24


class DegreeOverflowError(ValueError):
    """The series degree exceeds the schedule capacity k*(2^m - 1)."""


@dataclass(frozen=True)
class PsSchedule:
    """Baby-step count k, giant-step count m, and a constant fused into the leaves."""

    k: int
    m: int
    folded_scale: float = 1.0

    def __post_init__(self):
        if self.k < 1 or self.m < 1:
            raise ValueError("k and m must be positive")

    @property
    def capacity(self) -> int:
        return self.k * ((1 << self.m) - 1)


def plan_schedule(D: int, folded_scale: float = 1.0) -> PsSchedule:
    """Choose k ~ sqrt(D/2) and the smallest m whose capacity covers D.

    m is sized so k*(2^m - 1) reaches the next power of two at or above D,
    which pins the consumed depth to ceil(log2 D) + 2 for every degree and
    reproduces the depth ledger of the unpacking pipelines.
    """
    if D < 1:
        raise ValueError(f"degree must be at least 1, got {D}")
    k = max(1, round(math.sqrt(D / 2.0)))
    target = 1 if D <= 1 else 1 << math.ceil(math.log2(D))
    m = 1
    while k * ((1 << m) - 1) < target:
        m += 1
    return PsSchedule(k=k, m=m, folded_scale=folded_scale)


def compute_power_basis(u, sched: PsSchedule):
    """Chebyshev powers of u: bs = (T_1..T_k), gs = (T_k, T_2k, ..., T_{k*2^(m-1)}).

    Baby steps use balanced splits of the product identity
    T_j = 2*T_ceil(j/2)*T_floor(j/2) - T_(j mod 2), giant steps the doubling
    T_2n = 2*T_n^2 - 1; both keep the multiplication dag at log depth.  On
    a level-tracked backend the consumption is read off the returned
    elements' level fields.
    """
    cache = {1: u}

    def build(j):
        if j not in cache:
            prod = build((j + 1) // 2) * build(j // 2)
            two = prod + prod
            cache[j] = (two - 1.0) if j % 2 == 0 else (two - cache[1])
        return cache[j]

    bs = [build(j) for j in range(1, sched.k + 1)]
    gs = [bs[sched.k - 1]]
    for _ in range(1, sched.m):
        sq = gs[-1] * gs[-1]
        gs.append((sq + sq) - 1.0)
    return bs, gs


def _degree(c: np.ndarray) -> int:
    nz = np.nonzero(c)[0]
    return int(nz[-1]) if nz.size else 0


def _div_by_T(f: np.ndarray, N: int):
    """Chebyshev-basis long division f = q*T_N + r via 2*T_a*T_N = T_{a+N} + T_{|a-N|}."""
    f = f.copy()
    d = _degree(f)
    q = np.zeros(max(d - N, 0) + 1)
    for i in range(d, N, -1):
        ci = f[i]
        if ci != 0.0:
            q[i - N] += 2.0 * ci
            f[abs(i - 2 * N)] -= ci
            f[i] = 0.0
    q[0] += f[N]
    f[N] = 0.0
    return q, f[:N]


def eval_ps(series: ChebSeries, u, sched: PsSchedule):
    """Evaluate folded_scale * sum_i c_i T_i(u); u must already live in [-1, 1].

    The series' source domain is the caller's concern: map x into u first
    (on a ciphertext backend that mapping costs the one extra level).
    """
    coeffs = np.asarray(series.coeffs, dtype=float)
    D = _degree(coeffs)
    if coeffs.size - 1 > sched.capacity:
        raise DegreeOverflowError(
            f"series degree {coeffs.size - 1} exceeds schedule capacity {sched.capacity}"
        )
    fold = sched.folded_scale
    if D == 0:
        # Constant polynomial: a zero ciphertext plus a constant, no mults.
        return (u - u) + float(coeffs[0]) * fold

    bs, gs = compute_power_basis(u, sched)
    nm = sched.capacity
    g = np.zeros(nm + 1)
    g[: coeffs.size] = coeffs
    # Pad to full degree so the division tree (and hence the level ledger)
    # depends only on the schedule; the pad term is subtracted at the end.
    pad = 1.0 if abs(g[nm] + 1.0) >= 0.5 else 2.0
    g[nm] += pad
    g = g * fold

    def leaf(cc):
        acc = None
        for i in range(1, len(cc)):
            if cc[i] != 0.0:
                term = bs[i - 1] * float(cc[i])
                acc = term if acc is None else acc + term
        if acc is None:
            return (u - u) + float(cc[0])
        return acc + float(cc[0]) if cc[0] != 0.0 else acc

    def rec(ff):
        d = _degree(ff)
        if d < sched.k:
            return leaf(ff)
        j = 0
        while sched.k * (1 << (j + 1)) <= d:
            j += 1
        q, r = _div_by_T(ff, sched.k * (1 << j))
        out = rec(q) * gs[j]
        if np.any(r != 0.0):
            out = out + rec(r)
        return out

    main = rec(g)
    # Subtract fold*pad*T_{k*(2^m - 1)}(u), built with the same powers via
    # T_{k(2^{j+1}-1)} = 2*T_{k*2^j}*T_{k(2^j-1)} - T_k.
    corr1 = gs[0] * (fold * pad)
    corr = corr1
    for j in range(1, sched.m):
        t = gs[j] * corr
        corr = (t + t) - corr1
    return main - corr


def mul_by_pow2_additively(e, l: int):
    """e * 2^l through l self-additions; costs no multiplicative level."""
    if l < 0:
        raise ValueError("exponent must be non-negative")
    if l > POW2_ADD_LIMIT:
        raise ValueError(f"exponent {l} exceeds the repeated-addition guard {POW2_ADD_LIMIT}")
    for _ in range(l):
        e = e + e
    return e


def mul_by_int_additively(e, c: int):
    """e * c for integer c >= 1 by double-and-add; no multiplicative levels."""
    if c < 1:
        raise ValueError("multiplier must be a positive integer")
    if c.bit_length() - 1 > POW2_ADD_LIMIT:
        raise ValueError(f"multiplier {c} exceeds the repeated-addition guard")
    acc = None
    for bit in bin(c)[2:]:
        if acc is not None:
            acc = acc + acc
        if bit == "1":
            acc = e if acc is None else acc + e
    return acc


def eval_plan(x, plan: ModPlan, extra_scale: float = 1.0, sched: PsSchedule | None = None):
    """Apply a fitted plan to backend value x over its source interval [0, B].

    Maps u = 2x/B - 1 (one level on a ciphertext backend), then evaluates
    with delta * extra_scale fused into the leaf coefficients, so the
    rescaling never costs an extra level.
    """
    if sched is None:
        sched = plan_schedule(plan.D)
    sched = PsSchedule(sched.k, sched.m, plan.delta * extra_scale)
    u = x * (2.0 / plan.B) - 1.0
    return eval_ps(plan.series, u, sched)
