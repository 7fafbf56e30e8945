"""Adaptive 1D quadrature over finite intervals, half-lines and gapped domains.

A nested 15-point Gauss-Kronrod rule drives a global error heap.  Infinite
tails are truncated by a monitor that stops once successive blocks fall
below ``tail_eps``; inverse square-root edge singularities are removed by
the substitution x = edge +/- t**2.

This is the single integration backend for all current evaluations.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

__all__ = [
    "QuadratureSpec",
    "QuadratureError",
    "NonIntegrable",
    "MaxSubdivisions",
    "integrate",
]


class QuadratureError(Exception):
    pass


class NonIntegrable(QuadratureError):
    """Tail monitor failed to converge before reaching max_range."""


class MaxSubdivisions(QuadratureError):
    """Adaptive bisection exhausted its panel budget."""


@dataclass(frozen=True)
class QuadratureSpec:
    tol: float = 1e-10
    tail_eps: float = 1e-14
    max_range: float = 1e7
    max_panels: int = 4000
    tail_block: float = 2.0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.tail_eps >= self.tol:
            raise ValueError("tail_eps must be smaller than tol")


# 15-point Kronrod abscissae/weights and the embedded 7-point Gauss weights
# (QUADPACK dqk15 constants).
_XGK = (
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
)
_WGK = (
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
)
_WG = (
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
)


def _gk15(f: Callable[[float], float], a: float, b: float) -> tuple[float, float]:
    """One Gauss-Kronrod 15 panel on [a, b]: (value, error estimate)."""
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    fc = f(c)
    resk = _WGK[7] * fc
    resg = _WG[3] * fc
    for j in range(7):
        x = h * _XGK[j]
        f1 = f(c - x)
        f2 = f(c + x)
        resk += _WGK[j] * (f1 + f2)
        if j % 2 == 1:
            resg += _WG[j // 2] * (f1 + f2)
    return resk * h, abs(resk - resg) * abs(h)


def _adaptive_finite(
    f: Callable[[float], float], a: float, b: float, tol: float, max_panels: int
) -> tuple[float, float]:
    """Globally adaptive GK15 on the finite interval [a, b]."""
    if a == b:
        return 0.0, 0.0
    val, err = _gk15(f, a, b)
    # heap of (-err, seq, a, b, val, err); seq breaks ties deterministically
    heap = [(-err, 0, a, b, val, err)]
    seq = 1
    total_err = err
    while total_err > tol and len(heap) < max_panels:
        neg, _, pa, pb, pval, perr = heapq.heappop(heap)
        pm = 0.5 * (pa + pb)
        if pm == pa or pm == pb:
            # cannot split further at machine precision
            heapq.heappush(heap, (neg, seq, pa, pb, pval, perr))
            seq += 1
            break
        v1, e1 = _gk15(f, pa, pm)
        v2, e2 = _gk15(f, pm, pb)
        total_err += e1 + e2 - perr
        heapq.heappush(heap, (-e1, seq, pa, pm, v1, e1))
        heapq.heappush(heap, (-e2, seq + 1, pm, pb, v2, e2))
        seq += 2
    if total_err > tol and len(heap) >= max_panels:
        raise MaxSubdivisions(
            f"error estimate {total_err:.3e} > tol {tol:.3e} "
            f"after {len(heap)} panels on [{a:g}, {b:g}]"
        )
    # accumulate in sorted panel order for reproducibility
    panels = sorted((pa, pval, perr) for _, _, pa, _, pval, perr in heap)
    value = math.fsum(p[1] for p in panels)
    error = math.fsum(p[2] for p in panels)
    return value, error


def _finite_with_edges(
    f: Callable[[float], float],
    a: float,
    b: float,
    sqrt_left: bool,
    sqrt_right: bool,
    tol: float,
    max_panels: int,
) -> tuple[float, float]:
    """Finite interval with optional x = edge +/- t**2 edge substitutions."""
    if sqrt_left and sqrt_right:
        m = 0.5 * (a + b)
        v1, e1 = _finite_with_edges(f, a, m, True, False, 0.5 * tol, max_panels)
        v2, e2 = _finite_with_edges(f, m, b, False, True, 0.5 * tol, max_panels)
        return v1 + v2, e1 + e2
    if sqrt_left:
        tmax = math.sqrt(b - a)
        return _adaptive_finite(
            lambda t: f(a + t * t) * 2.0 * t, 0.0, tmax, tol, max_panels
        )
    if sqrt_right:
        tmax = math.sqrt(b - a)
        return _adaptive_finite(
            lambda t: f(b - t * t) * 2.0 * t, 0.0, tmax, tol, max_panels
        )
    return _adaptive_finite(f, a, b, tol, max_panels)


def _half_line(
    f: Callable[[float], float],
    t0: float,
    direction: int,
    sqrt_edge: bool,
    spec: QuadratureSpec,
    tol: float,
) -> tuple[float, float]:
    """Integral over [t0, +inf) (direction=+1) or (-inf, t0] (direction=-1).

    Blocks of geometrically growing width are integrated until two
    consecutive blocks fall below tail_eps.
    """
    width = spec.tail_block
    lo = t0
    value = 0.0
    error = 0.0
    quiet = 0
    first = True
    while True:
        hi = lo + direction * width
        if abs(hi - t0) > spec.max_range:
            raise NonIntegrable(
                f"tail monitor did not reach {spec.tail_eps:.1e} before "
                f"|range| = {spec.max_range:g}"
            )
        a, b = (lo, hi) if direction > 0 else (hi, lo)
        v, e = _finite_with_edges(
            f, a, b, sqrt_edge and first and direction > 0,
            sqrt_edge and first and direction < 0, tol, spec.max_panels
        )
        value += v
        error += e
        if abs(v) < spec.tail_eps:
            quiet += 1
            if quiet >= 2:
                return value, error
        else:
            quiet = 0
        lo = hi
        width *= 2.0
        first = False


@dataclass
class _Interval:
    lo: float
    hi: float
    sqrt_lo: bool = False
    sqrt_hi: bool = False


def _normalize_domain(
    domain: Sequence, sqrt_edges
) -> list[_Interval]:
    out = []
    for i, iv in enumerate(domain):
        lo, hi = float(iv[0]), float(iv[1])
        if not lo < hi:
            raise ValueError(f"empty or inverted interval ({lo}, {hi})")
        s_lo = s_hi = False
        if sqrt_edges is not None:
            s_lo, s_hi = sqrt_edges[i]
        out.append(_Interval(lo, hi, s_lo, s_hi))
    return out


def integrate(
    f: Callable[[float], float],
    domain: Sequence,
    spec: QuadratureSpec | None = None,
    sqrt_edges: Sequence[tuple[bool, bool]] | None = None,
) -> tuple[float, float]:
    """Integrate ``f`` over a union of intervals.

    ``domain`` is a sequence of (lo, hi) pairs; endpoints may be +/-inf.
    ``sqrt_edges`` optionally marks, per interval, whether the (finite)
    left/right endpoint carries an integrable inverse-sqrt singularity.
    Returns (value, error_estimate).
    """
    if spec is None:
        spec = QuadratureSpec()
    intervals = _normalize_domain(domain, sqrt_edges)
    per = spec.tol / max(len(intervals), 1)
    value = 0.0
    error = 0.0
    for iv in intervals:
        lo_inf = math.isinf(iv.lo)
        hi_inf = math.isinf(iv.hi)
        if lo_inf and hi_inf:
            v1, e1 = _half_line(f, 0.0, +1, False, spec, 0.25 * per)
            v2, e2 = _half_line(f, 0.0, -1, False, spec, 0.25 * per)
            value += v1 + v2
            error += e1 + e2
        elif hi_inf:
            v, e = _half_line(f, iv.lo, +1, iv.sqrt_lo, spec, 0.5 * per)
            value += v
            error += e
        elif lo_inf:
            v, e = _half_line(f, iv.hi, -1, iv.sqrt_hi, spec, 0.5 * per)
            value += v
            error += e
        else:
            v, e = _finite_with_edges(
                f, iv.lo, iv.hi, iv.sqrt_lo, iv.sqrt_hi, per, spec.max_panels
            )
            value += v
            error += e
    return value, error
