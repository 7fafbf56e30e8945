"""Energy-fiber interface and the Landauer-Buttiker current evaluation.

A :class:`FiberModel` exposes, per energy, the scattering matrix S, the
charge matrix Q and the density matrix rho on the fiber space.  The
steady current is

    J = (1/2pi) * integral tr{ rho(lam) (Q(lam) - S(lam)* Q(lam) S(lam)) } dlam

taken over the model's spectral support.  The renormalized variant
subtracts a scalar equilibrium profile f(lam)*I from rho, which changes
nothing when both integrals converge (the subtracted term integrates to
zero by unitarity) but restores integrability for occupations that do
not decay at -infinity.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .quadrature import QuadratureSpec, integrate

__all__ = [
    "FiberModel",
    "DensitySpec",
    "CurrentResult",
    "FiberMismatch",
    "NoConvergence",
    "DensityNotPSD",
    "fermi_dirac",
    "fermi_dirac_difference",
    "lb_current",
    "lb_current_renormalized",
    "truncated_current_limit",
]

TWO_PI = 2.0 * math.pi


class FiberMismatch(Exception):
    """Fiber matrices disagree in dimension at some energy."""


class NoConvergence(Exception):
    """Cutoff ladder failed to converge."""


class DensityNotPSD(Exception):
    """A density matrix violates positive semi-definiteness."""


def fermi_dirac(lam, beta: float, mu: float = 0.0):
    """Fermi-Dirac occupation 1/(1 + exp(beta*(lam - mu))), overflow-safe."""
    return expit(-beta * (np.asarray(lam, dtype=float) - mu))


def _log_occupation(x, beta):
    """log f_FD(x) = -log(1 + exp(beta x)), computed without overflow."""
    x = np.asarray(x, dtype=float)
    return np.where(
        x > 0,
        -beta * x - np.log1p(np.exp(-beta * np.abs(x))),
        -np.log1p(np.exp(-beta * np.abs(x))),
    )


def fermi_dirac_difference(lam, beta: float, mu_minus: float, mu_plus: float):
    """f_FD(lam - mu_minus) - f_FD(lam - mu_plus) via the factored identity.

    Evaluates exp(beta*lam) * (exp(-beta*mu_plus) - exp(-beta*mu_minus))
    * f_minus * f_plus, which avoids the catastrophic cancellation of the
    naive difference for lam -> -inf where both occupations approach 1.
    """
    lam = np.asarray(lam, dtype=float)
    pref = math.exp(-beta * mu_plus) - math.exp(-beta * mu_minus)
    log_ff = _log_occupation(lam - mu_minus, beta) + _log_occupation(lam - mu_plus, beta)
    return pref * np.exp(beta * lam + log_ff)


@dataclass
class DensitySpec:
    """Parametrized steady state on a two-lead fiber.

    kind is one of 'fermi_dirac_per_lead', 'tabulated' or 'equilibrium'.
    For Fermi-Dirac leads, ``mu`` holds one chemical potential per lead;
    'equilibrium' uses a single mu for every lead.  ``tau`` is an optional
    coherence function coupling the two leads; it must satisfy
    |tau|^2 <= rho_0 * rho_1 pointwise for the fiber density to stay PSD.
    """

    kind: str = "fermi_dirac_per_lead"
    beta: float = 1.0
    mu: Sequence[float] = (0.0, 0.0)
    tau: Callable[[float], complex] | None = None
    tables: Sequence[Callable[[float], float]] | None = None

    def __post_init__(self):
        if self.kind not in ("fermi_dirac_per_lead", "tabulated", "equilibrium"):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.kind != "tabulated" and self.beta <= 0:
            raise ValueError("beta must be positive")

    def lead_density(self, lead: int, lam: float) -> float:
        if self.kind == "tabulated":
            return float(self.tables[lead](lam))
        if self.kind == "equilibrium":
            return float(fermi_dirac(lam, self.beta, self.mu[0]))
        return float(fermi_dirac(lam, self.beta, self.mu[lead]))

    def lead_difference(self, lam: float) -> float:
        """rho_0(lam) - rho_1(lam), cancellation-free for Fermi-Dirac leads."""
        if self.kind == "equilibrium":
            return 0.0
        if self.kind == "tabulated":
            return float(self.tables[0](lam) - self.tables[1](lam))
        return float(fermi_dirac_difference(lam, self.beta, self.mu[0], self.mu[1]))

    def matrix(self, lam: float) -> np.ndarray:
        """2x2 fiber density [[rho_0, conj(tau)], [tau, rho_1]]."""
        r0 = self.lead_density(0, lam)
        r1 = self.lead_density(1, lam)
        t = complex(self.tau(lam)) if self.tau is not None else 0.0
        if abs(t) ** 2 > r0 * r1 * (1.0 + 1e-12) + 1e-300:
            raise DensityNotPSD(
                f"|tau|^2 = {abs(t)**2:.3e} exceeds rho_0*rho_1 = {r0 * r1:.3e} "
                f"at lam = {lam:g}"
            )
        return np.array([[r0, np.conj(t)], [t, r1]], dtype=complex)


@dataclass
class CurrentResult:
    value: float
    error_estimate: float
    diagnostics: dict = field(default_factory=dict)
    samples: list = field(default_factory=list)

    def __repr__(self):
        return (
            f"CurrentResult(value={self.value:.12g}, "
            f"error_estimate={self.error_estimate:.3g})"
        )


class FiberModel(abc.ABC):
    """Per-energy fiber data of a scattering system.

    ``spectral_support`` is a list of (lo, hi) intervals (endpoints may be
    infinite); ``sqrt_edges`` optionally marks endpoints carrying an
    inverse-sqrt singularity of the fiber data, so the quadrature can
    regularize node placement there.
    """

    spectral_support: list = [(-math.inf, math.inf)]
    sqrt_edges: list | None = None
    unitarity_tol: float = 1e-8

    @abc.abstractmethod
    def fiber_dim(self, lam: float) -> int: ...

    @abc.abstractmethod
    def s_matrix(self, lam: float) -> np.ndarray: ...

    @abc.abstractmethod
    def charge(self, lam: float) -> np.ndarray: ...

    @abc.abstractmethod
    def density(self, lam: float) -> np.ndarray: ...

    def in_support(self, lam: float) -> bool:
        return any(lo < lam < hi for lo, hi in self.spectral_support)


def _integrand_factory(model, reference=None, keep_samples=False):
    """Build the scalar integrand and a mutable diagnostics record."""
    diag = {"unitarity_residual_max": 0.0, "n_evaluations": 0}
    samples = []

    def integrand(lam: float) -> float:
        s = model.s_matrix(lam)
        q = model.charge(lam)
        rho = model.density(lam)
        n = s.shape[0]
        if q.shape != (n, n) or rho.shape != (n, n):
            raise FiberMismatch(
                f"fiber dimensions disagree at lam={lam:g}: "
                f"S {s.shape}, Q {q.shape}, rho {rho.shape}"
            )
        res = float(np.linalg.norm(s.conj().T @ s - np.eye(n), 2))
        if res > diag["unitarity_residual_max"]:
            diag["unitarity_residual_max"] = res
        diag["n_evaluations"] += 1
        if reference is not None:
            rho = rho - float(reference(lam)) * np.eye(n)
        # tr(rho (Q - S*QS)) written as tr(rho S*[S, Q]): identical by
        # unitarity, but free of cancellation noise whenever S commutes
        # with Q (decoupled channels give an exact zero)
        val = float(np.real(np.trace(rho @ (s.conj().T @ (s @ q - q @ s)))))
        if keep_samples:
            samples.append((lam, val))
        return val

    return integrand, diag, samples


def _clip_support(support, lo, hi):
    out = []
    for a, b in support:
        a2, b2 = max(a, lo), min(b, hi)
        if a2 < b2:
            out.append((a2, b2))
    return out


def lb_current(
    model: FiberModel,
    quad: QuadratureSpec | None = None,
    keep_samples: bool = False,
) -> CurrentResult:
    """Steady current of Landauer-Buttiker type over the model's support."""
    return lb_current_renormalized(model, None, quad, keep_samples=keep_samples)


def lb_current_renormalized(
    model: FiberModel,
    reference: Callable[[float], float] | None,
    quad: QuadratureSpec | None = None,
    keep_samples: bool = False,
) -> CurrentResult:
    """Current with the scalar profile reference(lam)*I subtracted from rho.

    With reference=None this is the plain current.  The subtraction leaves
    the value unchanged whenever both versions converge, because
    tr(f*(Q - S*QS)) = f * tr(Q - S*QS) vanishes by unitarity of S.
    """
    if quad is None:
        quad = QuadratureSpec()
    integrand, diag, samples = _integrand_factory(model, reference, keep_samples)
    value, err = integrate(integrand, model.spectral_support, quad, model.sqrt_edges)
    diag["assumes_empty_singular_continuous_spectrum"] = True
    return CurrentResult(value / TWO_PI, err / TWO_PI, diag, samples)


def truncated_current_limit(
    model: FiberModel,
    cutoffs: Sequence[float],
    quad: QuadratureSpec | None = None,
) -> CurrentResult:
    """Windowed currents J_(-L,L) along increasing cutoffs, extrapolated.

    Raises NoConvergence when the successive differences fail to shrink
    over the last three ladder steps (up to the quadrature tolerance).
    """
    if quad is None:
        quad = QuadratureSpec()
    cutoffs = list(cutoffs)
    if sorted(cutoffs) != cutoffs:
        raise ValueError("cutoffs must be increasing")
    integrand, diag, _ = _integrand_factory(model)
    values = []
    total_err = 0.0
    for cut in cutoffs:
        support = _clip_support(model.spectral_support, -cut, cut)
        edges = None
        if model.sqrt_edges is not None:
            full = list(model.spectral_support)
            edges = []
            for a, b in support:
                # keep the singular-edge flags only where the window did
                # not move the endpoint
                flag = (False, False)
                for (fa, fb), fl in zip(full, model.sqrt_edges):
                    if fa == a or fb == b:
                        flag = (fl[0] and fa == a, fl[1] and fb == b)
                edges.append(flag)
        if support:
            v, e = integrate(integrand, support, quad, edges)
        else:
            v, e = 0.0, 0.0
        values.append(v / TWO_PI)
        total_err += e / TWO_PI
    diffs = [abs(b - a) for a, b in zip(values, values[1:])]
    floor = max(10.0 * quad.tol, 10.0 * total_err)
    if len(diffs) >= 3:
        d3, d2, d1 = diffs[-3], diffs[-2], diffs[-1]
        if d1 > floor and not (d1 <= d2 <= d3):
            raise NoConvergence(
                f"window differences do not shrink: {d3:.3e}, {d2:.3e}, {d1:.3e}"
            )
    limit = values[-1]
    if len(diffs) >= 2 and diffs[-2] > 0.0:
        q = diffs[-1] / diffs[-2]
        if 0.0 < q < 0.9:
            signed = values[-1] - values[-2]
            limit = values[-1] + signed * q / (1.0 - q)
    diag["window_currents"] = values
    diag["window_differences"] = diffs
    diag["assumes_empty_singular_continuous_spectrum"] = True
    return CurrentResult(limit, total_err, diag)
