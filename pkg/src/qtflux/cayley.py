"""Bridge between the energy line and the unit circle.

The identification is zeta = exp(2i*arctan(lam)), lam = tan(arg(zeta)/2)
with arg in (-pi, pi); zeta = -1 (lam = +/-inf) is excluded.  Fibers are
relabeled, never resampled; the density picks up the weight (1 + lam^2)
so that circle-side integration against the Haar measure (total mass
2*pi) reproduces the line-side current.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fiber import TWO_PI, CurrentResult, FiberModel
from .quadrature import QuadratureSpec, integrate

__all__ = [
    "DomainExcluded",
    "line_to_circle",
    "circle_to_line",
    "angle_of_energy",
    "energy_of_angle",
    "CircleFiberFamily",
    "transport_fibers",
    "circle_current",
]


class DomainExcluded(Exception):
    """Evaluation requested at zeta = -1 (the image of lam = +/-inf)."""


def line_to_circle(lam: float) -> complex:
    """Map a real energy to exp(2i*arctan(lam)) on the unit circle.

    Uses the half-angle components cos(a) = 1/sqrt(1+lam^2),
    sin(a) = lam/sqrt(1+lam^2), so the result has unit modulus to
    machine precision without exponentiating a rounded angle.
    """
    if not math.isfinite(lam):
        raise ValueError("lam must be finite")
    c = 1.0 / math.hypot(1.0, lam)
    cos_a = c
    sin_a = lam * c
    return complex(cos_a * cos_a - sin_a * sin_a, 2.0 * sin_a * cos_a)


def circle_to_line(zeta: complex) -> float:
    """Inverse map tan(arg(zeta)/2); raises DomainExcluded at zeta = -1.

    Branch selection avoids cancellation: for Re zeta >= 0 use
    sin/(1+cos), otherwise (1-cos)/sin.
    """
    re, im = zeta.real, zeta.imag
    if re >= 0.0:
        return im / (1.0 + re)
    if im == 0.0:
        raise DomainExcluded("zeta = -1 corresponds to lam = +/-inf")
    return (1.0 - re) / im


def angle_of_energy(lam: float) -> float:
    """arg(line_to_circle(lam)) = 2*arctan(lam), in (-pi, pi)."""
    return 2.0 * math.atan(lam)


def energy_of_angle(theta: float) -> float:
    """Inverse of angle_of_energy on (-pi, pi)."""
    if not -math.pi < theta < math.pi:
        raise DomainExcluded(f"angle {theta:g} outside (-pi, pi)")
    return math.tan(0.5 * theta)


@dataclass
class CircleFiberFamily:
    """Circle-side fiber data pulled back from a line-side model.

    The density carries the transported weight (1 + lam^2), so the
    circle-side current (1/(4*pi)) * integral tr{rho (Q - S*QS)} dnu
    equals the line-side Landauer-Buttiker current.
    """

    line_model: FiberModel

    def _lam(self, zeta: complex) -> float:
        return circle_to_line(zeta)

    def s_matrix(self, zeta: complex) -> np.ndarray:
        return self.line_model.s_matrix(self._lam(zeta))

    def charge(self, zeta: complex) -> np.ndarray:
        return self.line_model.charge(self._lam(zeta))

    def density(self, zeta: complex) -> np.ndarray:
        lam = self._lam(zeta)
        return (1.0 + lam * lam) * self.line_model.density(lam)

    def support_angles(self) -> list[tuple[float, float]]:
        """Image of the line support as arcs (theta_lo, theta_hi)."""
        arcs = []
        for lo, hi in self.line_model.spectral_support:
            a = -math.pi if math.isinf(lo) else angle_of_energy(lo)
            b = math.pi if math.isinf(hi) else angle_of_energy(hi)
            arcs.append((a, b))
        return arcs


def transport_fibers(line_model: FiberModel) -> CircleFiberFamily:
    """Pull a line-side fiber model back to the circle picture."""
    return CircleFiberFamily(line_model)


def circle_current(
    family: CircleFiberFamily, quad: QuadratureSpec | None = None
) -> CurrentResult:
    """Evaluate the circle-picture current by quadrature in the angle.

    J = (1/(4*pi)) * integral over arcs of
        tr{ rho(e^{i*theta}) (Q - S* Q S)(e^{i*theta}) } dtheta.
    """
    if quad is None:
        quad = QuadratureSpec()
    diag = {"unitarity_residual_max": 0.0}

    def integrand(theta: float) -> float:
        zeta = complex(math.cos(theta), math.sin(theta))
        s = family.s_matrix(zeta)
        q = family.charge(zeta)
        rho = family.density(zeta)
        n = s.shape[0]
        res = float(np.linalg.norm(s.conj().T @ s - np.eye(n), 2))
        if res > diag["unitarity_residual_max"]:
            diag["unitarity_residual_max"] = res
        return float(np.real(np.trace(rho @ (q - s.conj().T @ q @ s))))

    arcs = family.support_angles()
    edges = None
    if family.line_model.sqrt_edges is not None:
        edges = []
        for (lo, hi), fl in zip(
            family.line_model.spectral_support, family.line_model.sqrt_edges
        ):
            edges.append((fl[0] and math.isfinite(lo), fl[1] and math.isfinite(hi)))
    value, err = integrate(integrand, arcs, quad, edges)
    return CurrentResult(value / (2.0 * TWO_PI), err / (2.0 * TWO_PI), diag)
