"""qtflux: steady-state currents through 1D quantum scattering systems.

Computes Landauer-Buttiker-type steady currents for two concrete models
(a dissipative Schrodinger operator on an interval and a Dirac operator
with a point interaction), connected by a circle/line spectral bridge,
and cross-checked against a finite-dimensional unitary scattering engine
that evaluates the same current both as an Abel-regularized time average
and as a stationary per-fiber integral.
"""

from .cayley import (
    CircleFiberFamily,
    circle_current,
    circle_to_line,
    line_to_circle,
    transport_fibers,
)
from .dirac import (
    DiracFiberModel,
    DiracSpec,
    cross_section,
    s_matrix,
    weyl_function,
)
from .dirac import model_current as dirac_current
from .engine import (
    TorusModel,
    UnitaryPair,
    abel_current,
    cesaro_state,
    fiber_current,
    fiber_scattering,
    singular_part_test,
    spectral_pinch,
)
from .fiber import (
    CurrentResult,
    DensitySpec,
    FiberModel,
    fermi_dirac,
    fermi_dirac_difference,
    lb_current,
    lb_current_renormalized,
    truncated_current_limit,
)
from .quadrature import QuadratureSpec, integrate
from .schrodinger import (
    SampleSpec,
    SchrodingerFiberModel,
    characteristic_function,
    scattering_matrix,
    solve_elementary,
    transmission,
    wronskian,
)
from .schrodinger import model_current as schrodinger_current

__version__ = "0.1.0"

__all__ = [
    "CircleFiberFamily",
    "CurrentResult",
    "DensitySpec",
    "DiracFiberModel",
    "DiracSpec",
    "FiberModel",
    "QuadratureSpec",
    "SampleSpec",
    "SchrodingerFiberModel",
    "TorusModel",
    "UnitaryPair",
    "abel_current",
    "cesaro_state",
    "characteristic_function",
    "circle_current",
    "circle_to_line",
    "cross_section",
    "dirac_current",
    "fermi_dirac",
    "fermi_dirac_difference",
    "fiber_current",
    "fiber_scattering",
    "integrate",
    "lb_current",
    "lb_current_renormalized",
    "line_to_circle",
    "s_matrix",
    "scattering_matrix",
    "schrodinger_current",
    "singular_part_test",
    "solve_elementary",
    "spectral_pinch",
    "transmission",
    "transport_fibers",
    "truncated_current_limit",
    "weyl_function",
]
