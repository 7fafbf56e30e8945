"""End-to-end acceptance gate.

Each test prints one pass/fail line; together they certify the analytic
special cases, the structural identities, and the engine convergence
diagnostics at their stated tolerances and runtime budgets.
"""

import cmath
import math
import time

import numpy as np
import pytest

from qtflux.cayley import circle_current, line_to_circle, transport_fibers
from qtflux.dirac import DiracFiberModel, DiracSpec, s_matrix
from qtflux.dirac import model_current as dirac_current
from qtflux.engine import (
    TorusModel,
    abel_current,
    cesaro_state,
    fiber_current,
    fiber_scattering,
    ladder_admissible,
    singular_part_test,
    spectral_pinch,
)
from qtflux.fiber import TWO_PI, DensitySpec, lb_current
from qtflux.linops import op_norm, trace_norm
from qtflux.quadrature import QuadratureSpec, integrate
from qtflux.schrodinger import (
    SampleSpec,
    default_lambda_grid,
    scattering_matrix,
)
from qtflux.schrodinger import model_current as schrodinger_current

INF = math.inf
LEADS = DensitySpec(beta=1.0, mu=(0.5, -0.5))
LADDER_RUNGS = ((256, 0.9), (1024, 0.99), (4096, 0.999))


def report(num: int, name: str, ok: bool, detail: str = ""):
    tag = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"criterion {num:02d} {name}: {tag}{suffix}")
    assert ok, f"criterion {num} {name}{suffix}"


def random_piecewise_spec(rng):
    n_seg = rng.integers(2, 5)
    breaks = np.sort(rng.uniform(0.1, 0.9, n_seg - 1)).tolist()
    return SampleSpec(
        mass=(breaks, rng.uniform(0.2, 2.0, n_seg).tolist()),
        potential=(breaks, rng.uniform(-2.0, 6.0, n_seg).tolist()),
        kappa_a=rng.uniform(-1, 1) + 1j * rng.uniform(0.2, 1.5),
        kappa_b=rng.uniform(-1, 1) + 1j * rng.uniform(0.2, 1.5),
    )


def test_criterion_01_dirac_unitarity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    lams = np.concatenate(
        [np.linspace(-60.0, -1.001, 500), np.linspace(1.001, 60.0, 500)]
    )
    worst = 0.0
    for _ in range(20):
        spec = DiracSpec(
            1.0, rng.normal(), rng.normal(), rng.normal() + 1j * rng.normal()
        )
        for lam in lams:
            s = s_matrix(spec, float(lam))
            worst = max(
                worst, float(np.linalg.norm(s.conj().T @ s - np.eye(2), 2))
            )
    elapsed = time.perf_counter() - t0
    report(
        1,
        "dirac_unitarity",
        worst <= 1e-12 and elapsed < 1.0,
        f"max defect {worst:.2e}, {elapsed:.2f}s",
    )


def test_criterion_02_dirac_closed_form():
    t0 = time.perf_counter()
    diff, _ = integrate(
        LEADS.lead_difference, [(-INF, -1.0), (1.0, INF)], QuadratureSpec()
    )
    worst_rel = 0.0
    for r_mod in (0.1, 0.5, 1.0, 2.0, 10.0):
        j = dirac_current(DiracSpec(1.0, 0.0, 0.0, r_mod), LEADS).value
        closed = 2.0 * r_mod**2 / ((1.0 + r_mod**2) ** 2 * math.pi) * diff
        worst_rel = max(worst_rel, abs(j - closed) / abs(closed))
    mods = np.geomspace(0.05, 20.0, 50)
    vals = [
        abs(dirac_current(DiracSpec(1.0, 0.0, 0.0, float(m)), LEADS).value)
        for m in mods
    ]
    # the grid pairs m with 1/m; either central point counts as |r| = 1
    peak_at_one = abs(math.log(mods[int(np.argmax(vals))])) <= min(
        abs(math.log(m)) for m in mods
    ) + 1e-12
    elapsed = time.perf_counter() - t0
    report(
        2,
        "dirac_closed_form",
        worst_rel <= 1e-6 and peak_at_one and elapsed < 5.0,
        f"max rel {worst_rel:.2e}, peak at |r|=1: {peak_at_one}, {elapsed:.2f}s",
    )


def test_criterion_03_dirac_limits():
    j0 = dirac_current(DiracSpec(1.0, 0.0, 0.0, 0.0), LEADS).value
    j1 = dirac_current(DiracSpec(1.0, 0.0, 0.0, 1.0), LEADS).value
    j1000 = dirac_current(DiracSpec(1.0, 0.0, 0.0, 1000.0), LEADS).value
    ok = j0 == 0.0 and abs(j1000) <= 1e-4 * abs(j1)
    report(3, "dirac_limits", ok, f"J(0)={j0!r}, |J(1e3)/J(1)|={abs(j1000 / j1):.2e}")


def test_criterion_04_equilibrium_zero():
    t0 = time.perf_counter()
    eq = DensitySpec(kind="equilibrium", beta=1.0, mu=(0.3, 0.3))
    jd = dirac_current(DiracSpec(1.0, 0.4, -0.2, 0.8 + 0.3j), eq).value
    js = schrodinger_current(SampleSpec(), eq, "Q_a").value
    elapsed = time.perf_counter() - t0
    ok = abs(jd) <= 1e-10 and abs(js) <= 1e-10 and elapsed < 2.0
    report(
        4,
        "equilibrium_zero",
        ok,
        f"|J_dirac|={abs(jd):.2e}, |J_schrodinger|={abs(js):.2e}, {elapsed:.2f}s",
    )


def test_criterion_05_schrodinger_unitarity():
    rng = np.random.default_rng(5)
    specs = [SampleSpec(ode_tol=1e-10)] + [
        random_piecewise_spec(rng) for _ in range(5)
    ]
    worst = 0.0
    for spec in specs:
        for lam in default_lambda_grid(spec, 200):
            s = scattering_matrix(spec, float(lam))
            worst = max(worst, abs(abs(s[0, 0]) ** 2 + abs(s[0, 1]) ** 2 - 1.0))
    report(5, "schrodinger_unitarity", worst <= 1e-8, f"max defect {worst:.2e}")


def test_criterion_06_schrodinger_two_path():
    leads = DensitySpec(beta=1.0, mu=(0.6, -0.6))
    quad = QuadratureSpec()
    res_a = schrodinger_current(SampleSpec(), leads, "Q_a", quad)
    res_b = schrodinger_current(SampleSpec(), leads, "Q_b", quad)
    two_path = res_a.diagnostics["two_path_deviation"]
    completeness = abs(res_a.value + res_b.value)
    ok = two_path <= 1e-8 and completeness <= 1e-8 * (abs(res_a.value) + quad.tol)
    report(
        6,
        "schrodinger_two_path",
        ok,
        f"two-path {two_path:.2e}, completeness {completeness:.2e}",
    )


def test_criterion_07_current_bound():
    # trace-class densities (Gaussian occupations) so the trace integral
    # (1/2pi) int tr(rho) is finite; the closed form of the Gaussian
    # integral gives the bound without further quadrature
    rng = np.random.default_rng(7)
    spec = SampleSpec()
    ok = True
    detail = ""
    for _ in range(20):
        amp = rng.uniform(0.1, 1.0, 2)
        center = rng.uniform(-2.0, 6.0, 2)
        width = rng.uniform(0.5, 4.0, 2)

        def occupation(i):
            return lambda lam: amp[i] * math.exp(-((lam - center[i]) ** 2) / width[i])

        leads = DensitySpec(kind="tabulated", tables=(occupation(0), occupation(1)))
        j = schrodinger_current(spec, leads, "Q_a").value
        trace_int = float(np.sum(amp * np.sqrt(math.pi * width)))
        bound = trace_int / TWO_PI
        if not abs(j) < bound:
            ok = False
            detail = f"|J|={abs(j):.3e} vs bound {bound:.3e}"
            break
    report(7, "current_bound", ok, detail or "20 draws strictly inside the bound")


def test_criterion_08_cayley_bridge():
    spec = DiracSpec(1.0, 0.3, -0.2, 0.8 + 0.4j)
    model = DiracFiberModel(spec, DensitySpec(beta=1.5, mu=(0.7, -0.3)))
    line = lb_current(model).value
    circle = circle_current(transport_fibers(model)).value
    rel = abs(circle - line) / abs(line)

    functions = [
        lambda z: 1.0,
        lambda z: z.real,
        lambda z: z.imag**2,
        lambda z: abs(z + 1.0) ** 2 / 4.0,
        lambda z: math.exp(z.real),
        lambda z: 1.0 / (2.0 + z.real),
        lambda z: (z**2).real,
        lambda z: math.cos(3.0 * cmath.phase(z)),
        lambda z: math.sin(cmath.phase(z)) ** 2,
        lambda z: abs(z - 1j) ** 2 * z.real,
    ]
    theta0 = 3.0
    lam0 = math.tan(0.5 * theta0)
    qspec = QuadratureSpec(tol=1e-12)
    worst = 0.0
    for g in functions:
        arc, _ = integrate(lambda th: g(cmath.exp(1j * th)), [(-theta0, theta0)], qspec)
        lin, _ = integrate(
            lambda lam: g(line_to_circle(lam)) * 2.0 / (1.0 + lam * lam),
            [(-lam0, lam0)],
            qspec,
        )
        worst = max(worst, abs(arc - lin) / max(1.0, abs(arc)))
    ok = rel <= 1e-6 and worst <= 1e-10
    report(
        8,
        "cayley_bridge",
        ok,
        f"current rel {rel:.2e}, measure identity {worst:.2e}",
    )


def test_criterion_09_engine_ladder():
    t0 = time.perf_counter()
    results = []
    seed = 0
    while len(results) < 5 and seed < 64:
        coarse = TorusModel.random_rank2(256, 2, seed=seed, strength=1.3, modes=1)
        if not ladder_admissible(coarse):
            seed += 1
            continue
        diffs = []
        j_fiber = 0.0
        for big_n, r in LADDER_RUNGS:
            model = TorusModel.random_rank2(
                big_n, 2, seed=seed, strength=1.3, modes=1
            )
            j_abel = abel_current(model, r, series_eps=1e-2)
            j_fiber = fiber_current(model).value
            diffs.append(abs(j_abel - j_fiber))
        monotone = diffs[0] > diffs[1] > diffs[2]
        if abs(j_fiber) > 1e-8:
            final_ok = diffs[2] <= 0.05 * abs(j_fiber)
        else:
            final_ok = diffs[2] <= 1e-8
        results.append((seed, monotone, final_ok, diffs[2] / abs(j_fiber)))
        seed += 1
    elapsed = time.perf_counter() - t0
    ok = (
        len(results) == 5
        and all(m and f for _, m, f, _ in results)
        and elapsed < 60.0
    )
    detail = (
        "seeds "
        + ", ".join(f"{s}:{rel:.1%}" for s, _, _, rel in results)
        + f", {elapsed:.1f}s"
    )
    report(9, "engine_ladder", ok, detail)


def test_criterion_10_singular_part():
    pp = (np.array([1.0]), np.array([1.0]), np.array([1.0]))
    rels = []
    diffs = []
    for big_n, r in LADDER_RUNGS:
        model = TorusModel.random_rank2(big_n, 2, seed=0, strength=1.3, modes=1)
        j_with, j_without = singular_part_test(model, pp, r, series_eps=1e-2)
        diffs.append(abs(j_with - j_without))
        rels.append(abs(j_with - j_without) / abs(j_without))
    ok = rels[1] <= 0.05 and diffs[0] > diffs[1] > diffs[2]
    report(
        10,
        "singular_part",
        ok,
        "rels " + ", ".join(f"{r:.2%}" for r in rels),
    )


def test_criterion_11_trace_bound():
    model = TorusModel.random_rank2(4096, 2, seed=0, strength=1.3, modes=1)
    r = 1.0 - 4.0 * TWO_PI / model.big_n
    total = math.fsum(
        trace_norm(fiber_scattering(model, k, r)[0]) for k in range(model.big_n)
    )
    lhs = (TWO_PI / model.big_n) * total
    rhs = 1.1 * model.v_trace_norm()
    report(11, "trace_bound", lhs <= rhs, f"ratio {lhs / model.v_trace_norm():.3f}")


def test_criterion_12_cesaro():
    rng = np.random.default_rng(12)
    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    h = 0.5 * (a + a.conj().T)
    b = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    rho0 = b @ b.conj().T
    rho0 /= np.trace(rho0).real
    pinch = spectral_pinch(h, rho0)
    gap = float(np.min(np.diff(np.linalg.eigvalsh(h))))
    worst = 0.0
    for t in (1e2, 1e4, 1e6):
        err = op_norm(cesaro_state(h, rho0, t) - pinch)
        worst = max(worst, err * t * gap / 10.0)
    limit = cesaro_state(h, rho0, math.inf)
    comm = op_norm(h @ limit - limit @ h)
    ok = worst <= 1.0 and comm <= 1e-10
    report(
        12,
        "cesaro_steady_state",
        ok,
        f"bound fraction {worst:.2f}, commutator {comm:.2e}",
    )
