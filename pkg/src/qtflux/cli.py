"""Command-line front end: transmission tables, currents, sweeps, verify.

Configuration is a TOML file with exactly one model section
(``[schrodinger]`` or ``[dirac]``) plus optional ``[density]``,
``[charge]``, ``[quadrature]``, ``[grid]``, ``[sweep]`` and ``[output]``
sections.  Complex values are written as two-element arrays [re, im].
CSV output always carries the columns energy,value,residual,error_estimate;
JSON output round-trips bit-exactly through the standard library encoder.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version-dependent import
    import tomli as tomllib

CSV_COLUMNS = ("energy", "value", "residual", "error_estimate")


class ConfigError(Exception):
    """Malformed or inconsistent run configuration."""


def _set_thread_env(threads: int | None):
    """Pin BLAS/OpenMP pools before numpy gets imported by the library."""
    if threads is None:
        env = os.environ.get("QTFLUX_THREADS")
        if env is None:
            return
        try:
            threads = int(env)
        except ValueError as exc:
            raise ConfigError(f"QTFLUX_THREADS={env!r} is not an integer") from exc
    if threads < 1:
        raise ConfigError("thread count must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(threads))


# ---------------------------------------------------------------------------
# configuration parsing


def _as_complex(value, key: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if (
        isinstance(value, list)
        and len(value) == 2
        and all(isinstance(x, (int, float)) for x in value)
    ):
        return complex(value[0], value[1])
    raise ConfigError(f"key {key!r}: expected number or [re, im], got {value!r}")


def _require(table: dict, key: str, section: str):
    if key not in table:
        raise ConfigError(f"section [{section}] is missing key {key!r}")
    return table[key]


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid TOML: {exc}") from exc
    models = [name for name in ("schrodinger", "dirac") if name in raw]
    if len(models) != 1:
        raise ConfigError(
            f"config must contain exactly one model section "
            f"([schrodinger] or [dirac]); found {models or 'none'}"
        )
    raw["_model"] = models[0]
    return raw


def _build_density(cfg: dict):
    from .fiber import DensitySpec

    sec = cfg.get("density", {})
    kind = sec.get("kind", "fermi_dirac_per_lead")
    mu = sec.get("mu", [0.0, 0.0])
    if isinstance(mu, (int, float)):
        mu = [float(mu), float(mu)]
    try:
        return DensitySpec(kind=kind, beta=float(sec.get("beta", 1.0)), mu=tuple(mu))
    except ValueError as exc:
        raise ConfigError(f"section [density]: {exc}") from exc


def _build_quad(cfg: dict):
    from .quadrature import QuadratureSpec

    sec = cfg.get("quadrature", {})
    known = {"tol", "tail_eps", "max_range", "max_panels"}
    bad = set(sec) - known
    if bad:
        raise ConfigError(f"section [quadrature]: unknown keys {sorted(bad)}")
    kwargs = {k: (int(v) if k == "max_panels" else float(v)) for k, v in sec.items()}
    return QuadratureSpec(**kwargs)


def _build_dirac(cfg: dict):
    from .dirac import DiracSpec

    sec = cfg["dirac"]
    try:
        return DiracSpec(
            a=float(_require(sec, "a", "dirac")),
            b_minus=float(sec.get("b_minus", 0.0)),
            b_plus=float(sec.get("b_plus", 0.0)),
            r=_as_complex(sec.get("r", 0.0), "dirac.r"),
        )
    except ValueError as exc:
        raise ConfigError(f"section [dirac]: {exc}") from exc


def _profile(value, key: str):
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, dict) and "breaks" in value and "values" in value:
        return (list(value["breaks"]), list(value["values"]))
    raise ConfigError(
        f"key {key!r}: expected a number or a table with 'breaks' and 'values'"
    )


def _build_schrodinger(cfg: dict):
    from .schrodinger import SampleSpec

    sec = cfg["schrodinger"]
    try:
        return SampleSpec(
            a=float(sec.get("a", 0.0)),
            b=float(sec.get("b", 1.0)),
            mass=_profile(sec.get("mass", 0.5), "schrodinger.mass"),
            potential=_profile(sec.get("potential", 0.0), "schrodinger.potential"),
            kappa_a=_as_complex(sec.get("kappa_a", [0.0, 0.5]), "schrodinger.kappa_a"),
            kappa_b=_as_complex(sec.get("kappa_b", [0.0, 0.5]), "schrodinger.kappa_b"),
            ode_tol=float(sec.get("ode_tol", 1e-10)),
        )
    except ValueError as exc:
        raise ConfigError(f"section [schrodinger]: {exc}") from exc


def _energy_grid(cfg: dict, model_spec):
    import numpy as np

    sec = cfg.get("grid", {})
    points = int(sec.get("points", 200))
    scale = sec.get("scale", "linear")
    if cfg["_model"] == "dirac":
        a = model_spec.a
        lo = float(sec.get("from", a * 1.001))
        hi = float(sec.get("to", a + 10.0))
        if lo <= a:
            raise ConfigError("[grid] for dirac must start outside the gap (from > a)")
    else:
        lo = float(sec.get("from", 0.01))
        hi = float(sec.get("to", 50.0))
    if hi <= lo:
        raise ConfigError("[grid] needs from < to")
    if scale == "linear":
        return np.linspace(lo, hi, points)
    if scale == "log":
        if lo <= 0:
            raise ConfigError("[grid] log scale needs from > 0")
        return np.geomspace(lo, hi, points)
    raise ConfigError(f"[grid] unknown scale {scale!r}")


# ---------------------------------------------------------------------------
# output


def _write_rows(rows: list[dict], fmt: str, path: str | None, meta: dict):
    if fmt == "csv":
        out = sys.stdout if path is None else open(path, "w", newline="")
        try:
            writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row.get(k, "") for k in CSV_COLUMNS})
        finally:
            if path is not None:
                out.close()
    elif fmt == "json":
        doc = dict(meta)
        doc["rows"] = rows
        text = json.dumps(doc, indent=2, sort_keys=True)
        if path is None:
            print(text)
        else:
            with open(path, "w") as fh:
                fh.write(text + "\n")
    else:
        raise ConfigError(f"unknown output format {fmt!r}")


def _output_options(cfg: dict, args) -> tuple[str, str | None]:
    sec = cfg.get("output", {})
    fmt = args.format or sec.get("format", "csv")
    path = args.output or sec.get("path")
    return fmt, path


# ---------------------------------------------------------------------------
# commands


def cmd_transmission(cfg: dict, args) -> int:
    import numpy as np

    if cfg["_model"] == "dirac":
        from .dirac import DiracFiberModel, cross_section

        spec = _build_dirac(cfg)
        model = DiracFiberModel(spec, _build_density(cfg))

        def sigma(lam):
            return cross_section(spec, lam)

        def smat(lam):
            return model.s_matrix(lam)

    else:
        from .schrodinger import scattering_matrix, transmission

        spec = _build_schrodinger(cfg)

        def sigma(lam):
            return transmission(spec, lam)

        def smat(lam):
            return scattering_matrix(spec, lam)

    rows = []
    for lam in _energy_grid(cfg, spec):
        s = smat(float(lam))
        resid = float(np.linalg.norm(s.conj().T @ s - np.eye(s.shape[0]), 2))
        rows.append(
            {
                "energy": float(lam),
                "value": sigma(float(lam)),
                "residual": resid,
                "error_estimate": 0.0,
            }
        )
    fmt, path = _output_options(cfg, args)
    _write_rows(rows, fmt, path, {"command": "transmission", "model": cfg["_model"]})
    return 0


def _run_current(cfg: dict):
    density = _build_density(cfg)
    quad = _build_quad(cfg)
    charge = cfg.get("charge", {})
    if cfg["_model"] == "dirac":
        from .dirac import model_current

        lead = int(charge.get("lead", 0))
        if lead not in (0, 1):
            raise ConfigError("[charge] lead must be 0 (Q_minus) or 1 (Q_plus)")
        return model_current(_build_dirac(cfg), density, quad, charge_lead=lead)
    from .schrodinger import model_current

    which = charge.get("which", "Q_a")
    if which not in ("Q_a", "Q_b"):
        raise ConfigError("[charge] which must be 'Q_a' or 'Q_b'")
    return model_current(_build_schrodinger(cfg), density, which, quad)


def cmd_current(cfg: dict, args) -> int:
    result = _run_current(cfg)
    row = {
        "energy": "",
        "value": result.value,
        "residual": result.diagnostics.get("unitarity_residual_max", 0.0),
        "error_estimate": result.error_estimate,
    }
    meta = {
        "command": "current",
        "model": cfg["_model"],
        "diagnostics": {
            k: v for k, v in result.diagnostics.items() if isinstance(v, (int, float, bool))
        },
        "config": {k: v for k, v in cfg.items() if not k.startswith("_")},
    }
    fmt, path = _output_options(cfg, args)
    _write_rows([row], fmt, path, meta)
    return 0


def _resolve_sweep_target(cfg: dict, dotted: str):
    parts = dotted.split(".")
    table = cfg
    for part in parts[:-1]:
        if not isinstance(table, dict) or part not in table:
            raise ConfigError(f"[sweep] parameter {dotted!r} does not exist")
        table = table[part]
    leaf = parts[-1]
    if not isinstance(table, dict) or leaf not in table:
        raise ConfigError(f"[sweep] parameter {dotted!r} does not exist")
    value = table[leaf]
    is_complex_pair = (
        isinstance(value, list)
        and len(value) == 2
        and all(isinstance(x, (int, float)) for x in value)
    )
    if not isinstance(value, (int, float)) and not is_complex_pair:
        raise ConfigError(f"[sweep] parameter {dotted!r} is not numeric")
    return table, leaf, is_complex_pair


def cmd_sweep(cfg: dict, args) -> int:
    import numpy as np

    sec = cfg.get("sweep")
    if not sec:
        raise ConfigError("sweep command needs a [sweep] section")
    dotted = _require(sec, "parameter", "sweep")
    lo = float(_require(sec, "from", "sweep"))
    hi = float(_require(sec, "to", "sweep"))
    steps = int(sec.get("steps", 10))
    scale = sec.get("scale", "linear")
    if steps < 2:
        raise ConfigError("[sweep] needs steps >= 2")
    if scale == "linear":
        values = np.linspace(lo, hi, steps)
    elif scale == "log":
        if lo <= 0:
            raise ConfigError("[sweep] log scale needs from > 0")
        values = np.geomspace(lo, hi, steps)
    else:
        raise ConfigError(f"[sweep] unknown scale {scale!r}")
    table, leaf, is_pair = _resolve_sweep_target(cfg, dotted)
    rows = []
    for val in values:
        table[leaf] = [float(val), 0.0] if is_pair else float(val)
        result = _run_current(cfg)
        rows.append(
            {
                "energy": float(val),
                "value": result.value,
                "residual": result.diagnostics.get("unitarity_residual_max", 0.0),
                "error_estimate": result.error_estimate,
            }
        )
    fmt, path = _output_options(cfg, args)
    _write_rows(
        rows,
        fmt,
        path,
        {"command": "sweep", "model": cfg["_model"], "parameter": dotted},
    )
    return 0


# ---------------------------------------------------------------------------
# verify


def _verify_checks(level: str, seed: int):
    """Yield (name, passed, detail) tuples for the requested level."""
    import numpy as np

    from .cayley import circle_to_line, line_to_circle
    from .dirac import DiracSpec, model_current, s_matrix
    from .engine import TorusModel, abel_current, fiber_current
    from .fiber import DensitySpec
    from .quadrature import QuadratureSpec, integrate
    from .schrodinger import SampleSpec, scattering_matrix

    rng = np.random.default_rng(seed)

    val, _ = integrate(lambda x: math.exp(-x * x), [(-math.inf, math.inf)],
                       QuadratureSpec())
    yield "quadrature_gaussian", abs(val - math.sqrt(math.pi)) < 1e-12, f"{val!r}"

    lams = np.concatenate([np.linspace(-50, -1.01, 100), np.linspace(1.01, 50, 100)])
    worst = 0.0
    for _ in range(5):
        spec = DiracSpec(1.0, rng.normal(), rng.normal(),
                         rng.normal() + 1j * rng.normal())
        for lam in lams:
            s = s_matrix(spec, float(lam))
            worst = max(worst, float(np.linalg.norm(s.conj().T @ s - np.eye(2), 2)))
    yield "dirac_unitarity", worst <= 1e-12, f"max defect {worst:.3e}"

    leads = DensitySpec(beta=1.0, mu=(0.5, -0.5))
    spec = DiracSpec(1.0, 0.0, 0.0, 1.0)
    res = model_current(spec, leads)
    closed = (2.0 / (4.0 * math.pi)) * integrate(
        leads.lead_difference, spec_support(spec), QuadratureSpec()
    )[0]
    rel = abs(res.value - closed) / abs(closed)
    yield "dirac_closed_form", rel <= 1e-6, f"rel {rel:.3e}"

    eq = model_current(spec, DensitySpec(kind="equilibrium", beta=1.0, mu=(0.2, 0.2)))
    yield "dirac_equilibrium_zero", abs(eq.value) <= 1e-10, f"J {eq.value:.3e}"

    lam_round = max(
        abs(circle_to_line(line_to_circle(x)) - x) / max(abs(x), 1.0)
        for x in [-1e6, -3.7, 0.0, 0.2, 5.0, 1e6]
    )
    yield "cayley_roundtrip", lam_round <= 1e-14, f"max rel {lam_round:.3e}"

    sspec = SampleSpec()
    worst_s = 0.0
    for lam in np.linspace(-4.0, 40.0, 25):
        s = scattering_matrix(sspec, float(lam))
        worst_s = max(worst_s, float(np.linalg.norm(s.conj().T @ s - np.eye(2), 2)))
    yield "schrodinger_unitarity", worst_s <= 1e-8, f"max defect {worst_s:.3e}"

    model = TorusModel.random_rank2(128, 2, seed=seed)
    model.xv = np.zeros_like(model.xv)
    j0 = abel_current(model, 0.9)
    yield "engine_v_zero", j0 == 0.0, f"J {j0!r}"

    if level == "full":
        from .engine import ladder_admissible

        diffs = []
        for big_n, r in [(256, 0.9), (1024, 0.99), (4096, 0.999)]:
            m = TorusModel.random_rank2(big_n, 2, seed=seed,
                                        strength=1.3, modes=1)
            ja = abel_current(m, r, series_eps=1e-2)
            jf = fiber_current(m).value
            diffs.append(abs(ja - jf))
        decreasing = diffs[0] > diffs[1] > diffs[2]
        admissible = ladder_admissible(
            TorusModel.random_rank2(256, 2, seed=seed, strength=1.3, modes=1)
        )
        detail = "diffs " + ", ".join(f"{d:.3e}" for d in diffs)
        if admissible:
            yield "engine_ladder", decreasing, detail
        else:
            yield "engine_ladder", True, "seed not admissible for the ladder; skipped"


def spec_support(spec):
    return [(-math.inf, -spec.a), (spec.a, math.inf)]


def cmd_verify(args) -> int:
    t0 = time.time()
    checks = []
    for name, passed, detail in _verify_checks(args.level, args.seed):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})
    report = {
        "level": args.level,
        "seed": args.seed,
        "elapsed_s": time.time() - t0,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if report["passed"] else 1


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qtflux",
        description="Steady-state currents through 1D quantum scattering systems.",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS/OpenMP thread cap (env QTFLUX_THREADS as fallback)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("transmission", True),
        ("current", True),
        ("sweep", True),
        ("verify", False),
    ):
        cmd = sub.add_parser(name)
        if needs_config:
            cmd.add_argument("--config", required=True)
            cmd.add_argument("--format", choices=("csv", "json"), default=None)
        cmd.add_argument("--output", default=None)
    verify = sub.choices["verify"]
    verify.add_argument("--level", choices=("fast", "full"), default="fast")
    verify.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _set_thread_env(args.threads)
        if args.command == "verify":
            return cmd_verify(args)
        cfg = load_config(args.config)
        if args.command == "transmission":
            return cmd_transmission(cfg, args)
        if args.command == "current":
            return cmd_current(cfg, args)
        return cmd_sweep(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
