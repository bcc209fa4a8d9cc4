"""Command-line entry point: ``perdisp <command> --config <path> [--out DIR] [--threads N]``.

Every command writes its CSV/JSON artifacts plus ``summary.json`` into the
output directory.  Exit status: 0 success, 2 configuration error, 3
numerical failure or a breached tolerance.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import bloch, evolve, mo_map, potential, propagator
from .config import RunConfig, parse_config
from .errors import ConfigError, NumericalFailure

COMMANDS = ("bands", "edges", "mo", "delta", "partition", "constant", "propagate",
            "decay", "dnls", "vdc-check", "selftest")


# ---------------------------------------------------------------------------
# serialisation


def fmt(x) -> str:
    """17 significant digits, lowercase scientific notation."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".16e")


def _json(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}{_json(str(k))}: {_json(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        obj = list(obj)
        if not obj:
            return "[]"
        return "[" + ", ".join(_json(v, indent + 1) for v in obj) + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    x = float(obj)
    return fmt(x) if math.isfinite(x) else '"' + fmt(x) + '"'


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_json(path: Path, obj) -> None:
    _atomic_write(path, _json(obj) + "\n")


# ---------------------------------------------------------------------------
# commands; each returns (scalars, passed)


class Context:
    def __init__(self, cfg: RunConfig, out: Path, base: Path | None):
        self.cfg = cfg
        self.out = out
        self.base = base
        self.V = cfg.V
        self._field = None
        self.warnings: list[str] = []

    @property
    def field(self) -> bloch.BandField:
        if self._field is None:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                self._field = bloch.band_path(self.V, self.cfg.k_grid)
            self.warnings += [str(w.message) for w in caught]
        return self._field

    def packet(self) -> propagator.WavePacket:
        return self.cfg.initial.packet(self.base)

    def window(self, psi, T) -> evolve.LatticeWindow | None:
        cfg = self.cfg
        if cfg.boundary == "dirichlet" and cfg.lattice_radius is not None:
            return evolve.LatticeWindow.dirichlet(cfg.lattice_radius)
        if cfg.boundary == "ring" and cfg.ring_cells is not None:
            return evolve.LatticeWindow.ring(self.V.period, cfg.ring_cells)
        return evolve.LatticeWindow.for_run(self.V, psi, T, cfg.boundary, cfg.margin)


def cmd_bands(ctx: Context):
    f = ctx.field
    rows = []
    for i, k in enumerate(f.grid):
        for j in range(f.period):
            rows.append((k, j + 1, f.energies[i, j], f.e1[i, j], f.e2[i, j], f.e3[i, j]))
    write_csv(ctx.out / "bands.csv", ["k", "j", "E", "E1", "E2", "E3"], rows)
    return {"period": f.period, "n_k": f.n_k, "min_overlap": f.min_overlap,
            "max_velocity": f.max_velocity}, True


def cmd_edges(ctx: Context):
    pt = potential.spectral_portrait(ctx.V)
    rows = [(i + 1, lam, int(s)) for i, (lam, s) in enumerate(zip(pt.edges, pt.edge_signs))]
    write_csv(ctx.out / "edges.csv", ["index", "lambda", "delta_sign"], rows)
    return {"edges": pt.edges, "critical_points": pt.critical,
            "gap_open": [bool(g) for g in pt.gap_open]}, True


def cmd_mo(ctx: Context):
    data = mo_map.mo_boundary_data(ctx.V, ctx.cfg.mo_samples)
    rows = zip(data.band, data.x, data.theta, data.theta1, data.theta2, data.theta3)
    write_csv(ctx.out / "mo.csv", ["band", "x", "theta", "theta1", "theta2", "theta3"], rows)
    ok = bool(np.all(data.theta1 > 0) and np.all(data.theta3 > 0))
    return {"inflection_points": data.inflection, "min_theta1": float(data.theta1.min()),
            "min_theta3": float(data.theta3.min())}, ok


def cmd_delta(ctx: Context):
    d, j, k = bloch.delta_V(ctx.V, ctx.field, detail=True)
    return {"delta": d, "argmin_band": j, "argmin_k": k}, True


def cmd_partition(ctx: Context):
    d = bloch.delta_V(ctx.V, ctx.field)
    part = propagator.stationary_partition(ctx.V, ctx.field, d)
    rows = [(j, lab, a, b) for j in range(1, part.period + 1)
            for a, b, lab in part.intervals[j - 1]]
    write_csv(ctx.out / "partition.csv", ["band", "set", "k_left", "k_right"], rows)
    return {"delta": d, "counts": part.counts}, True


def cmd_constant(ctx: Context):
    dc = propagator.dispersive_constant(ctx.V, ctx.field)
    ctx.warnings += dc.warnings
    body = {"delta": dc.delta, "C_V": dc.C_V, "M_V": dc.M_V, "counts": dc.counts,
            "sobolev_max": dc.sobolev_max}
    write_json(ctx.out / "constant.json", body)
    return dict(body, delta_used=dc.delta_used, C_Vj=dc.C_Vj, C_Vj_sum=dc.C_Vj_sum,
                sobolev=dc.sobolev), dc.M_V >= 2 ** (1 / 6)


def cmd_propagate(ctx: Context):
    psi = ctx.packet()
    times = ctx.cfg.times.values()
    T = float(times.max())
    if ctx.cfg.targets is not None:
        targets = np.array(ctx.cfg.targets)
    else:
        r = evolve.LatticeWindow.reach(T, propagator.max_velocity(ctx.V), ctx.cfg.margin)
        targets = np.arange(psi.first - r, psi.last + r + 1)
    oracle_window = evolve.LatticeWindow.for_run(ctx.V, psi, T, "dirichlet", 2 * ctx.cfg.margin)
    lattice = evolve.linear_evolve(ctx.V, psi, times, oracle_window)
    rows, worst, mass_err = [], 0.0, 0.0
    for t, ref in zip(times, lattice):
        vals = propagator.propagator_entries(ctx.V, psi, targets, float(t))
        refv = np.array([ref.value_at(int(n)) for n in targets])
        worst = max(worst, float(np.max(np.abs(vals - refv))))
        if ctx.cfg.targets is None:
            mass_err = max(mass_err, abs(float(np.sum(np.abs(vals) ** 2)) - psi.l2 ** 2))
        rows += [(t, n, v.real, v.imag, abs(v)) for n, v in zip(targets, vals)]
    write_csv(ctx.out / "propagate.csv", ["t", "n", "re", "im", "abs"], rows)
    tol = ctx.cfg.tolerances.oracle
    scalars = {"max_oracle_deviation": worst, "oracle_tolerance": tol}
    if ctx.cfg.targets is None:
        scalars["max_unitarity_deviation"] = mass_err
    return scalars, worst <= tol and mass_err <= tol


def cmd_decay(ctx: Context):
    psi = ctx.packet()
    times = ctx.cfg.times.values()
    window = ctx.window(psi, float(times.max()))
    fw = tuple(ctx.cfg.fit_window) if ctx.cfg.fit_window else (10.0, None)
    series = evolve.sup_norm_decay(ctx.V, psi, times, window, ctx.cfg.boundary, ctx.cfg.margin, fw)
    ratio = series.ratio
    write_csv(ctx.out / "decay.csv", ["t", "sup_norm", "ratio"], zip(times, series.sup_norms, ratio))
    dc = propagator.dispersive_constant(ctx.V, ctx.field)
    scalars = {"alpha": series.alpha, "alpha_stderr": series.stderr,
               "max_ratio": float(ratio.max()), "M_V": dc.M_V,
               "bound_holds": bool(ratio.max() <= dc.M_V)}
    if series.alpha is None:
        ctx.warnings.append("fewer than 10 samples in the fit window; no exponent fitted")
    return scalars, scalars["bound_holds"]


def cmd_dnls(ctx: Context):
    cfg = ctx.cfg
    psi = ctx.packet()
    times = cfg.times.values()
    dt_max = evolve.max_dnls_step(ctx.V, psi, cfg.sigma)
    dt = cfg.dt if cfg.dt is not None else min(0.02, dt_max)
    window = ctx.window(psi, float(times.max()))
    run = evolve.dnls_evolve(ctx.V, psi, cfg.sigma, cfg.sign, dt, times, window,
                             cfg.boundary, cfg.margin)
    sup, l2 = run.sup_norms, run.l2_norms
    write_csv(ctx.out / "dnls.csv", ["t", "sup_norm", "l2_norm"], zip(times, sup, l2))
    drift = float(np.max(np.abs(l2 - psi.l2)))
    ratio = sup * (1 + times ** 2) ** (1 / 6)
    return {"dt": dt, "l2_drift": drift, "max_ratio": float(ratio.max()),
            "max_local_error": run.max_local_error}, drift <= cfg.tolerances.unitarity


def closed_form_vdc_cases():
    """Two phases with known integrals: x^3 on [0, 1] and x^2/2 on [-1, 1]."""
    one = lambda x: np.ones_like(np.asarray(x, dtype=float))
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    return [
        ("cubic", lambda x: x ** 3, 3, 6.0, one, zero, 1000.0, 0.0, 1.0),
        ("quadratic", lambda x: x ** 2 / 2, 2, 1.0, one, zero, 100.0, -1.0, 1.0),
    ]


def cmd_vdc(ctx: Context):
    rows, ok = [], True
    for name, phi, kappa, d, psi, eta, lam, a, b in closed_form_vdc_cases():
        res = propagator.vdc_bound_check(phi, kappa, d, psi, eta, lam, a, b, variation=0.0)
        rows.append((name, 0, f"K{kappa}", lam, res.lhs, res.rhs, res.passed))
        ok &= res.passed
    f = ctx.field
    d = bloch.delta_V(ctx.V, f)
    part = propagator.stationary_partition(ctx.V, f, d)
    for lam in ctx.cfg.vdc_lambdas:
        for j, lab, res in propagator.band_phase_checks(ctx.V, f, part, lam):
            rows.append(("band", j, lab, lam, res.lhs, res.rhs, res.passed))
            ok &= res.passed
    write_csv(ctx.out / "vdc.csv", ["case", "band", "set", "lambda", "lhs", "rhs", "pass"], rows)
    return {"checks": len(rows), "failures": sum(1 for r in rows if not r[-1]),
            "C_2": propagator.van_der_corput_constant(2),
            "C_3": propagator.van_der_corput_constant(3)}, ok


def cmd_selftest(ctx: Context):
    from .selftest import run_selftest
    rows = run_selftest(ctx.V, ctx.cfg.seed)
    write_csv(ctx.out / "selftest.csv", ["check", "value", "tolerance", "pass"], rows)
    cmd_edges(ctx)
    cmd_bands(ctx)
    failures = [r[0] for r in rows if not r[3]]
    return {"checks": len(rows), "failures": failures}, not failures


HANDLERS = {
    "bands": cmd_bands, "edges": cmd_edges, "mo": cmd_mo, "delta": cmd_delta,
    "partition": cmd_partition, "constant": cmd_constant, "propagate": cmd_propagate,
    "decay": cmd_decay, "dnls": cmd_dnls, "vdc-check": cmd_vdc, "selftest": cmd_selftest,
}


def run_command(name: str, cfg: RunConfig, out: Path, base: Path | None = None) -> int:
    ctx = Context(cfg, out, base)
    summary = {"command": name, "inputs_digest": cfg.digest()}
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            scalars, passed = HANDLERS[name](ctx)
        ctx.warnings += [str(w.message) for w in caught]
        status = 0 if passed else 3
        if not passed:
            ctx.warnings.append("tolerance breached")
    except ConfigError:
        raise
    except NumericalFailure as exc:
        scalars, status = {"error": f"{type(exc).__name__}: {exc}"}, 3
    except ValueError as exc:
        scalars, status = {"error": f"precondition: {exc}"}, 2
    summary["scalars"] = scalars
    summary["warnings"] = list(dict.fromkeys(ctx.warnings))
    summary["status"] = status
    write_json(out / "summary.json", summary)
    if "error" in scalars:
        print(f"perdisp {name}: {scalars['error']}", file=sys.stderr)
    return status


def _threads(arg: int | None) -> int | None:
    if arg is not None:
        return arg
    env = os.environ.get("TOOL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError("TOOL_THREADS", "expected a positive integer") from None
        if n < 1:
            raise ConfigError("TOOL_THREADS", "expected a positive integer")
        return n
    return None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="perdisp", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    parser.add_argument("--threads", type=int, default=None, help="BLAS threads (or TOOL_THREADS)")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        threads = _threads(args.threads)
        if threads is not None and threads < 1:
            raise ConfigError("--threads", "expected a positive integer")
    except ConfigError as exc:
        print(f"perdisp: config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out if args.out is not None else cfg.output_dir)
    base = Path(args.config).resolve().parent
    try:
        if threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=threads):
                return run_command(args.command, cfg, out, base)
        return run_command(args.command, cfg, out, base)
    except ConfigError as exc:
        print(f"perdisp: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
