"""Command line: qpkam {solve, vdp, verify, measure, sweep, diophantine}.

Exit codes: 0 success, 2 hypothesis or validation failure, 1 usage error.
The output directory is --out, else $QPKAM_OUTPUT_DIR, else ./qpkam_out.
"""
import argparse
import csv
import json
import os
import platform
import sys
import time
from dataclasses import replace
from importlib import resources

import numpy as np

from . import __version__
from ._accel import BACKEND
from .qp_field import StepFailure, write_dump
from .resonance import PreconditionFailure, check_diophantine
from .system import SystemSpec
from .translate import ConfigurationError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser():
    p = _Parser(prog="qpkam", description="Quasi-periodic invariant tori near a degenerate equilibrium.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, spec=True):
        if spec:
            sp.add_argument("--spec", required=True, help="SystemSpec JSON (or the name of a bundled spec)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--eps", type=float)
        sp.add_argument("--gamma0", type=float)
        sp.add_argument("--degree", type=int)
        sp.add_argument("--kcap", type=int)
        sp.add_argument("--grid", type=int, help="fine parameter grid size")
        sp.add_argument("--work-points", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-steps", type=int)
        sp.add_argument("--case", type=int, choices=(1, 2))
        sp.add_argument("--gate-override", action="store_true")
        sp.add_argument("--threads", type=int, help="cap on worker threads")
        sp.add_argument("--seed", type=int, default=0)

    common(sub.add_parser("solve", help="run the KAM iteration and emit the torus"))
    v = sub.add_parser("vdp", help="reduce the delayed van der Pol oscillator; emit its spec")
    common(v, spec=False)
    v.add_argument("--a-points", type=int, default=64)
    ver = sub.add_parser("verify", help="solve, then check defect and shadowing")
    common(ver)
    ver.add_argument("--T", type=float, default=1e3)
    ver.add_argument("--dde", action="store_true", help="also run the full delay equation (vdp specs)")
    m = sub.add_parser("measure", help="removed parameter measure against gamma0")
    common(m)
    m.add_argument("--gammas", type=_floats, default=[1e-3, 5e-4, 2.5e-4, 1.25e-4, 6.25e-5])
    m.add_argument("--steps", type=int, default=3)
    s = sub.add_parser("sweep", help="amplitude scaling over eps")
    common(s)
    s.add_argument("--eps-list", type=_floats, default=[1e-8, 1e-7, 1e-6, 1e-5])
    d = sub.add_parser("diophantine", help="brute-force Diophantine certificate")
    d.add_argument("--omega", type=_floats, required=True)
    d.add_argument("--gamma", type=float, required=True)
    d.add_argument("--K", type=int, default=50)
    d.add_argument("--iota", type=float)
    d.add_argument("--out")
    return p


# ---------------------------------------------------------------------------
# helpers

def output_dir(args):
    out = args.out or os.environ.get("QPKAM_OUTPUT_DIR") or "qpkam_out"
    os.makedirs(out, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def resolve_spec_path(path):
    if os.path.exists(path):
        return path
    name = os.path.basename(path)
    data = resources.files("qpkam") / "data" / name
    if data.is_file():
        return str(data)
    raise UsageError(f"spec file not found: {path}")


def load_spec(args):
    path = resolve_spec_path(args.spec)
    try:
        spec = SystemSpec.from_json(path)
    except ConfigurationError:
        raise
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"invalid spec {path}: {exc}")
    return apply_overrides(spec, args)


def apply_overrides(spec, args):
    num = spec.numerics
    changes = {}
    for flag, key in (("degree", "degree"), ("kcap", "kcap"), ("grid", "grid_points"),
                      ("work_points", "work_points"), ("tol", "tol"), ("max_steps", "max_steps")):
        val = getattr(args, flag, None)
        if val is not None:
            changes[key] = val
    if changes.get("degree", 3) < 3:
        raise UsageError("--degree must be at least 3")
    if changes.get("grid_points", 2) < 2 or changes.get("work_points", 1) < 1:
        raise UsageError("grid sizes must be positive")
    spec = replace(spec, numerics=replace(num, **changes))
    if getattr(args, "eps", None) is not None:
        if args.eps < 0:
            raise UsageError("--eps must be non-negative")
        spec = replace(spec, eps=args.eps)
    if getattr(args, "gamma0", None) is not None:
        if not 0 < args.gamma0 < 1:
            raise UsageError("--gamma0 must lie in (0, 1)")
        spec = replace(spec, gamma0=args.gamma0)
    if getattr(args, "case", None) is not None:
        spec = replace(spec, case=args.case)
    if getattr(args, "gate_override", False):
        spec = replace(spec, gate_override=True)
    return spec


def set_threads(n):
    if n is None:
        return
    try:
        import numba
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    except (ImportError, ValueError):
        pass


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=True)


def write_csv(path, rows, columns=None):
    if not rows:
        open(path, "w").close()
        return
    columns = columns or sorted({k for r in rows for k in r if not isinstance(r[k], (list, dict))})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(_clean(r.get(c))) if isinstance(r.get(c), float) else _clean(r.get(c))
                        for c in columns])


def write_manifest(out, args, argv, t0, extra=None):
    import scipy
    try:
        import numba
        nb = numba.__version__
    except ImportError:
        nb = None
    data = {"argv": list(argv), "args": {k: v for k, v in vars(args).items()},
            "versions": {"qpkam": __version__, "python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__, "numba": nb},
            "backend": BACKEND, "wall_seconds": time.perf_counter() - t0}
    data.update(extra or {})
    write_json(os.path.join(out, "manifest.json"), data)


# ---------------------------------------------------------------------------
# commands

def _solve(spec, out):
    from .kam_engine import run
    res = run(spec)
    # wall-clock columns are left out so identical runs give identical files
    steps = [{k: v for k, v in r.items() if k != "seconds"} for r in res.ledger if r.get("event") == "step"]
    write_csv(os.path.join(out, "ledger.csv"), steps)
    write_csv(os.path.join(out, "measure.csv"), res.measure)
    summary = res.summary()
    if res.torus is not None:
        write_dump(res.torus.as_field(spec.basis()), os.path.join(out, "torus.txt"),
                   extra_header={"eps": spec.eps})
    return res, summary


def cmd_solve(args, out):
    spec = load_spec(args)
    spec.to_json(os.path.join(out, "spec.json"))
    res, summary = _solve(spec, out)
    if res.torus is not None:
        from .verify import ode_defect
        summary["defect"] = ode_defect(res.torus, spec).defect
        summary["sup_v"] = res.torus.amplitude().max(axis=0)
    write_json(os.path.join(out, "summary.json"), summary)
    print(f"{res.status}: {res.message or 'ok'}")
    return 0 if res.converged else 2


def cmd_vdp(args, out):
    from .vdp import VdpConfig, build_basis, critical_point, hypothesis_report, reduce_to_center, spectrum_gap
    cfg = VdpConfig()
    if args.eps is not None:
        cfg = replace(cfg, eps=args.eps)
    if args.gamma0 is not None:
        cfg = replace(cfg, gamma0=args.gamma0)
    spec = apply_overrides(reduce_to_center(cfg), args)
    spec.to_json(os.path.join(out, "vdp_spec.json"))
    rows = []
    for a in np.linspace(cfg.interval[0], cfg.interval[1], args.a_points):
        b = build_basis(a)
        gap = spectrum_gap(a, b.tau0, 10)
        rows.append({"a": float(a), "omega0": b.omega0, "tau0": b.tau0, "b2": b.b2, "b3": b.b3,
                     "duality_error": float(np.abs(b.duality() - np.eye(3)).max()), "spectral_gap": gap.gap})
    write_csv(os.path.join(out, "basis.csv"), rows,
              ["a", "omega0", "tau0", "b2", "b3", "duality_error", "spectral_gap"])
    rep = hypothesis_report(cfg)
    write_json(os.path.join(out, "hypotheses.json"), rep.checks)
    for name, c in rep.checks.items():
        print(f"{name}: {'pass' if c['pass'] else 'FAIL'}")
    return 0 if rep.ok else 2


def cmd_verify(args, out):
    from .verify import dde_shadow, ode_defect, shadow_check
    spec = load_spec(args)
    res, summary = _solve(spec, out)
    if res.torus is None:
        write_json(os.path.join(out, "summary.json"), summary)
        print(f"{res.status}: {res.message}")
        return 2
    d = ode_defect(res.torus, spec)
    sh = shadow_check(res.torus, spec, T=args.T)
    rng = np.random.default_rng(args.seed)
    summary["defect"] = d.defect
    summary["shadow"] = sh.shadow
    summary["shadow_threshold"] = 1e-2 * spec.eps ** (1 / 3)
    summary["probe_seed"] = args.seed
    summary["probe_scale"] = float(rng.uniform(0.5, 1.5) * 1e-3)
    if args.dde and spec.model.kind == "vdp":
        dd = dde_shadow(res.torus, _vdp_cfg(spec))
        summary["dde"] = dd.extra
        write_csv(os.path.join(out, "dde_windows.csv"),
                  [{"window": i, "max_deviation": x} for i, x in enumerate(dd.extra["window_max"])],
                  ["window", "max_deviation"])
    write_csv(os.path.join(out, "shadow.csv"),
              [{"t": t, "deviation": x} for t, x in zip(sh.extra["deviation_t"], sh.extra["deviation"])],
              ["t", "deviation"])
    write_json(os.path.join(out, "summary.json"), summary)
    ok = d.defect < 1e-10 and sh.shadow < summary["shadow_threshold"]
    print(f"defect {d.defect:.3e}, shadow {sh.shadow:.3e}: {'pass' if ok else 'FAIL'}")
    return 0 if ok else 2


def _vdp_cfg(spec):
    from .vdp import VdpConfig
    m = spec.model.cfg
    return VdpConfig(tuple(spec.interval), m.b, m.b1, m.omega_prime, m.forcing, spec.eps, spec.gamma0)


def cmd_measure(args, out):
    from .verify import measure_sweep
    spec = load_spec(args)
    rep = measure_sweep(spec, sorted(args.gammas, reverse=True), args.steps)
    write_csv(os.path.join(out, "measure_sweep.csv"), rep["rows"], ["gamma0", "removed", "nested"])
    write_json(os.path.join(out, "measure_sweep.json"), rep)
    ok = all(r["nested"] for r in rep["rows"])
    print(f"slope {rep['slope']:.4f}, nested {ok}")
    return 0 if ok else 2


def cmd_sweep(args, out):
    from .verify import scaling_sweep
    spec = load_spec(args)
    rep = scaling_sweep(spec, args.eps_list)
    write_csv(os.path.join(out, "sweep.csv"), rep.rows,
              ["eps", "sup_v", "sup_v1", "sup_v2", "sup_v3", "steps"])
    write_json(os.path.join(out, "sweep.json"), rep.to_dict())
    if rep.slope is None:
        print("sweep failed")
        return 2
    print(f"slope {rep.slope:.4f}; per component {', '.join(f'{s:.4f}' for s in rep.slopes)}")
    return 0 if not rep.failures else 2


def cmd_diophantine(args, out):
    omega = np.asarray(args.omega, dtype=float)
    if len(omega) < 1 or args.K < 1 or args.gamma <= 0:
        raise UsageError("need a non-empty --omega, --K >= 1 and --gamma > 0")
    iota = args.iota if args.iota is not None else len(omega) + 1
    cert = check_diophantine(omega, args.gamma, iota, args.K)
    data = {"omega": omega, "gamma": args.gamma, "iota": iota, "K": args.K, "worst_ratio": cert.worst_ratio,
            "worst_k": list(cert.worst_k), "valid": cert.valid}
    write_json(os.path.join(out, "diophantine.json"), data)
    print(f"{'pass' if cert.valid else 'FAIL'}: worst |<k,omega>| |k|^iota / gamma = {cert.worst_ratio:.6g} "
          f"at k = {list(cert.worst_k)}")
    return 0 if cert.valid else 2


COMMANDS = {"solve": cmd_solve, "vdp": cmd_vdp, "verify": cmd_verify, "measure": cmd_measure,
            "sweep": cmd_sweep, "diophantine": cmd_diophantine}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    t0 = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a command is required")
        out = output_dir(args)
        set_threads(getattr(args, "threads", None))
        np.random.seed(getattr(args, "seed", 0) or 0)
        code = COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return 1
    except (ConfigurationError, PreconditionFailure, StepFailure) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        code = 2
        out = output_dir(args)
    write_manifest(out, args, argv, t0, {"exit_code": code})
    return code


if __name__ == "__main__":
    sys.exit(main())
