"""Independent checks of an emitted torus: ODE defect, shadowing and scaling studies."""
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

from . import kernels
from .qp_field import FourierGrid
from .resonance import ParameterSet, exclude_melnikov, initial_exclusion, schedule_K


class IntegrationFailure(RuntimeError):
    pass


@dataclass
class DefectReport:
    defect: float = 0.0
    per_param: list = field(default_factory=list)
    shadow: float = 0.0
    T: float = 0.0
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# spectral tools

def _spectral_derivative(values, omega, n0):
    """omega . d_phi of samples (n_a, c, N, ..., N) with omega (n_a, n0)."""
    N = values.shape[-1]
    axes = tuple(range(-n0, 0))
    c = np.fft.fftn(values, axes=axes)
    k = np.fft.fftfreq(N) * N
    if N % 2 == 0:
        k[N // 2] = 0.0
    ks = np.meshgrid(*([k] * n0), indexing="ij")
    dot = sum(omega[:, i].reshape((-1, 1) + (1,) * n0) * ks[i] for i in range(n0))
    return np.fft.ifftn(1j * dot * c, axes=axes).real


def _field_values(spec, params, N):
    grid = FourierGrid(spec.n0, N, spec.numerics.kmax)
    F = spec.real_field(params, grid=grid)
    return F.values().real, F.basis.exps            # (n_a, 3, M, N..)


def rhs_on_torus(spec, params, v):
    """RHS(phi, v(phi)) for samples v (n_a, 3, N, ..., N)."""
    N = v.shape[-1]
    vals, exps = _field_values(spec, params, N)
    out = np.zeros_like(v)
    for m, (l1, l2, l3) in enumerate(exps):
        mono = v[:, 0] ** l1 * v[:, 1] ** l2 * v[:, 2] ** l3
        out += vals[:, :, m] * mono[:, None]
    return out


def ode_defect(torus, spec, N=64):
    """sup over a 64^n0 grid of |omega.d_phi v - RHS(phi, v)| per validated a."""
    if torus is None or len(torus.params) == 0:
        return DefectReport()
    v, imag = torus.values(N)
    dv = _spectral_derivative(v, torus.omega, torus.n0)
    res = dv - rhs_on_torus(spec, torus.params, v)
    per = np.abs(res).reshape(len(torus.params), -1).max(axis=1)
    return DefectReport(float(per.max()), per.tolist(), extra={"N": N, "imag_dropped": imag})


# ---------------------------------------------------------------------------
# ODE integration

@dataclass
class FieldTable:
    comp: np.ndarray
    exps: np.ndarray
    kvec: np.ndarray
    coef: np.ndarray
    degree: int


def field_table(spec, a, tol=0.0):
    """Sparse (component, monomial, mode, coefficient) table of the real field at one a."""
    grid = spec.fourier_grid()
    F = spec.real_field(np.array([a]), grid=grid)
    c = F.coeffs[0]
    idx = np.nonzero(np.abs(c) > tol)
    comp = idx[0].astype(np.int64)
    exps = F.basis.exps[idx[1]].astype(np.int64)
    kvec = np.stack([grid.kvec[i][idx[2:]] for i in range(grid.n0)], axis=1).astype(np.float64)
    coef = c[idx].astype(np.complex128)
    deg = int(exps.sum(axis=1).max()) if len(exps) else 0
    return FieldTable(comp, exps, np.ascontiguousarray(kvec), coef, max(deg, 1))


def integrate_ode(spec, a, v0, T, t_eval=None, phi0=None, rtol=1e-12, atol=1e-15, table=None):
    """Adaptive DOP853 on v' = RHS(phi0 + omega t, v); returns (t, v (3, n))."""
    if not T > 0:
        raise ValueError("T must be positive")
    table = field_table(spec, a) if table is None else table
    omega = np.asarray(spec.model.frequencies(np.array([a]))[0], dtype=float)
    phi0 = np.zeros(len(omega)) if phi0 is None else np.asarray(phi0, dtype=float)

    def f(t, v):
        return kernels.field_eval(phi0 + omega * t, v, table)

    sol = solve_ivp(f, (0.0, T), np.asarray(v0, dtype=float), method="DOP853", rtol=rtol, atol=atol,
                    t_eval=t_eval, dense_output=False)
    if not sol.success:
        raise IntegrationFailure(sol.message)
    return sol.t, sol.y


# ---------------------------------------------------------------------------
# DDE integration (method of steps, RK4 with Hermite history)

def forcing_arrays(cfg):
    gm = np.array([t["m"] for t in cfg.forcing], dtype=np.int64)
    gn = np.array([t["n"] for t in cfg.forcing], dtype=np.int64)
    gk = np.array([t.get("k", [0] * len(cfg.omega_prime)) for t in cfg.forcing], dtype=np.float64)
    gc = np.array([t.get("cos", 0.0) - 1j * t.get("sin", 0.0) for t in cfg.forcing], dtype=np.complex128)
    return gm, gn, gk.reshape(len(gm), -1), gc


def integrate_dde(cfg, a, history, T, m=200, tau=None, eps=None):
    """x'' + a(x^2-1)x' + x = b x(t-tau) + b1 x(t-tau)^3 + eps g on [0, T].

    ``history(t)`` returns (x, x') for t in [-tau, 0]; h = tau/m so the delay is
    an exact number of steps.  Returns (t, x, x').
    """
    from .vdp import critical_point
    if tau is None:
        tau = float(critical_point(a)[1])
    if m < 1:
        raise ValueError("m must be positive")
    h = tau / m
    n = int(np.ceil(T / h))
    th = np.linspace(-tau, 0.0, m + 1)
    x0, v0 = history(th)
    xs = np.zeros(m + 1 + n)
    vs = np.zeros(m + 1 + n)
    xs[: m + 1] = x0
    vs[: m + 1] = v0
    gm, gn, gk, gc = forcing_arrays(cfg)
    eps = cfg.eps if eps is None else eps
    xs, vs = kernels.dde_rk4(xs, vs, m, n, h, float(a), float(cfg.b), float(cfg.b1), float(eps),
                             np.asarray(cfg.omega_prime, dtype=float), gm, gn, gk, gc)
    if not np.all(np.isfinite(xs)):
        raise IntegrationFailure("DDE solution left the finite range")
    t = np.arange(n + 1) * h
    return t, xs[m:], vs[m:]


# ---------------------------------------------------------------------------
# torus evaluation at arbitrary phases

class TorusInterpolant:
    """Trigonometric interpolation of the torus samples at one parameter point."""

    def __init__(self, torus, ia, N=64, rel=1e-17):
        v, _ = torus.values(N)
        n0 = torus.n0
        c = np.fft.fftn(v[ia], axes=tuple(range(-n0, 0))) / N ** n0
        k = np.rint(np.fft.fftfreq(N) * N)
        ks = np.stack(np.meshgrid(*([k] * n0), indexing="ij"))
        scale = np.abs(c).max()
        keep = np.abs(c).max(axis=0) > rel * max(scale, 1e-300)
        self.k = ks[:, keep].T                       # (q, n0)
        self.c = c[:, keep]                          # (3, q)
        self.omega = torus.omega[ia]

    def __call__(self, phi):
        phi = np.atleast_2d(phi)                     # (n0, n)
        e = np.exp(1j * (self.k @ phi))              # (q, n)
        return (self.c @ e).real

    def along(self, t, phi0=None):
        phi0 = np.zeros(len(self.omega)) if phi0 is None else phi0
        return self(phi0[:, None] + self.omega[:, None] * np.atleast_1d(t)[None, :])

    def derivative_along(self, t, direction):
        """d/dt of the component combination ``direction`` along phi = direction of omega' t."""
        phi = np.asarray(direction)[:, None] * np.atleast_1d(t)[None, :]
        e = np.exp(1j * (self.k @ phi))
        return ((self.c * (1j * (self.k @ direction))[None, :]) @ e).real


def shadow_check(torus, spec, T=1e3, ia=None, n_out=2001, N=64):
    """Start the ODE on the torus at phi = 0 and compare with v(omega t) over [0, T]."""
    if torus is None or len(torus.params) == 0:
        return DefectReport(T=T)
    if ia is None:
        ia = len(torus.params) // 2
    interp = TorusInterpolant(torus, ia, N)
    a = float(torus.params[ia])
    t_eval = np.linspace(0.0, T, n_out)
    if torus.eps == 0:
        return DefectReport(T=T, extra={"a": a})
    v0 = interp(np.zeros((torus.n0, 1)))[:, 0]
    t, y = integrate_ode(spec, a, v0, T, t_eval=t_eval)
    pred = interp.along(t)
    dev = np.abs(y - pred).max(axis=0)
    d = ode_defect(torus, spec, N)
    return DefectReport(d.defect, d.per_param, float(dev.max()), T,
                        {"a": a, "deviation_t": t[:: max(1, n_out // 200)].tolist(),
                         "deviation": dev[:: max(1, n_out // 200)].tolist(),
                         "gronwall_linear": d.defect * T})


def dde_shadow(torus, cfg, T=None, ia=None, m=200, N=64, windows=20):
    """Full-DDE run from the torus-predicted history; deviation of x(t) from the torus prediction.

    x = v1 + v3 on the torus; phases advance as omega' t in physical time.
    The report splits the deviation into per-window maxima; the plateau is the
    median of the last half of the windows.
    """
    from .vdp import critical_point
    if ia is None:
        ia = len(torus.params) // 2
    a = float(torus.params[ia])
    eps = torus.eps
    if T is None:
        T = min(20.0 / eps ** 0.25, 1e4) if eps > 0 else 100.0
    interp = TorusInterpolant(torus, ia, N)
    om_p = np.asarray(cfg.omega_prime, dtype=float)
    tau = float(critical_point(a)[1])

    def x_of(t):
        vals = interp(om_p[:, None] * np.atleast_1d(t)[None, :])
        return vals[0] + vals[2]

    def history(th):
        d = interp.derivative_along(th, om_p)
        vals = interp(om_p[:, None] * th[None, :])
        dvals = d
        return vals[0] + vals[2], dvals[0] + dvals[2]

    t, x, _ = integrate_dde(cfg, a, history, T, m=m, tau=tau, eps=eps)
    dev = np.abs(x - x_of(t))
    edges = np.linspace(0, len(t), windows + 1).astype(int)
    wmax = np.array([dev[i:j].max() for i, j in zip(edges[:-1], edges[1:])])
    plateau = float(np.median(wmax[windows // 2:]))
    return DefectReport(0.0, [], float(dev.max()), T,
                        {"a": a, "window_max": wmax.tolist(), "plateau": plateau,
                         "plateau_over_sqrt_eps": plateau / np.sqrt(eps) if eps > 0 else None,
                         "initial": float(wmax[0]), "decays": bool(wmax[-1] <= wmax[0])})


# ---------------------------------------------------------------------------
# sweeps

def fit_slope(x, y):
    x, y = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    slope, icpt = np.polyfit(x, y, 1)
    return float(slope), float(np.exp(icpt))


@dataclass
class SweepReport:
    rows: list
    slope: "float | None"
    slopes: list
    c_fit: "float | None"
    failures: list

    def to_dict(self):
        return {"rows": self.rows, "slope": self.slope, "slopes": self.slopes, "c_fit": self.c_fit,
                "failures": self.failures}


def scaling_sweep(spec, eps_list, run=None):
    """Run the engine per eps and fit log sup|v| against log eps (overall and per component)."""
    from .kam_engine import run as engine_run
    run = engine_run if run is None else run
    rows, failures = [], []
    for eps in eps_list:
        t0 = time.perf_counter()
        res = run(spec.with_eps(eps))
        if not res.converged:
            failures.append({"eps": eps, "status": res.status, "message": res.message})
            continue
        amp = res.torus.amplitude().max(axis=0)
        rows.append({"eps": eps, "sup_v": float(amp.max()), "sup_v1": float(amp[0]), "sup_v2": float(amp[1]),
                     "sup_v3": float(amp[2]), "steps": res.summary()["steps"],
                     "seconds": time.perf_counter() - t0})
    if len(rows) < 2:
        return SweepReport(rows, None, [], None, failures)
    e = [r["eps"] for r in rows]
    slope, _ = fit_slope(e, [r["sup_v"] for r in rows])
    slopes = [fit_slope(e, [r[f"sup_v{j}"] for r in rows])[0] for j in (1, 2, 3)]
    c_fit = float(np.median([r["sup_v"] / r["eps"] ** (1 / 3) for r in rows]))
    return SweepReport(rows, slope, slopes, c_fit, failures)


def exclusion_sequence(spec, gamma0, steps=3, check=True):
    """Nested exclusions with gamma_nu = gamma0/(nu+1)^2 using the unperturbed frequencies.

    Returns (list of ParameterSet, removed measure total).
    """
    model = spec.model
    grid = spec.fine_params()
    eps0 = spec.eps ** 0.25 if spec.eps > 0 else 0.5
    eps1 = eps0 ** 0.5
    om2 = lambda a: model.normal_data(a)["Omega2"]
    sets = [ParameterSet.interval(*spec.interval)]
    K0, _ = schedule_K(0, eps0, eps1, spec.numerics.r0, spec.numerics.kcap)
    ex = initial_exclusion(sets[0], grid, om2, model.frequencies, gamma0, K0)
    sets.append(ex.pset)
    for nu in range(1, steps):
        K, _ = schedule_K(nu, eps0, eps1, spec.numerics.r0, spec.numerics.kcap)
        ex = exclude_melnikov(sets[-1], grid, lambda a: 1j * om2(a), lambda a: -1j * om2(a),
                              model.frequencies, gamma0 / (nu + 1) ** 2, K)
        sets.append(ex.pset)
    if check:
        for p, q in zip(sets[:-1], sets[1:]):
            if not q.issubset(p):
                raise AssertionError("exclusion sets are not nested")
    return sets, sets[0].measure - sets[-1].measure


def measure_sweep(spec, gammas, steps=3):
    rows = []
    for g in gammas:
        sets, removed = exclusion_sequence(spec, g, steps)
        rows.append({"gamma0": g, "removed": removed,
                     "nested": all(q.issubset(p) for p, q in zip(sets[:-1], sets[1:]))})
    slope, c = fit_slope([r["gamma0"] for r in rows], [r["removed"] for r in rows])
    return {"rows": rows, "slope": slope, "c3": c}


def measure_frequency(t, x, guess=None):
    """Angular frequency of a (nearly) sinusoidal signal: FFT peak refined by least squares."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float) - np.mean(x)
    dt = t[1] - t[0]
    if guess is None:
        spec = np.abs(np.fft.rfft(x * np.hanning(len(x))))
        f = np.fft.rfftfreq(len(x), dt)
        guess = 2 * np.pi * f[int(np.argmax(spec[1:])) + 1]

    def resid(p):
        w, c, s, d = p
        return c * np.cos(w * t) + s * np.sin(w * t) + d - x

    A = np.stack([np.cos(guess * t), np.sin(guess * t), np.ones_like(t)], axis=1)
    c, s, d = np.linalg.lstsq(A, x, rcond=None)[0]
    sol = least_squares(resid, [guess, c, s, d], xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return float(sol.x[0])
