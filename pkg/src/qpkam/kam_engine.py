"""KAM iteration for the rescaled complex system.

State at step nu: the stored field H with  w' = J H(phi, w),  J = diag(eps0^2, 1, 1),
split into the normal part N (from a NormalForm), the lower-degree part G and
the higher-degree part F.  One step

  1. removes parameters violating the Melnikov conditions,
  2. solves the homological chain for U (lower-degree monomials only),
  3. finds the shift w10 of the w1 equilibrium and updates the normal form,
  4. changes variables  w = w+ + W0 + W(phi, w+),  W(phi, w+) = U(phi, w+ + W0):

        H+ = J^-1 (I + DW)^-1 [ J H(T(w+)) - omega.d_phi W ].

The torus is the image of w+ = 0 under the composed chain.
"""
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .homological import HomologicalProblem, solve_chain
from .qp_field import (FourierGrid, NearIdentity, PointPoly, QPPolyField, StepFailure, complexify_field,
                       field_to_points, horner_substitute, points_to_field, reality_check, rescale,
                       shift_w1, _tail_bound)
from .resonance import ParameterSet, exclude_melnikov, initial_exclusion, schedule_K
from .system import NormalForm
from .translate import (CASE_TABLE, ConfigurationError, CubicProblem, case_gate, choose_case,
                        initial_shift_case, solve_shift, update_normal_form)


class NonConvergence(RuntimeError):
    pass


ZETA2 = np.pi ** 2 / 6.0
REALITY_TOL = 1e-11


# ---------------------------------------------------------------------------
# schedule

@dataclass(frozen=True)
class IterationSchedule:
    eps0: float
    iota: float
    gamma0: float
    r0: float
    s0: float
    kcap: int

    @property
    def eps1(self):
        return self.eps0 ** self.iota

    def eps(self, nu):
        if nu == 0:
            return self.eps0
        return self.eps1 ** (1.125 ** (nu - 1))

    def gamma(self, nu):
        return self.gamma0 / (nu + 1) ** 2

    def sigma(self, nu):
        return sum(j ** -2.0 for j in range(1, nu + 1)) / (2.0 * ZETA2)

    def r(self, nu):
        return (1.0 - self.sigma(nu)) * self.r0

    def s(self, nu):
        return (1.0 - self.sigma(nu)) * self.s0

    def rho(self, nu):
        return self.r(nu) - self.r(nu + 1)

    def delta(self, nu):
        return self.s(nu) - self.s(nu + 1)

    def K(self, nu):
        return schedule_K(nu, self.eps0, self.eps1, self.r0, self.kcap)

    def row(self, nu):
        K, binds = self.K(nu)
        return {"nu": nu, "eps": self.eps(nu), "gamma": self.gamma(nu), "K": K, "K_capped": binds,
                "r": self.r(nu), "s": self.s(nu), "rho": self.rho(nu), "delta": self.delta(nu),
                "sigma": self.sigma(nu)}


# ---------------------------------------------------------------------------
# norms and helpers

def value_norm(F, s=None):
    """max over a, j of sum_l s^|l| sup_phi |F_jl(phi)|."""
    if F.n_a == 0:
        return 0.0
    s = F.s if s is None else s
    sup = np.abs(F.values()).reshape(F.n_a, 3, F.basis.size, -1).max(axis=-1)
    return float((sup * s ** F.basis.degrees).sum(axis=2).max())


def resample(F, N):
    """Same Fourier coefficients placed on an N^n0 grid (N >= 3 kmax + 1)."""
    g = F.grid
    new = FourierGrid(g.n0, N, g.kmax)
    if N == g.N:
        return F
    out = np.zeros(F.coeffs.shape[:3] + new.shape, dtype=np.complex128)
    src = np.nonzero(g.mask)
    dst = tuple(g.kvec[i][g.mask] % N for i in range(g.n0))
    out[(Ellipsis,) + dst] = F.coeffs[(Ellipsis,) + src]
    return QPPolyField(new, F.basis, out, F.params, F.r, F.s, F.coords)


def _spline(x, y):
    y = np.asarray(y)
    if len(x) >= 4:
        return CubicSpline(x, y)
    if len(x) == 1:
        return lambda a: np.full(np.shape(a), y[0])
    return lambda a: np.interp(a, x, y)


def jacobian_solve(DW, y, tol=1e-16, max_iter=200):
    """x with (I + DW) x = y by Neumann iteration; DW a 3x3 list of PointPoly."""
    x = list(y)
    for it in range(1, max_iter + 1):
        new = []
        for i in range(3):
            acc = y[i]
            for j in range(3):
                acc = acc - DW[i][j] * x[j]
            new.append(acc)
        change = max(float(np.abs(new[i].data - x[i].data).max(initial=0.0)) for i in range(3))
        scale = max(float(np.abs(new[i].data).max(initial=0.0)) for i in range(3))
        x = new
        if not np.isfinite(change):
            break
        if change <= tol * max(scale, 1e-300):
            return x, it
    raise StepFailure(f"Neumann series for (I + DW)^-1 did not settle (last change {change:.3e})")


def transform_field(H, W0, W, omega, eps0):
    """Stored field after w = w+ + W0 + W(phi, w+); returns (H+, neumann iterations)."""
    basis = H.basis
    Jd = np.array([eps0 ** 2, 1.0, 1.0])
    T = NearIdentity(W0, W).polys(H)
    Hpts = field_to_points(H)
    HT = [horner_substitute(Hpts[j], T, basis) for j in range(3)]
    dW = field_to_points(W.omega_derivative(omega))
    y = [PointPoly(basis, Jd[j] * HT[j].data - dW[j]) for j in range(3)]
    Wpts = field_to_points(W)
    Wp = [PointPoly(basis, Wpts[i]) for i in range(3)]
    DW = [[Wp[i].deriv(j) for j in range(3)] for i in range(3)]
    x, its = jacobian_solve(DW, y)
    out = np.stack([x[j].data / Jd[j] for j in range(3)])
    return points_to_field(H, out), its


# ---------------------------------------------------------------------------
# chain and torus

@dataclass
class TransformChain:
    eps: float
    eps0: float
    steps: list = field(default_factory=list)        # (W0 (n_a,3), W field) on the work points of that step

    def append(self, W0, W):
        self.steps.append((np.asarray(W0), W))

    def restricted(self, params):
        """Chain entries selected at the given parameter values."""
        out = []
        for W0, W in self.steps:
            idx = np.array([int(np.argmin(np.abs(W.params - a))) for a in params], dtype=int)
            out.append((W0[idx], W.select(idx)))
        return out

    def evaluate(self, params, N):
        """w = T_0 o T_1 o ... o T_n (0) on an N^n0 grid: array (n_a, 3, N^n0)."""
        steps = self.restricted(params)
        if not steps:
            return None
        grid = FourierGrid(steps[0][1].grid.n0, N, steps[0][1].grid.kmax)
        P = len(params) * grid.npts
        x = np.zeros((3, P), dtype=np.complex128)
        for W0, W in reversed(steps):
            Wr = resample(W, N)
            pts = field_to_points(Wr)
            basis = W.basis
            new = np.empty_like(x)
            for i in range(3):
                new[i] = x[i] + np.repeat(W0[:, i], grid.npts) + PointPoly(basis, pts[i]).eval(x)
            x = new
        return np.moveaxis(x.reshape(3, len(params), grid.npts), 1, 0)


@dataclass
class TorusSolution:
    """v(phi; a) on the validated parameter points."""
    params: np.ndarray
    omega: np.ndarray            # (n_a, n0)
    eps: float
    n0: int
    kmax: int
    chain: TransformChain
    valid: np.ndarray            # validity flags on the original work grid
    work_params: np.ndarray

    def values(self, N=None):
        """Real torus samples (n_a, 3, N, ..., N) and the largest imaginary part dropped."""
        N = N or max(3 * self.kmax + 1, 16)
        shape = (len(self.params), 3) + (N,) * self.n0
        if self.eps == 0 or not self.chain.steps:
            return np.zeros(shape), 0.0
        w = self.chain.evaluate(self.params, N)
        e0 = self.chain.eps0
        v1 = e0 * w[:, 0]
        v2 = e0 ** 2 * w[:, 1].real
        v3 = e0 ** 2 * w[:, 1].imag
        # reality: w1 real and w3 = conj(w2)
        imag = max(float(np.abs(v1.imag).max(initial=0.0)),
                   float(e0 ** 2 * np.abs(w[:, 2] - np.conj(w[:, 1])).max(initial=0.0)))
        v = np.stack([v1.real, v2, v3], axis=1)
        return v.reshape(shape), imag

    def coefficients(self, N=None):
        v, _ = self.values(N)
        return np.fft.fftn(v, axes=tuple(range(-self.n0, 0))) / v[0, 0].size

    def amplitude(self, N=None):
        """sup over phi of |v_j| per parameter point: (n_a, 3)."""
        v, _ = self.values(N)
        return np.abs(v).reshape(v.shape[0], 3, -1).max(axis=-1)

    def as_field(self, basis, N=None):
        """The torus as a degree-0 field in v-coordinates (for the coefficient dump)."""
        N = N or max(3 * self.kmax + 1, 16)
        grid = FourierGrid(self.n0, N, self.kmax)
        F = QPPolyField.zeros(grid, basis, self.params, coords="v")
        v, _ = self.values(N)
        F.coeffs[:, :, 0] = grid.to_coeffs(v.astype(np.complex128), K=None)
        return F


# ---------------------------------------------------------------------------
# engine state

@dataclass
class EngineState:
    nu: int
    H: QPPolyField
    nf: NormalForm
    pset: ParameterSet
    chain: TransformChain
    case: "int | None" = None
    G_norm: float = np.inf


@dataclass
class RunResult:
    status: str                      # converged | max_steps | step_failure | configuration
    torus: "TorusSolution | None"
    pset: ParameterSet
    ledger: list
    measure: list
    message: str = ""
    state: "EngineState | None" = None

    @property
    def converged(self):
        return self.status == "converged"

    def summary(self):
        rows = [r for r in self.ledger if "G_after" in r]
        return {"status": self.status, "message": self.message, "steps": len(rows),
                "final_G": rows[-1]["G_after"] if rows else None,
                "measure_initial": self.measure[0]["measure_before"] if self.measure else None,
                "measure_final": self.pset.measure,
                "removed_total": sum(m["removed"] for m in self.measure),
                "valid_params": None if self.torus is None else self.torus.params.tolist()}


def split(H, nf):
    """(G, F): lower part minus the normal form, and the higher part."""
    lo, hi = H.lower(), H.higher()
    return lo - nf.as_field(H), hi


def prepare(spec, params=None):
    """Complexified, rescaled stored field and the initial normal form on the work points."""
    params = spec.work_params() if params is None else np.atleast_1d(params)
    grid, basis = spec.fourier_grid(), spec.basis()
    unpert, pert = spec.real_parts(params, grid, basis)
    H = rescale(complexify_field(unpert), spec.eps) + rescale(complexify_field(pert), spec.eps, perturbation=True)
    H = QPPolyField(H.grid, H.basis, H.coeffs, H.params, spec.numerics.r0, spec.numerics.s0, "w")
    data = spec.model.normal_data(params)
    nf = NormalForm.initial(data["Omega1"], data["Omega2"])
    return H, nf


class Engine:
    """Runs the iteration for one SystemSpec; ``ledger`` collects one row per event."""

    def __init__(self, spec, check_reality=True):
        self.spec = spec
        self.num = spec.numerics
        self.check_reality = check_reality
        self.fine = spec.fine_params()
        self.eps0 = spec.eps ** 0.25
        self.ledger = []
        self.measure = []
        self.sched = None

    # -- pieces ---------------------------------------------------------------

    def _omega(self, params):
        return self.spec.model.frequencies(params)

    def _reality(self, F, stage):
        rep = reality_check(F)
        self.ledger.append({"event": "reality", "stage": stage, "max_violation": rep.max_violation,
                            "relative": rep.relative})
        if self.check_reality and rep.max_violation > REALITY_TOL * max(1.0, value_norm(F)):
            raise StepFailure(f"reality condition violated at {stage}: {rep.max_violation:.3e}")
        return rep

    def _exclude(self, state, nu):
        K, binds = self.sched.K(nu)
        gamma = self.sched.gamma(nu)
        model = self.spec.model
        if nu == 0:
            ex = initial_exclusion(state.pset, self.fine, lambda a: model.normal_data(a)["Omega2"],
                                   self._omega, gamma, K)
        else:
            p = state.H.params
            om2 = _spline(p, np.imag(state.nf.Omega2))
            om3 = _spline(p, np.imag(state.nf.Omega3))
            ex = exclude_melnikov(state.pset, self.fine, lambda a: 1j * om2(a), lambda a: 1j * om3(a),
                                  self._omega, gamma, K, sigma=self.sched.sigma(nu))
        if not ex.pset.issubset(state.pset):
            raise StepFailure("exclusion produced a set that is not nested")
        row = {"nu": nu, "gamma": gamma, "K": K, "K_capped": binds, "measure_before": ex.measure_before,
               "removed": ex.removed, "measure_after": ex.pset.measure, "zones": len(ex.zones),
               "c3_fit": ex.removed / (gamma * ex.measure_before) if gamma * ex.measure_before > 0 else 0.0}
        self.measure.append(row)
        keep = ex.pset.contains(state.H.params)
        if not keep.any():
            raise StepFailure(f"no work point survives the exclusion at step {nu}")
        idx = np.nonzero(keep)[0]
        H = state.H.select(idx)
        return EngineState(state.nu, H, state.nf.select(idx), ex.pset, state.chain, state.case, state.G_norm)

    def _shift(self, state, drift, nu):
        nf = state.nf
        if nu == 0:
            case = state.case
            g = drift.g1.real
            if case is None:
                case = choose_case(g[0], g[1])
            ok, msg = case_gate(case, self.eps0, self.spec.gamma0)
            self.ledger.append({"event": "case", "case": case, "gate_ok": ok, "gate": msg,
                                "override": self.spec.gate_override})
            if not ok and not self.spec.gate_override:
                raise ConfigurationError(f"case {case} gate fails ({msg}); set gate_override for desk runs")
            w10, info = initial_shift_case(drift.g1, nf.Omega1, self.eps0, case, weighted=True)
            info = dict(info, eps0=self.eps0)
            return w10, case, info
        g = drift.g1.real
        p = CubicProblem(np.asarray(nf.Omega1) + g[3], np.asarray(nf.e2) + g[2], np.asarray(nf.e1) + g[1], g[0],
                         eps=self.spec.eps, eps0=self.eps0)
        res = solve_shift(p)
        return res.x0, state.case, {"c9": res.c9, "residual": res.residual}

    # -- one step ---------------------------------------------------------------

    def step(self, state):
        t0 = time.perf_counter()
        nu = state.nu
        state = self._exclude(state, nu)
        H, nf = state.H, state.nf
        G, F = split(H, nf)
        G_before = value_norm(G)
        K, _ = self.sched.K(nu)
        Kcut = min(K, H.grid.kmax)
        omega = self._omega(H.params)
        if self.check_reality and nu == 0:
            self._reality(H, f"H^{nu}")
        sol = solve_chain(HomologicalProblem(omega, Kcut, nf, self.eps0, G))
        if self.check_reality:
            self._reality(sol.U, f"U^{nu}")
        w10, case, info = self._shift(state, sol.drift, nu)
        nf_new = update_normal_form(nf, w10, sol.drift)
        W = shift_w1(sol.U, w10)
        W0 = np.zeros((H.n_a, 3))
        W0[:, 0] = w10
        H_new, its = transform_field(H, W0, W, omega, self.eps0)
        tail = _tail_bound(H, NearIdentity(W0, W))
        G_new, F_new = split(H_new, nf_new)
        G_after = value_norm(G_new)
        state.chain.append(W0, W)
        eps_next = self.sched.eps(nu + 1)
        W_size = max(value_norm(W) + float(np.abs(w10).max(initial=0.0)), 0.0)
        row = {"event": "step", "nu": nu, "n_valid": H.n_a, "Kcut": Kcut, "G_before": G_before,
               "G_after": G_after, "contraction": G_after / G_before ** 1.125 if 0 < G_before < 1 else None,
               "W_size": W_size, "W_bound": 2 * self.sched.eps(nu) ** (1 / 3),
               "w10_min": float(np.abs(w10).min()), "w10_max": float(np.abs(w10).max()),
               "F_norm": value_norm(F_new), "F_change": value_norm(F_new - F),
               "F_change_bound": eps_next ** (1 / 3), "tail_bound": tail, "neumann_iterations": its,
               "e1_min": float(np.abs(nf_new.e1).min()), "e2_max": float(np.abs(nf_new.e2).max()),
               "max_inv_divisor": max(r["max_inv_divisor"] for r in sol.ledger),
               "drift_reality": sol.drift.reality_violation(), "seconds": time.perf_counter() - t0,
               **{f"shift_{k}": v for k, v in info.items() if k != "case"}}
        row.update(self._lemma_bounds(G_new, eps_next))
        self.ledger.append(row)
        bf = self.num.bound_factor
        if row["contraction"] is not None and G_after > self.num.tol and row["contraction"] > bf:
            raise StepFailure(f"step {nu}: |G+| = {G_after:.3e} exceeds {bf} |G|^(9/8) "
                              f"= {bf * G_before ** 1.125:.3e}")
        if W_size > bf * row["W_bound"]:
            raise StepFailure(f"step {nu}: transform size {W_size:.3e} exceeds {bf} x 2 eps_nu^(1/3)")
        if self.check_reality:
            self._reality(W, f"W^{nu}")
            self._reality(H_new, f"H^{nu + 1}")
        return EngineState(nu + 1, H_new, nf_new, state.pset, state.chain, case, G_after)

    def _lemma_bounds(self, G, eps_next):
        """Measured sizes against the smallness conditions (advisory, recorded as ratios)."""
        worst_l = 0.0
        worst_m = 0.0
        for j in range(3):
            for m in range(4):
                val = value_norm_coeff(G, j, (m, 0, 0))
                worst_l = max(worst_l, val / eps_next ** (4 - m))
            for l in ((0, 1, 0), (0, 0, 1)):
                worst_m = max(worst_m, value_norm_coeff(G, j, l) / eps_next)
        return {"ratio_G_w1chain": worst_l, "ratio_G_linear": worst_m}

    # -- driver -----------------------------------------------------------------

    def initial_state(self):
        spec = self.spec
        case = spec.case
        iota = CASE_TABLE[case or 1][2]
        self.sched = IterationSchedule(self.eps0, iota, spec.gamma0, self.num.r0, self.num.s0, self.num.kcap)
        H, nf = prepare(spec)
        chain = TransformChain(spec.eps, self.eps0)
        pset = ParameterSet.interval(*spec.interval)
        return EngineState(0, H, nf, pset, chain, case)

    def run(self, tol=None, max_steps=None, on_step=None):
        tol = self.num.tol if tol is None else tol
        max_steps = self.num.max_steps if max_steps is None else max_steps
        spec = self.spec
        work = spec.work_params()
        if spec.eps == 0:
            return self._trivial(work)
        try:
            state = self.initial_state()
        except ConfigurationError as exc:
            return RunResult("configuration", None, ParameterSet.interval(*spec.interval), self.ledger,
                             self.measure, str(exc))
        G0, _ = split(state.H, state.nf)
        state.G_norm = value_norm(G0)
        self.ledger.append({"event": "start", "G0": state.G_norm, "eps0": self.eps0,
                            "schedule": [self.sched.row(n) for n in range(max_steps + 1)]})
        status, msg = "max_steps", ""
        if state.G_norm == 0:
            state = self._exclude(state, 0)
            state.chain.append(np.zeros((state.H.n_a, 3)), QPPolyField.zeros(
                state.H.grid, state.H.basis, state.H.params, r=state.H.r, s=state.H.s))
            status = "converged"
        try:
            while status != "converged" and state.nu < max_steps:
                state = self.step(state)
                if on_step is not None:
                    on_step(state, self.ledger[-1])
                if state.G_norm < tol:
                    status = "converged"
        except (StepFailure, ArithmeticError, ValueError) as exc:
            kind = "configuration" if isinstance(exc, ConfigurationError) else "step_failure"
            return RunResult(kind, None, state.pset, self.ledger, self.measure, str(exc), state)
        if status != "converged":
            msg = f"|G| = {state.G_norm:.3e} after {state.nu} steps (tol {tol:.1e})"
            return RunResult(status, None, state.pset, self.ledger, self.measure, msg, state)
        torus = self._torus(state, work)
        return RunResult(status, torus, state.pset, self.ledger, self.measure, msg, state)

    def _torus(self, state, work):
        params = state.H.params
        valid = np.isin(work, params)
        return TorusSolution(params, self._omega(params), self.spec.eps, self.spec.n0, self.num.kmax,
                             state.chain, valid, work)

    def _trivial(self, work):
        pset = ParameterSet.interval(*self.spec.interval)
        self.sched = IterationSchedule(1.0, 0.5, self.spec.gamma0, self.num.r0, self.num.s0, self.num.kcap)
        K = min(self.num.kcap, 64)
        model = self.spec.model
        ex = initial_exclusion(pset, self.fine, lambda a: model.normal_data(a)["Omega2"], self._omega,
                               self.spec.gamma0, K)
        self.measure.append({"nu": 0, "gamma": self.spec.gamma0, "K": K, "K_capped": False,
                             "measure_before": ex.measure_before, "removed": ex.removed,
                             "measure_after": ex.pset.measure, "zones": len(ex.zones),
                             "c3_fit": ex.removed / (self.spec.gamma0 * ex.measure_before)})
        params = work[ex.pset.contains(work)]
        chain = TransformChain(0.0, 0.0)
        torus = TorusSolution(params, self._omega(params), 0.0, self.spec.n0, self.num.kmax, chain,
                              np.isin(work, params), work)
        self.ledger.append({"event": "start", "G0": 0.0, "eps0": 0.0})
        return RunResult("converged", torus, ex.pset, self.ledger, self.measure, "eps = 0")


def value_norm_coeff(F, j, l):
    c = F.coeffs[:, j, F.basis.idx(l)]
    if c.size == 0:
        return 0.0
    return float(np.abs(F.grid.to_values(c)).reshape(F.n_a, -1).max())


def run(spec, tol=None, max_steps=None, check_reality=True):
    """Run the full iteration; returns a RunResult."""
    return Engine(spec, check_reality).run(tol, max_steps)
