"""Shift of the w1 equilibrium and the resulting normal-form update.

After a homological step the w1-component carries the averaged cubic
(Omega1 + G3) u^3 + (e2 + G2) u^2 + (e1 + G1) u + G0.  Translating u by a real
root w10 of that cubic removes the constant term and moves the linear and
quadratic coefficients to e1+, e2+.
"""
from dataclasses import dataclass

import numpy as np

from .resonance import PreconditionFailure
from .qp_field import StepFailure
from .system import NormalForm


class ConfigurationError(ValueError):
    pass


# (beta, kappa, iota, gate exponent): eps0 <= gamma0 ** gate
CASE_TABLE = {1: (1.0 / 3.0, 2.0 / 3.0, 0.5, 12), 2: (1.0, 2.0, 7.0 / 9.0, 9)}


def case_gate(case, eps0, gamma0):
    gate = CASE_TABLE[case][3]
    return eps0 <= gamma0 ** gate, f"eps0={eps0:.3e} vs gamma0^{gate}={gamma0 ** gate:.3e}"


@dataclass(frozen=True)
class CubicProblem:
    b3: np.ndarray
    b2: np.ndarray
    b1: np.ndarray
    b0: np.ndarray
    eps: float = 1.0
    eps0: float = 1.0
    kappa: float = 0.0
    beta: float = 0.0
    iota: float = 1.0
    db: "np.ndarray | None" = None     # (4, n) a-derivatives of (b3, b2, b1, b0)

    def coeffs(self):
        return np.stack([np.atleast_1d(np.asarray(x, dtype=float)) for x in (self.b3, self.b2, self.b1, self.b0)])


@dataclass(frozen=True)
class ShiftResult:
    x0: np.ndarray
    dx0: "np.ndarray | None"
    c9: float
    residual: float


def _polish(c, x, iters=8):
    for _ in range(iters):
        f = ((c[0] * x + c[1]) * x + c[2]) * x + c[3]
        fp = (3 * c[0] * x + 2 * c[1]) * x + c[2]
        if fp == 0:
            break
        step = f / fp
        x = x - step
        if abs(step) <= 1e-17 * max(abs(x), 1e-300):
            break
    return x


def smallest_real_root(c):
    """Real root of c0 x^3 + c1 x^2 + c2 x + c3 with minimal |x|."""
    if c[3] == 0:
        return 0.0
    r = np.roots(c)
    real = r[np.abs(r.imag) <= 1e-9 * np.maximum(1.0, np.abs(r))].real
    if len(real) == 0:
        raise StepFailure("cubic has no real root")
    # ties (symmetric pair) go toward the sign of -c3/c2
    pref = -np.sign(c[3] / c[2]) if c[2] != 0 else -np.sign(c[3])
    order = np.lexsort(((np.sign(real) != pref), np.abs(real)))
    return float(_polish(c, real[order[0]]))


def solve_shift(p):
    """Smallest-|x| real root at every parameter point, with a-derivative."""
    c = p.coeffs()
    n = c.shape[1]
    x0 = np.array([smallest_real_root(c[:, i]) for i in range(n)])
    fx = (3 * c[0] * x0 + 2 * c[1]) * x0 + c[2]
    f = ((c[0] * x0 + c[1]) * x0 + c[2]) * x0 + c[3]
    scale = np.abs(c[0] * x0 ** 3) + np.abs(c[1] * x0 ** 2) + np.abs(c[2] * x0) + np.abs(c[3])
    residual = float(np.max(np.abs(f) / np.where(scale > 0, scale, 1.0)))
    b1min = float(np.min(np.abs(c[2])))
    bad = np.abs(fx) < 0.5 * b1min
    if np.any(bad & (c[3] != 0)):
        i = int(np.argmax(bad))
        raise PreconditionFailure(f"|f_x(x0)| = {abs(fx[i]):.3e} below half of inf|b1| at point {i}")
    dx0 = None
    if p.db is not None:
        db = np.asarray(p.db, dtype=float)
        fa = ((db[0] * x0 + db[1]) * x0 + db[2]) * x0 + db[3]
        dx0 = -fa / np.where(fx != 0, fx, np.inf)
    c9 = float(np.max(np.abs(x0)) / p.eps ** (4.0 / 3.0)) if p.eps > 0 else 0.0
    return ShiftResult(x0, dx0, c9, residual)


def choose_case(g000, g100, tol=1e-12):
    """Case 1 if the constant average is bounded away from zero, Case 2 if only the linear one is."""
    g000, g100 = np.abs(np.atleast_1d(g000)), np.abs(np.atleast_1d(g100))
    if g000.size and g000.min() > tol:
        return 1
    if np.all(g000 <= tol) and g100.min() > tol:
        return 2
    raise ConfigurationError("neither case applies: the constant average vanishes somewhere while "
                             "not vanishing identically, or both averages vanish")


def initial_shift_case(g1, Omega1, eps0, case, weighted=False, tol=1e-14):
    """Root w10 of Omega1 u^3 + sum_l eps0^(1+l) G_l u^l (first step).

    g1: (4, n) averages G_{1,l00}, l = 0..3.  With ``weighted`` the eps0 powers
    are already applied.  Returns (w10, info).
    """
    g1 = np.atleast_2d(np.asarray(g1, dtype=np.complex128))
    if np.abs(g1.imag).max(initial=0.0) > 1e-10 * max(1.0, np.abs(g1).max(initial=0.0)):
        raise ConfigurationError("component-1 averages are not real")
    g1 = g1.real
    Omega1 = np.broadcast_to(np.asarray(Omega1, dtype=float), g1.shape[1:])
    w = np.ones(4) if weighted else eps0 ** (1.0 + np.arange(4))
    cw = g1 * w[:, None]
    unweighted = cw / (eps0 ** (1.0 + np.arange(4)))[:, None]
    if case == 1:
        bad = np.abs(unweighted[0]) <= tol
        if bad.any():
            raise ConfigurationError(f"Case 1 needs a non-zero constant average; it vanishes at point {int(np.argmax(bad))}")
        w10 = np.empty(g1.shape[1])
        for i in range(g1.shape[1]):
            c = np.array([Omega1[i] + cw[3, i], cw[2, i], cw[1, i], cw[0, i]])
            guess = -np.cbrt(cw[0, i] / c[0])
            w10[i] = _polish(c, guess, iters=60)
        scaled = np.abs(w10) / eps0 ** (1.0 / 3.0)
        info = {"case": 1, "c4": float(scaled.min()), "c5": float(scaled.max())}
        return w10, info
    if case == 2:
        bad = np.abs(unweighted[1]) <= tol
        if bad.any():
            raise ConfigurationError(f"Case 2 needs a non-zero linear average; it vanishes at point {int(np.argmax(bad))}")
        info = {"case": 2, "refiled_constant": float(np.abs(cw[0]).max())}
        return np.zeros(g1.shape[1]), info
    raise ConfigurationError(f"unknown case {case!r}")


def update_normal_form(nf, w10, drift):
    """Omega_j+ from the diagonal drift; e2+, e1+ from the shifted cubic."""
    g = np.asarray(drift.g1).real
    w10 = np.asarray(w10, dtype=float)
    Om1 = np.asarray(nf.Omega1) + g[3]
    e2 = np.asarray(nf.e2) + 3 * Om1 * w10 + g[2]
    e1 = np.asarray(nf.e1) + 3 * Om1 * w10 ** 2 + 2 * (np.asarray(nf.e2) + g[2]) * w10 + g[1]
    return NormalForm(Om1, np.asarray(nf.Omega2) + drift.g2, np.asarray(nf.Omega3) + drift.g3, e1, e2)
