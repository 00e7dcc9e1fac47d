"""Delayed van der Pol oscillator at its zero-Hopf point.

    x'' + a (x^2 - 1) x' + x = f(x(t - tau)) + eps g(omega' t, x(t), x(t - tau)),
    f(x) = b x + b1 x^3,  b = 1.

At tau = tau0(a) the linearisation has a simple zero root and the pair
+-i omega0 with omega0 = sqrt(2 - a^2).  After rescaling time by tau0 the
centre subspace is spanned by z1, z2, z3 on [-1, 0]; projecting with the dual
basis psi1, psi2, psi3 gives a three-dimensional system of the form consumed by
the KAM engine (hyperbolic directions dropped).
"""
from dataclasses import dataclass, field

import numpy as np

from .qp_field import QPPolyField, PointPoly, points_to_field
from .resonance import check_diophantine
from .translate import ConfigurationError


GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
DEFAULT_FORCING = (
    {"m": 0, "n": 0, "k": [0, 0], "cos": 1.0},
    {"m": 0, "n": 0, "k": [1, 0], "cos": 1.0},
)


def critical_point(a):
    """(omega0, tau0) of the zero-Hopf point; the arcsin branch switches at a = 1."""
    a = np.asarray(a, dtype=float)
    if np.any((a <= 0) | (a >= np.sqrt(2.0))):
        raise ValueError("a must lie in (0, sqrt(2))")
    w0 = np.sqrt(2.0 - a * a)
    s = np.clip(a * w0, -1.0, 1.0)
    theta = np.where(a > 1.0, np.arcsin(s), np.pi - np.arcsin(s))
    return w0, theta / w0


def characteristic(lam, a, tau, b=1.0):
    return lam * lam - a * lam + 1.0 - b * np.exp(-tau * lam)


def characteristic_prime(lam, a, tau, b=1.0):
    return 2 * lam - a + b * tau * np.exp(-tau * lam)


def b_coefficients(a):
    """(b2, b3) in the simplified form and in the form before using the characteristic equation."""
    w0, t0 = critical_point(a)
    th = t0 * w0
    simple = (0.5 * (a + t0 - t0 * a * a), 0.5 * w0 * (a * t0 - 2.0))
    raw = (0.5 * (a - t0 * np.cos(th)), -w0 + 0.5 * t0 * np.sin(th))
    return simple, raw


@dataclass(frozen=True)
class CenterBasis:
    a: float
    omega0: float
    tau0: float
    b2: float
    b3: float
    U: np.ndarray

    @property
    def theta0(self):
        return self.tau0 * self.omega0

    def z(self, theta):
        """Rows z1, z2, z3 at theta in [-1, 0]: array (3, 2, len(theta))."""
        th = np.atleast_1d(theta) * self.theta0
        one, zero = np.ones_like(th), np.zeros_like(th)
        w0 = self.omega0
        return np.array([[one, zero],
                         [np.sin(th), w0 * np.cos(th)],
                         [np.cos(th), -w0 * np.sin(th)]])

    def psi(self, s):
        """Rows psi1, psi2, psi3 at s in [0, 1]: array (3, 2, len(s))."""
        a, t0, w0, b2, b3 = self.a, self.tau0, self.omega0, self.b2, self.b3
        th = np.atleast_1d(s) * self.theta0
        c, sn = np.cos(th), np.sin(th)
        q = 1.0 / (2.0 * (b2 * b2 + b3 * b3))
        one = np.ones_like(th)
        return np.array([
            [a / (a - t0) * one, -1.0 / (a - t0) * one],
            [q * (w0 * (t0 - a) * c + (4 - a * a - a * t0) * sn), q * (-2 * b2 * sn - 2 * b3 * c)],
            [q * ((4 - a * a - a * t0) * c - w0 * (t0 - a) * sn), q * (2 * b3 * sn - 2 * b2 * c)],
        ])

    def duality(self, nodes=64):
        """<psi_i, z_j> = psi(0) z(0) + int_0^1 psi(s) B z(s - 1) ds with B = [[0,0],[tau0,0]]."""
        x, w = np.polynomial.legendre.leggauss(nodes)
        s = 0.5 * (x + 1.0)
        w = 0.5 * w
        B = np.array([[0.0, 0.0], [self.tau0, 0.0]])
        p0 = self.psi(np.array([0.0]))[:, :, 0]
        z0 = self.z(np.array([0.0]))[:, :, 0]
        M = p0 @ z0.T
        P = self.psi(s)                     # (3, 2, n)
        Z = self.z(s - 1.0)                 # (3, 2, n)
        BZ = np.einsum("ij,kjn->kin", B, Z)
        M = M + np.einsum("ipn,kpn,n->ik", P, BZ, w)
        return M

    def psi0_second(self):
        """Second entries of psi_j(0): the projection of col(0, 1)."""
        return self.psi(np.array([0.0]))[:, 1, 0]


def build_basis(a):
    a = float(a)
    w0, t0 = critical_point(a)
    w0, t0 = float(w0), float(t0)
    if abs(a - t0) < 1e-8:
        raise ConfigurationError(f"a - tau0 = {a - t0:.2e} makes the dual basis degenerate")
    (b2, b3), _ = b_coefficients(a)
    th = t0 * w0
    U = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -th], [0.0, th, 0.0]])
    return CenterBasis(a, w0, t0, float(b2), float(b3), U)


# ---------------------------------------------------------------------------
# characteristic roots

@dataclass
class GapReport:
    a: float
    roots: np.ndarray          # non-critical roots, nearest the imaginary axis first
    critical: np.ndarray
    gap: float
    newton_count: int
    contour_count: int

    @property
    def ok(self):
        return self.gap > 0 and self.newton_count == self.contour_count


def _newton(lam, a, tau, iters=60):
    with np.errstate(all="ignore"):
        return _newton_loop(lam, a, tau, iters)


def _newton_loop(lam, a, tau, iters):
    for _ in range(iters):
        f = characteristic(lam, a, tau)
        fp = characteristic_prime(lam, a, tau)
        step = f / np.where(fp != 0, fp, 1.0)
        # damping for large steps
        big = np.abs(step) > 2.0
        step = np.where(big, 2.0 * step / np.abs(step), step)
        lam = lam - step
    return lam


def roots_in_box(a, tau, im_max=40.0, re_min=-10.0, re_max=1.0, strips=40):
    seeds = []
    h = 2 * np.pi / tau
    nmax = int(np.ceil(im_max / h)) + 2
    # branch iteration lam = -(Log(lam^2 - a lam + 1) + 2 pi i n)/tau near the asymptotic roots
    for n in range(-nmax, nmax + 1):
        lam = complex(-1.0, 2 * np.pi * n / tau)
        for _ in range(40):
            arg = lam * lam - a * lam + 1.0
            if arg == 0:
                break
            lam = -(np.log(arg) - 2j * np.pi * n) / tau
        seeds.append(lam)
    # strip seeds
    for j in range(-strips // 2, strips // 2 + 1):
        for re in (re_min + 1.0, -6.0, -3.0, -1.0, -0.3, 0.0, 0.5):
            seeds.append(complex(re, (j + 0.5) * h))
    seeds.extend([0.0, 0.1j, -0.1j, 1j, -1j])
    lam = _newton(np.array(seeds, dtype=complex), a, tau)
    ok = np.abs(characteristic(lam, a, tau)) < 1e-10 * (1 + np.abs(lam) ** 2)
    lam = lam[ok]
    inside = (np.abs(lam.imag) <= im_max) & (lam.real >= re_min) & (lam.real <= re_max)
    lam = lam[inside]
    out = []
    for z in lam[np.argsort(-lam.real)]:
        if all(abs(z - u) > 1e-9 * max(1.0, abs(z)) for u in out):
            out.append(z)
    return np.array(out)


def contour_count(a, tau, im_max=40.0, re_min=-10.0, re_max=1.0, n=4000):
    """Zeros inside the box by the argument principle along its boundary."""
    corners = [complex(re_max, -im_max), complex(re_max, im_max), complex(re_min, im_max),
               complex(re_min, -im_max), complex(re_max, -im_max)]
    total = 0.0
    for z0, z1 in zip(corners[:-1], corners[1:]):
        m = n
        while True:
            t = np.linspace(0.0, 1.0, m + 1)
            vals = characteristic(z0 + (z1 - z0) * t, a, tau)
            d = np.angle(vals[1:] / vals[:-1])
            if np.max(np.abs(d)) < 0.5 or m > 2 ** 22:
                break
            m *= 4
        total += d.sum()
    return int(round(total / (2 * np.pi)))


def spectrum_gap(a, tau0, N, im_max=40.0, re_min=-10.0, re_max=1.0):
    """min over the N non-critical roots nearest the imaginary axis of -Re(lambda)."""
    a = float(a)
    w0 = float(np.sqrt(2 - a * a))
    if N <= 0:
        return GapReport(a, np.zeros(0, complex), np.zeros(0, complex), np.inf, 0, 0)
    roots = roots_in_box(a, tau0, im_max, re_min, re_max)
    crit_targets = np.array([0.0, 1j * w0, -1j * w0])
    is_crit = np.array([np.min(np.abs(z - crit_targets)) < 1e-8 for z in roots])
    rest = roots[~is_crit]
    rest = rest[np.argsort(-rest.real)][:N]
    gap = float(-rest.real.max()) if len(rest) else np.inf
    return GapReport(a, rest, roots[is_crit], gap, len(roots), contour_count(a, tau0, im_max, re_min, re_max))


# ---------------------------------------------------------------------------
# reduction to the centre system

@dataclass
class VdpConfig:
    interval: tuple = (0.25, 1.25)
    b: float = 1.0
    b1: float = 1.0
    omega_prime: tuple = (1.0, GOLDEN)
    forcing: tuple = DEFAULT_FORCING
    eps: float = 1e-6
    gamma0: float = 1e-3


class VdpModel:
    """Centre-only model; frequencies tau0(a) omega' because time is rescaled by tau0."""

    kind = "vdp"

    def __init__(self, cfg):
        self.cfg = cfg
        self.n0 = len(cfg.omega_prime)
        for t in cfg.forcing:
            if len(t.get("k", [0] * self.n0)) != self.n0:
                raise ValueError("forcing harmonic has the wrong dimension")

    def frequencies(self, a):
        _, t0 = critical_point(np.atleast_1d(a))
        return t0[:, None] * np.asarray(self.cfg.omega_prime, dtype=float)[None, :]

    def prefactors(self, a):
        """tau0 * psi_j(0)[2]: how the scalar nonlinearity enters each centre row."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        w0, t0 = critical_point(a)
        (b2, b3), _ = b_coefficients(a)
        q = b2 * b2 + b3 * b3
        return np.stack([-t0 / (a - t0), -t0 * b3 / q, -t0 * b2 / q]), w0, t0

    def normal_data(self, a):
        c, w0, t0 = self.prefactors(a)
        b1 = self.cfg.b1
        return {"Omega1": c[0] * b1, "Omega2": t0 * w0, "d1": c[1] * b1, "d2": c[2] * b1}

    def linear_forms(self, a):
        """Coefficients of x(t) = v1 + v3, x(t-1) = v1 - sin(th) v2 + cos(th) v3, x'(t) = omega0 v2."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        w0, t0 = critical_point(a)
        th = t0 * w0
        one, zero = np.ones_like(a), np.zeros_like(a)
        x = np.stack([one, zero, one], axis=1)
        xd = np.stack([one, -np.sin(th), np.cos(th)], axis=1)
        dx = np.stack([zero, w0, zero], axis=1)
        return x, xd, dx

    def real_parts(self, params, grid, basis):
        params = np.atleast_1d(np.asarray(params, dtype=float))
        n_a, npts = len(params), grid.npts
        P = n_a * npts
        c, w0, t0 = self.prefactors(params)
        lx, lxd, _ = self.linear_forms(params)

        def linear(coef):
            d = np.zeros((basis.size, P), dtype=np.complex128)
            for i in range(3):
                d[basis.idx(tuple(int(q == i) for q in range(3)))] = np.repeat(coef[:, i], npts)
            return PointPoly(basis, d)

        def const(vals):
            return PointPoly.constant(basis, np.asarray(vals, dtype=np.complex128))

        x, xd = linear(lx), linear(lxd)
        v1 = linear(np.stack([np.ones(n_a), np.zeros(n_a), np.zeros(n_a)], axis=1))
        v2 = linear(np.stack([np.zeros(n_a), np.ones(n_a), np.zeros(n_a)], axis=1))
        b1 = self.cfg.b1
        xd3 = xd * xd * xd
        v13 = v1 * v1 * v1
        aw = np.repeat(params * w0, npts)
        nonlin = (xd3 - v13) * const(np.full(P, b1)) - x * x * v2 * const(aw)
        # forcing g(phi, x, xd)
        phi = grid.phi.reshape(grid.n0, -1)
        g = PointPoly(basis, np.zeros((basis.size, P), dtype=np.complex128))
        xp = [const(np.ones(P))]
        xdp = [const(np.ones(P))]
        deg = max([t["m"] + t["n"] for t in self.cfg.forcing] + [0])
        if deg > basis.degree:
            raise ConfigurationError(f"forcing degree {deg} exceeds the degree cutoff {basis.degree}")
        for _ in range(deg):
            xp.append(xp[-1] * x)
            xdp.append(xdp[-1] * xd)
        for t in self.cfg.forcing:
            k = np.asarray(t.get("k", [0] * grid.n0), dtype=float)
            if np.abs(k).sum() > grid.kmax:
                raise ConfigurationError(f"forcing harmonic {k.tolist()} exceeds kmax={grid.kmax}")
            arg = k @ phi
            vals = t.get("cos", 0.0) * np.cos(arg) + t.get("sin", 0.0) * np.sin(arg)
            g = g + xp[t["m"]] * xdp[t["n"]] * const(np.tile(vals, n_a))
        rows_h, rows_g = [], []
        for j in range(3):
            cj = const(np.repeat(c[j], npts))
            rows_h.append((nonlin * cj).data)
            rows_g.append((g * cj).data)
        like = QPPolyField.zeros(grid, basis, params, coords="v")
        higher = points_to_field(like, np.stack(rows_h))
        pert = points_to_field(like, np.stack(rows_g))
        return higher, pert

    def forcing_averages(self):
        """(g00, g10 + g01): phi-averages of the constant and linear forcing coefficients."""
        g00 = sum(t.get("cos", 0.0) for t in self.cfg.forcing if t["m"] + t["n"] == 0 and not any(t.get("k", [])))
        g1 = sum(t.get("cos", 0.0) for t in self.cfg.forcing if t["m"] + t["n"] == 1 and not any(t.get("k", [])))
        return g00, g1

    def to_dict(self):
        c = self.cfg
        return {"model": "vdp", "b": c.b, "b1": c.b1, "omega_prime": list(c.omega_prime),
                "forcing": [dict(t) for t in c.forcing]}

    @classmethod
    def from_dict(cls, d):
        cfg = VdpConfig(b=float(d.get("b", 1.0)), b1=float(d.get("b1", 1.0)),
                        omega_prime=tuple(d.get("omega_prime", (1.0, GOLDEN))),
                        forcing=tuple(d.get("forcing", DEFAULT_FORCING)))
        if cfg.b != 1.0:
            raise ConfigurationError("the zero-Hopf point requires b = 1")
        return cls(cfg)


def reduce_to_center(cfg, numerics=None, case=None, gate_override=True):
    """SystemSpec for the centre-only desk model of the delayed oscillator."""
    from .system import SystemSpec, Numerics
    if cfg.b1 == 0:
        raise ConfigurationError("b1 = 0: the cubic coefficient must not vanish")
    model = VdpModel(cfg)
    g00, g1 = model.forcing_averages()
    if g00 == 0 and g1 == 0:
        raise ConfigurationError("both the constant and the linear forcing averages vanish")
    return SystemSpec(model, tuple(cfg.interval), cfg.eps, cfg.gamma0, case, gate_override,
                      numerics or Numerics())


@dataclass
class HypothesisReport:
    checks: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(v["pass"] for v in self.checks.values())


def hypothesis_report(cfg, grid_points=257, K=50):
    rep = HypothesisReport()
    rep.checks["b1_nonzero"] = {"pass": cfg.b1 != 0, "value": cfg.b1}
    a = np.linspace(cfg.interval[0], cfg.interval[1], grid_points)
    w0, t0 = critical_point(a)
    d = np.gradient(t0 * w0, a)
    c0 = float(np.min(np.abs(d)))
    rep.checks["frequency_twist"] = {"pass": bool(c0 > 0 and np.all(np.sign(d) == np.sign(d[0]))), "c0": c0}
    n0 = len(cfg.omega_prime)
    cert = check_diophantine(cfg.omega_prime, cfg.gamma0, n0 + 1, K)
    rep.checks["diophantine"] = {"pass": cert.valid, "worst_ratio": cert.worst_ratio, "worst_k": cert.worst_k}
    g00, g1 = VdpModel(cfg).forcing_averages()
    rep.checks["forcing_average"] = {"pass": bool(g00 != 0 or g1 != 0), "g00": g00, "g10+g01": g1,
                                     "case": 1 if g00 != 0 else (2 if g1 != 0 else None)}
    gap_min = np.inf
    for aa in np.linspace(cfg.interval[0], cfg.interval[1], 4):
        _, tt = critical_point(aa)
        gap_min = min(gap_min, spectrum_gap(aa, float(tt), 10).gap)
    rep.checks["spectral_gap"] = {"pass": bool(gap_min > 0), "mu": gap_min}
    return rep
