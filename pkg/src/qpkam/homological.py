"""Homological equations for the lower-degree part of the perturbation.

Unknown: U = (U1, U2, U3), each a polynomial supported on the six lower
monomials 1, w1, w1^2, w1^3, w2, w3 with Fourier coefficients in phi.  With
J = diag(eps0^2, 1, 1) and the normal part

    N(u) = (Omega1 u1^3 + e2 u1^2 + e1 u1, Omega2 u2, Omega3 u3)

U solves  J DN(u) U + J Gamma_K G - omega.d_phi U - DU J N(u) = J Nhat(u) + J R2
where Nhat collects the phi-averages that cannot be removed (the drift) and R2
holds the degree-4 and 5 spill-over.  Every scalar equation is diagonal in
Fourier space, so each one is a single division by i<k, omega> + lambda.
"""
from dataclasses import dataclass

import numpy as np

from .qp_field import (QPPolyField, PointPoly, field_to_points, points_to_field, substitute,
                       NearIdentity, reality_check)
from .system import NormalForm


class ResonanceViolation(ArithmeticError):
    pass


DIVISOR_FLOOR = 1e-300


def divisors(grid, omega, lam):
    """i<k, omega> + lambda on the mode grid: (n_a, *shape)."""
    lam = np.asarray(lam, dtype=np.complex128).reshape((-1,) + (1,) * grid.n0)
    return 1j * grid.dot_omega(omega) + lam


def solve_scalar(grid, omega, lam, rhs, subtract_average, Kcut=None, label=""):
    """Solve omega.d_phi u + lambda u = rhs mode by mode.

    rhs: (n_a, *shape) coefficients.  With ``subtract_average`` the zero mode is
    removed first and returned as the drift; u then has zero average.
    Returns (u, drift, min |divisor| over the modes actually divided).
    """
    rhs = np.asarray(rhs, dtype=np.complex128)
    if rhs.ndim == grid.n0:
        rhs = rhs[None]
    K = grid.kmax if Kcut is None else Kcut
    keep = grid.knorm <= K
    d = divisors(grid, omega, lam)
    d = np.broadcast_to(d, rhs.shape)
    zero = (slice(None),) + (0,) * grid.n0
    drift = rhs[zero].copy() if subtract_average else np.zeros(rhs.shape[0], dtype=np.complex128)
    active = np.broadcast_to(keep, rhs.shape).copy()
    if subtract_average:
        active[zero] = False
    active &= rhs != 0
    small = active & (np.abs(d) < DIVISOR_FLOOR)
    if small.any():
        idx = np.argwhere(small)[0]
        k = grid.kvec[(slice(None),) + tuple(idx[1:])]
        raise ResonanceViolation(f"divisor underflow in {label or 'scalar equation'} at k={k.tolist()}, "
                                 f"parameter index {idx[0]}")
    u = np.zeros_like(rhs)
    u[active] = rhs[active] / d[active]
    mind = float(np.abs(d[active]).min()) if active.any() else np.inf
    return u, drift, mind


@dataclass(frozen=True)
class DriftNormal:
    """phi-averages of G_{1,l1 0 0} (l1 = 0..3), G_{2,010}, G_{3,001}; one entry per parameter point."""
    g1: np.ndarray          # (4, n_a)
    g2: np.ndarray          # (n_a,)
    g3: np.ndarray          # (n_a,)

    def reality_violation(self):
        return float(max(np.abs(self.g1.imag).max(initial=0.0),
                         np.abs(self.g2 - np.conj(self.g3)).max(initial=0.0)))

    def select(self, idx):
        return DriftNormal(self.g1[:, idx], self.g2[idx], self.g3[idx])


@dataclass(frozen=True)
class HomologicalProblem:
    omega: np.ndarray       # (n_a, n0)
    Kcut: int
    nf: NormalForm
    eps0: float
    G: QPPolyField          # lower-degree part of the perturbation (normal part removed)


@dataclass
class ChainSolution:
    U: QPPolyField
    drift: DriftNormal
    ledger: list


def solve_chain(problem, check_reality=False):
    """Solve all lower-degree equations; returns U, the drift and a per-equation ledger."""
    G = problem.G
    grid, basis = G.grid, G.basis
    idx = basis.idx
    om, nf, e02, K = problem.omega, problem.nf, problem.eps0 ** 2, problem.Kcut
    if check_reality:
        rep = reality_check(G)
        if rep.relative > 1e-10:
            raise ValueError(f"right-hand side violates the reality condition ({rep.max_violation:.2e})")
    n_a = G.n_a
    Gc = G.truncated(K).coeffs
    U = np.zeros_like(G.coeffs)
    ledger = []
    bc = (slice(None),) + (None,) * grid.n0
    Omega1, e1, e2 = (np.asarray(x, dtype=np.complex128) for x in (nf.Omega1, nf.e1, nf.e2))
    Omega2, Omega3 = np.asarray(nf.Omega2), np.asarray(nf.Omega3)

    def run(comp, l, lam, rhs, avg, name):
        u, drift, mind = solve_scalar(grid, om, lam, rhs, avg, K, name)
        U[:, comp, idx(l)] = u
        ledger.append({"equation": name, "max_inv_divisor": 1.0 / mind if mind > 0 else np.inf,
                       "drift": np.abs(drift).max(initial=0.0)})
        return drift

    # component 1: the w1-chain, solved in the order l1 = 0, 1, 2, 3
    g1 = np.zeros((4, n_a), dtype=np.complex128)
    for m in range(4):
        rhs = e02 * Gc[:, 0, idx((m, 0, 0))]
        if m >= 1:
            rhs = rhs - (m - 3) * e02 * e2[bc] * U[:, 0, idx((m - 1, 0, 0))]
        if m >= 2:
            rhs = rhs - (m - 5) * e02 * Omega1[bc] * U[:, 0, idx((m - 2, 0, 0))]
        d = run(0, (m, 0, 0), (m - 1) * e02 * e1, rhs, True, f"U1[{m}00]")
        g1[m] = d / e02 if e02 != 0 else d
    run(0, (0, 1, 0), Omega2 - e02 * e1, e02 * Gc[:, 0, idx((0, 1, 0))], False, "U1[010]")
    run(0, (0, 0, 1), Omega3 - e02 * e1, e02 * Gc[:, 0, idx((0, 0, 1))], False, "U1[001]")

    # components 2 and 3: the w1-chain with shift -Omega_j, then the linear terms
    drift23 = []
    for comp, Om, own, other, Om_other in ((1, Omega2, (0, 1, 0), (0, 0, 1), Omega3),
                                            (2, Omega3, (0, 0, 1), (0, 1, 0), Omega2)):
        for p in range(4):
            rhs = Gc[:, comp, idx((p, 0, 0))].copy()
            if p >= 1:
                rhs = rhs - (p - 1) * e02 * e2[bc] * U[:, comp, idx((p - 1, 0, 0))]
            if p >= 2:
                rhs = rhs - (p - 2) * e02 * Omega1[bc] * U[:, comp, idx((p - 2, 0, 0))]
            run(comp, (p, 0, 0), p * e02 * e1 - Om, rhs, False, f"U{comp + 1}[{p}00]")
        drift23.append(run(comp, own, np.zeros(n_a), Gc[:, comp, idx(own)], True,
                           f"U{comp + 1}[{''.join(map(str, own))}]"))
        run(comp, other, Om_other - Om, Gc[:, comp, idx(other)], False,
            f"U{comp + 1}[{''.join(map(str, other))}]")
    drift = DriftNormal(g1, drift23[0], drift23[1])
    return ChainSolution(G.with_coeffs(U), drift, ledger)


# ---------------------------------------------------------------------------
# residual algebra (independent of the closed-form chain above)

def _points(F):
    pts = field_to_points(F)
    return [PointPoly(F.basis, pts[j]) for j in range(3)]


def jacobian_apply(Fp, Vp):
    """sum_i dF/dw_i * V_i for lists of three PointPoly."""
    out = []
    for j in range(3):
        acc = None
        for i in range(3):
            term = Fp[j].deriv(i) * Vp[i]
            acc = term if acc is None else acc + term
        out.append(acc)
    return out


def _from_points(like, polys):
    return points_to_field(like, np.stack([p.data for p in polys]), K=None)


def homological_lhs(U, nf, G, omega, eps0, Kcut):
    """J DN(u) U + J Gamma_K G - omega.d_phi U - DU J N(u), as a field."""
    J = np.array([eps0 ** 2, 1.0, 1.0])
    Jb = J.reshape((1, 3, 1) + (1,) * U.grid.n0)
    Nf = nf.as_field(U)
    Np, Up = _points(Nf), _points(U)
    JN = [p for p in _points(Nf.with_coeffs(Nf.coeffs * Jb))]
    dnu = _from_points(U, jacobian_apply(Np, Up))
    duN = _from_points(U, jacobian_apply(Up, JN))
    lhs = dnu.coeffs * Jb + G.truncated(Kcut).coeffs * Jb - U.omega_derivative(omega).coeffs - duN.coeffs
    return U.with_coeffs(lhs)


def drift_field(drift, like):
    """Nhat as a field: averages placed on the diagonal monomials."""
    F = QPPolyField.zeros(like.grid, like.basis, like.params, r=like.r, s=like.s)
    z = (0,) * like.grid.n0
    idx = like.basis.idx
    for m in range(4):
        F.coeffs[(slice(None), 0, idx((m, 0, 0))) + z] = drift.g1[m]
    F.coeffs[(slice(None), 1, idx((0, 1, 0))) + z] = drift.g2
    F.coeffs[(slice(None), 2, idx((0, 0, 1))) + z] = drift.g3
    return F


def build_remainders(U, nf, G, F, eps0, Kcut):
    """Second-order pieces produced by one step, tagged by origin.

    Returns a dict with
      R1    : ((3 Omega1 u1 + e2) U1^2 + Omega1 U1^3, 0, 0)
      R2    : (R21, eps0^2 R22, eps0^2 R23), the degree-4/5 spill-over
      DGU   : G(u + U) - G(u)  (the integral of DG(u + xi U) U over xi)
      tail  : (Id - Gamma_K) G
      total : sum of the above
    F is accepted for provenance only; its composition is handled by the step.
    """
    basis, grid = U.basis, U.grid
    idx = basis.idx
    n_a, npts = U.n_a, grid.npts

    def const(vals):
        return PointPoly.constant(basis, np.repeat(np.broadcast_to(vals, (n_a,)), npts).astype(np.complex128))

    def mono(l, values):
        d = np.zeros((basis.size, n_a * npts), dtype=np.complex128)
        d[idx(l)] = values
        return PointPoly(basis, d)

    pts = field_to_points(U)                                    # (3, M, P)
    Om1p = np.repeat(np.asarray(nf.Omega1, dtype=np.complex128), npts)
    e2p = np.repeat(np.asarray(nf.e2, dtype=np.complex128), npts)
    u1 = mono((1, 0, 0), np.ones(n_a * npts))
    U1 = _points(U)[0]
    lin = u1 * const(3 * np.asarray(nf.Omega1)) + const(np.asarray(nf.e2))
    R1_1 = lin * U1 * U1 + const(np.asarray(nf.Omega1)) * U1 * U1 * U1
    zero = PointPoly(basis, np.zeros_like(R1_1.data))
    R1 = _from_points(U, [R1_1, zero, zero])

    # R21 = (Omega1 U_{1,200} - e2 U_{1,300}) u1^4 + sum_{l2+l3=1} (2 e2 + 3 Omega1 u1) U_{1,0l2l3} u1 u^l
    u14 = (4, 0, 0)
    r21 = mono(u14, Om1p * pts[0, idx((2, 0, 0))] - e2p * pts[0, idx((3, 0, 0))])
    for l, l_up in (((0, 1, 0), (1, 1, 0)), ((0, 0, 1), (1, 0, 1))):
        c = pts[0, idx(l)]
        r21 = r21 + mono(l_up, 2 * e2p * c) + mono((l_up[0] + 1, l_up[1], l_up[2]), 3 * Om1p * c)
    rows = [r21]
    for comp in (1, 2):
        c2, c3 = pts[comp, idx((2, 0, 0))], pts[comp, idx((3, 0, 0))]
        r = mono(u14, -(2 * Om1p * c2 + 3 * e2p * c3)) + mono((5, 0, 0), -3 * Om1p * c3)
        rows.append(PointPoly(basis, eps0 ** 2 * r.data))
    R2 = _from_points(U, rows)

    T = NearIdentity(np.zeros((n_a, 3)), U)
    DGU = substitute(G, T.polys(G)) - G
    tail = G - G.truncated(Kcut)
    total = R1 + R2 + DGU + tail
    return {"R1": R1, "R2": R2, "DGU": DGU, "tail": tail, "total": total}
