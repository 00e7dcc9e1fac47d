"""Independent reference computations used by several test modules."""
import numpy as np
from scipy.linalg import solve_sylvester

from qpkam.homological import HomologicalProblem, build_remainders, drift_field, homological_lhs
from qpkam.qp_field import FourierGrid, QPPolyField, monomial_basis
from qpkam.system import NormalForm

GOLDEN = (np.sqrt(5) - 1) / 2
LOWER = ((0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0), (0, 1, 0), (0, 0, 1))


# ---------------------------------------------------------------------------
# random homological problems

def random_problem(rng, Kcut, n_a=1, degree=5):
    """Reality-satisfying lower-degree right-hand side with a generic normal form."""
    kmax = Kcut
    grid = FourierGrid(2, 3 * kmax + 1 + (3 * kmax + 1) % 2, kmax)
    basis = monomial_basis(degree)
    params = np.linspace(0.3, 0.9, n_a)
    G = QPPolyField.zeros(grid, basis, params)
    decay = np.exp(-0.3 * grid.knorm)
    for l in LOWER:
        vals = rng.normal(size=(n_a, 3) + grid.shape) + 1j * rng.normal(size=(n_a, 3) + grid.shape)
        G.coeffs[:, :, basis.idx(l)] = grid.to_coeffs(vals, K=Kcut) * decay
    G = G.enforce_reality()
    scale = rng.uniform(0.7, 1.6)
    omega = np.tile(scale * np.array([1.0, GOLDEN]), (n_a, 1))
    om2 = rng.uniform(0.3, 2.0, n_a) * 1j + rng.uniform(-0.05, 0.05, n_a)
    nf = NormalForm(rng.uniform(0.5, 3.0, n_a), om2, np.conj(om2),
                    rng.uniform(0.2, 1.0, n_a) * rng.choice([-1, 1]), rng.uniform(-0.5, 0.5, n_a))
    eps0 = float(rng.uniform(0.05, 0.4))
    return HomologicalProblem(omega, Kcut, nf, eps0, G)


def resubstitution_residual(problem, sol):
    """Relative residual of the homological identity with the drift and degree-4/5 spill-over."""
    U, G, nf, e0 = sol.U, problem.G, problem.nf, problem.eps0
    lhs = homological_lhs(U, nf, G, problem.omega, e0, problem.Kcut)
    R2 = build_remainders(U, nf, G, None, e0, problem.Kcut)["R2"]
    J = np.array([e0 ** 2, 1.0, 1.0]).reshape(1, 3, 1, 1, 1)
    res = lhs.coeffs - J * drift_field(sol.drift, G).coeffs - J * R2.coeffs
    scale = max(np.abs(lhs.coeffs).max(), np.abs(J * G.coeffs).max())
    return float(np.abs(res).max() / scale)


# ---------------------------------------------------------------------------
# collocation

def diff_matrix(N):
    """Spectral differentiation on N equispaced points of [0, 2 pi), N odd."""
    assert N % 2 == 1
    j = np.arange(N)
    d = j[:, None] - j[None, :]
    with np.errstate(divide="ignore"):
        D = 0.5 * (-1.0) ** d / np.sin(d * np.pi / N)
    D[d == 0] = 0.0
    return D


class Collocation:
    def __init__(self, Kcut):
        self.K = Kcut
        self.N = 2 * Kcut + 1
        self.phi = 2 * np.pi * np.arange(self.N) / self.N
        self.D = diff_matrix(self.N)
        ks = np.arange(-Kcut, Kcut + 1)
        self.ks = ks
        self.E = np.exp(1j * np.outer(self.phi, ks))            # (N, 2K+1)

    def values(self, coeffs, grid):
        """Direct evaluation of a Fourier coefficient array (library layout) on the collocation grid."""
        C = np.zeros((len(self.ks), len(self.ks)), dtype=np.complex128)
        for i, k1 in enumerate(self.ks):
            for j, k2 in enumerate(self.ks):
                C[i, j] = coeffs[k1 % grid.N, k2 % grid.N]
        return self.E @ C @ self.E.T

    def solve(self, omega, lam, R, subtract_average):
        """omega.d_phi u + lam u = R on the grid; with subtract_average the mean is removed first."""
        drift = R.mean() if subtract_average else 0.0
        R = R - drift
        if subtract_average and abs(lam) < 1e-14:
            n = self.N
            I = np.eye(n)
            L = omega[0] * np.kron(self.D, I) + omega[1] * np.kron(I, self.D)
            A = np.zeros((n * n + 1, n * n + 1), dtype=np.complex128)
            A[:-1, :-1] = L
            A[:-1, -1] = 1.0
            A[-1, :-1] = 1.0
            x = np.linalg.solve(A, np.append(R.reshape(-1), 0.0))
            return x[:-1].reshape(n, n), drift
        # both operands complex: mixed real/complex input gives wrong results
        A = (omega[0] * self.D + lam * np.eye(self.N)).astype(np.complex128)
        B = (omega[1] * self.D.T).astype(np.complex128)
        return solve_sylvester(A, B, R), drift


def collocation_chain(problem, ia=0):
    """All lower-degree U_jl and the drift at parameter index ia, by collocation solves."""
    G = problem.G
    grid = G.grid
    col = Collocation(problem.Kcut)
    om = problem.omega[ia]
    nf = problem.nf
    e02 = problem.eps0 ** 2
    Om1, e1, e2 = (complex(np.asarray(x)[ia]) for x in (nf.Omega1, nf.e1, nf.e2))
    Om = {1: complex(np.asarray(nf.Omega2)[ia]), 2: complex(np.asarray(nf.Omega3)[ia])}
    g = {(j, l): col.values(G.coeffs[ia, j, G.basis.idx(l)], grid) for j in range(3) for l in LOWER}
    U, drift = {}, {}
    zero = np.zeros((col.N, col.N), dtype=np.complex128)
    # component 1: coefficient of u1^m in J DN(u) U - DU J N(u)
    for m in range(4):
        rhs = e02 * g[0, (m, 0, 0)]
        rhs = rhs + (3 - m) * e02 * e2 * U.get((0, m - 1), zero) + (5 - m) * e02 * Om1 * U.get((0, m - 2), zero)
        U[0, m], d = col.solve(om, (m - 1) * e02 * e1, rhs, True)
        drift[0, m] = d / e02
    U[0, "w2"], _ = col.solve(om, Om[1] - e02 * e1, e02 * g[0, (0, 1, 0)], False)
    U[0, "w3"], _ = col.solve(om, Om[2] - e02 * e1, e02 * g[0, (0, 0, 1)], False)
    for comp, own, other in ((1, (0, 1, 0), (0, 0, 1)), (2, (0, 0, 1), (0, 1, 0))):
        own_om, other_om = Om[comp], Om[3 - comp]
        for p in range(4):
            rhs = g[comp, (p, 0, 0)] - (p - 1) * e02 * e2 * U.get((comp, p - 1), zero) \
                - (p - 2) * e02 * Om1 * U.get((comp, p - 2), zero)
            U[comp, p], _ = col.solve(om, p * e02 * e1 - own_om, rhs, False)
        U[comp, "own"], drift[comp] = col.solve(om, 0.0, g[comp, own], True)
        U[comp, "other"], _ = col.solve(om, other_om - own_om, g[comp, other], False)
    return col, U, drift


def compare_with_collocation(problem, sol, ia=0):
    """Largest relative difference between the library chain and the collocation chain."""
    col, U, drift = collocation_chain(problem, ia)
    b = sol.U.basis
    names = {**{(0, m): (0, (m, 0, 0)) for m in range(4)}, (0, "w2"): (0, (0, 1, 0)),
             (0, "w3"): (0, (0, 0, 1))}
    for comp, own, other in ((1, (0, 1, 0), (0, 0, 1)), (2, (0, 0, 1), (0, 1, 0))):
        names.update({(comp, p): (comp, (p, 0, 0)) for p in range(4)})
        names[comp, "own"] = (comp, own)
        names[comp, "other"] = (comp, other)
    scale = max(np.abs(v).max() for v in U.values())
    worst = 0.0
    for key, (j, l) in names.items():
        lib = col.values(sol.U.coeffs[ia, j, b.idx(l)], sol.U.grid)
        worst = max(worst, float(np.abs(lib - U[key]).max()) / scale)
    dscale = max(1.0, max(abs(v) for v in drift.values()))
    for m in range(4):
        worst = max(worst, abs(sol.drift.g1[m, ia] - drift[0, m]) / dscale)
    worst = max(worst, abs(sol.drift.g2[ia] - drift[1]) / dscale, abs(sol.drift.g3[ia] - drift[2]) / dscale)
    return worst
