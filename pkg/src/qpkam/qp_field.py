"""Quasi-periodic polynomial vector fields.

A field has three components; each component is a polynomial of total degree
at most ``D`` in three variables whose coefficients are Fourier series in the
angle phi on the n0-torus, tabulated at a handful of parameter values.

Storage is a dense complex array of shape ``(n_a, 3, M, N, ..., N)``: n_a
parameter points, 3 components, M monomials, then the Fourier coefficients in
FFT layout.  Variables are ``(w1, w2, w3)`` with ``w3`` playing the role of the
conjugate of ``w2`` (or ``(v1, v2, v3)`` for a field in real coordinates).

Products and compositions are done pointwise on the phi-grid and transformed
back, which is exact for band-limited data as long as ``N >= 3*kmax + 1``.
"""
from dataclasses import dataclass, replace
from functools import lru_cache
from math import comb

import numpy as np

from . import kernels


class StepFailure(RuntimeError):
    """A numerical step left its admissible regime (norm blow-up, bound violation)."""


# ---------------------------------------------------------------------------
# monomials

def is_lower(l):
    l1, l2, l3 = l
    return (l2 + l3 == 0 and 0 <= l1 <= 3) or (l2 + l3 == 1 and l1 == 0)


def is_higher(l):
    l1, l2, l3 = l
    return l1 >= 4 or (l1 + l2 + l3 >= 2 and l2 + l3 >= 1)


LOWER_INDICES = ((0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0), (0, 1, 0), (0, 0, 1))


class MonomialBasis:
    """Graded list of exponent triples with |l| <= degree plus product tables."""

    def __init__(self, degree):
        if degree < 3:
            raise ValueError("degree cutoff must be at least 3")
        self.degree = degree
        exps = []
        for d in range(degree + 1):
            for l1 in range(d, -1, -1):
                for l2 in range(d - l1, -1, -1):
                    exps.append((l1, l2, d - l1 - l2))
        self.exps = np.array(exps, dtype=np.int64)
        self.size = len(exps)
        self.index = {e: i for i, e in enumerate(exps)}
        self.degrees = self.exps.sum(axis=1)
        self.lower_mask = np.array([is_lower(e) for e in exps])
        self.higher_mask = np.array([is_higher(e) for e in exps])
        self.conj_perm = np.array([self.index[(e[0], e[2], e[1])] for e in exps])
        pairs = []
        for i, a in enumerate(exps):
            for j, b in enumerate(exps):
                s = (a[0] + b[0], a[1] + b[1], a[2] + b[2])
                if sum(s) <= degree:
                    pairs.append((i, j, self.index[s]))
        self.pairs = np.array(pairs, dtype=np.int64)

    def idx(self, l):
        return self.index[tuple(l)]

    def lower_indices(self):
        return [self.index[l] for l in LOWER_INDICES]

    def deriv_map(self, var):
        """(src, dst, factor): d/dw_var maps monomial src to factor * monomial dst."""
        src, dst, fac = [], [], []
        for i, e in enumerate(self.exps):
            if e[var] > 0:
                f = list(e)
                f[var] -= 1
                src.append(i)
                dst.append(self.index[tuple(f)])
                fac.append(e[var])
        return np.array(src), np.array(dst), np.array(fac, dtype=float)

    def pairs_for(self, left_rows, right_rows):
        """Product pairs restricted to rows with non-zero data."""
        p = self.pairs
        keep = left_rows[p[:, 0]] & right_rows[p[:, 1]]
        return p[keep]


@lru_cache(maxsize=None)
def monomial_basis(degree=6):
    return MonomialBasis(degree)


# ---------------------------------------------------------------------------
# Fourier grid and single series

class FourierGrid:
    """Uniform N^n0 grid on the torus with modes |k|_1 <= kmax kept."""

    def __init__(self, n0, N, kmax):
        if 3 * kmax + 1 > N:
            raise ValueError(f"grid N={N} too coarse for kmax={kmax} (need N >= 3*kmax+1)")
        self.n0, self.N, self.kmax = n0, N, kmax
        self.shape = (N,) * n0
        self.axes = tuple(range(-n0, 0))
        freqs = np.rint(np.fft.fftfreq(N) * N).astype(np.int64)
        self.kvec = np.stack(np.meshgrid(*([freqs] * n0), indexing="ij"))
        self.knorm = np.abs(self.kvec).sum(axis=0)
        self.mask = self.knorm <= kmax
        theta = 2 * np.pi * np.arange(N) / N
        self.phi = np.stack(np.meshgrid(*([theta] * n0), indexing="ij"))
        self.npts = N ** n0

    def __eq__(self, other):
        return isinstance(other, FourierGrid) and (self.n0, self.N, self.kmax) == (other.n0, other.N, other.kmax)

    def __hash__(self):
        return hash((self.n0, self.N, self.kmax))

    def __repr__(self):
        return f"FourierGrid(n0={self.n0}, N={self.N}, kmax={self.kmax})"

    def to_values(self, coeffs):
        return np.fft.ifftn(coeffs, axes=self.axes) * self.npts

    def to_coeffs(self, values, K=None):
        c = np.fft.fftn(values, axes=self.axes) / self.npts
        keep = self.mask if K is None else self.knorm <= K
        return np.where(keep, c, 0.0)

    def weights(self, r):
        return np.exp(self.knorm * r)

    def reflect(self, coeffs):
        """Coefficient array of f(-phi): entry k holds f_hat(-k)."""
        c = np.flip(coeffs, axis=self.axes)
        return np.roll(c, 1, axis=self.axes)

    def dot_omega(self, omega):
        """<k, omega> on the mode grid; omega (n0,) or (n_a, n0) -> (n_a, *shape)."""
        om = np.atleast_2d(np.asarray(omega, dtype=float))
        return np.tensordot(om, self.kvec, axes=([1], [0]))

    def refined(self, factor=2):
        return FourierGrid(self.n0, self.N * factor, self.kmax * factor)


@dataclass(frozen=True)
class FourierSeries:
    grid: FourierGrid
    coeffs: np.ndarray
    r: float = 0.0
    real: bool = False

    @classmethod
    def from_function(cls, grid, func, r=0.0, real=False):
        vals = func(*grid.phi)
        return cls(grid, grid.to_coeffs(vals), r, real)

    @classmethod
    def from_modes(cls, grid, modes, r=0.0, real=False):
        """modes: mapping k-tuple -> coefficient."""
        c = np.zeros(grid.shape, dtype=np.complex128)
        for k, v in modes.items():
            c[tuple(np.asarray(k) % grid.N)] += v
        return cls(grid, c, r, real)

    def norm(self, r=None):
        r = self.r if r is None else r
        return float(np.sum(np.abs(self.coeffs) * self.grid.weights(r), axis=self.grid.axes).max())

    def values(self):
        return self.grid.to_values(self.coeffs)

    def enforce_symmetry(self):
        c = 0.5 * (self.coeffs + np.conj(self.grid.reflect(self.coeffs)))
        return replace(self, coeffs=c, real=True)

    def symmetry_violation(self):
        return float(np.abs(self.coeffs - np.conj(self.grid.reflect(self.coeffs))).max())


def truncate(f, K):
    """Split f into (Gamma_K f, (Id - Gamma_K) f) by |k|_1 <= K."""
    if K < 0:
        raise ValueError("K must be non-negative")
    keep = f.grid.knorm <= K
    return (replace(f, coeffs=np.where(keep, f.coeffs, 0.0)),
            replace(f, coeffs=np.where(keep, 0.0, f.coeffs)))


def average(f):
    return f.coeffs[(...,) + (0,) * f.grid.n0]


# ---------------------------------------------------------------------------
# parameter derivatives

@dataclass(frozen=True)
class ParamDerivPair:
    value: np.ndarray
    deriv: np.ndarray

    @classmethod
    def from_grid(cls, values, h, valid=None):
        """Centered differences in the first axis; one-sided next to gaps."""
        values = np.asarray(values)
        n = values.shape[0]
        valid = np.ones(n, bool) if valid is None else np.asarray(valid, bool)
        d = np.full(values.shape, np.nan, dtype=np.result_type(values, float))
        for i in range(n):
            if not valid[i]:
                continue
            left = i > 0 and valid[i - 1]
            right = i < n - 1 and valid[i + 1]
            if left and right:
                d[i] = (values[i + 1] - values[i - 1]) / (2 * h)
            elif right:
                d[i] = (values[i + 1] - values[i]) / h
            elif left:
                d[i] = (values[i] - values[i - 1]) / h
        return cls(values, d)

    def sup(self):
        v = np.nanmax(np.abs(self.value)) if np.size(self.value) else 0.0
        dd = np.abs(self.deriv)
        d = np.nanmax(dd) if np.isfinite(dd).any() else 0.0
        return float(v), float(d)


# ---------------------------------------------------------------------------
# fields

@dataclass(frozen=True)
class QPPolyField:
    grid: FourierGrid
    basis: MonomialBasis
    coeffs: np.ndarray          # (n_a, 3, M, *grid.shape) complex
    params: np.ndarray          # (n_a,) parameter values
    r: float = 0.5
    s: float = 1.0
    coords: str = "w"

    @classmethod
    def zeros(cls, grid, basis, params, **kw):
        params = np.atleast_1d(np.asarray(params, dtype=float))
        c = np.zeros((len(params), 3, basis.size) + grid.shape, dtype=np.complex128)
        return cls(grid, basis, c, params, **kw)

    @property
    def n_a(self):
        return self.coeffs.shape[0]

    def with_coeffs(self, coeffs):
        return replace(self, coeffs=coeffs)

    def __add__(self, other):
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self.with_coeffs(self.coeffs - other.coeffs)

    def scaled(self, factor):
        return self.with_coeffs(self.coeffs * factor)

    def series(self, j, l, ia=0):
        return FourierSeries(self.grid, self.coeffs[ia, j, self.basis.idx(l)], self.r)

    def mean(self, j, l):
        """Phi-average of coefficient (j, l) at each parameter point."""
        return self.coeffs[(slice(None), j, self.basis.idx(l)) + (0,) * self.grid.n0]

    def norms(self, r=None, s=None):
        """Weighted majorant max_j sum_l ||F_jl||_r s^|l| at each parameter point."""
        r = self.r if r is None else r
        s = self.s if s is None else s
        w = self.grid.weights(r)
        per = np.sum(np.abs(self.coeffs) * w, axis=self.grid.axes)      # (n_a, 3, M)
        per = per * (s ** self.basis.degrees)
        return per.sum(axis=2).max(axis=1)

    def norm(self, r=None, s=None, valid=None):
        n = self.norms(r, s)
        if valid is not None:
            n = n[np.asarray(valid, bool)]
        return float(n.max()) if n.size else 0.0

    def values(self):
        return self.grid.to_values(self.coeffs)

    def lower(self):
        return split_lower_higher(self)[0]

    def higher(self):
        return split_lower_higher(self)[1]

    def truncated(self, K):
        keep = self.grid.knorm <= K
        return self.with_coeffs(np.where(keep, self.coeffs, 0.0))

    def select(self, idx):
        idx = np.asarray(idx)
        return replace(self, coeffs=self.coeffs[idx], params=self.params[idx])

    def omega_derivative(self, omega):
        """omega . d/dphi applied coefficient-wise; omega (n0,) or (n_a, n0)."""
        dot = self.grid.dot_omega(omega)                    # (n_a or 1, *shape)
        factor = 1j * dot[:, None, None]
        return self.with_coeffs(self.coeffs * factor)

    def enforce_reality(self):
        return self.with_coeffs(0.5 * (self.coeffs + _reality_image(self)))


def _bcast(mask, n0):
    return mask.reshape((-1,) + (1,) * n0)


def split_lower_higher(F):
    """Partition into lower-degree and higher-degree monomials.

    The two index classes cover every monomial, so ``lower + higher == F``
    coefficient for coefficient.
    """
    lo = _bcast(F.basis.lower_mask, F.grid.n0)
    return F.with_coeffs(np.where(lo, F.coeffs, 0.0)), F.with_coeffs(np.where(lo, 0.0, F.coeffs))


# ---------------------------------------------------------------------------
# reality

def _reality_image(F):
    """Coefficient array of the conjugated field with w2 <-> w3 and comp 2 <-> 3."""
    c = F.coeffs[:, [0, 2, 1]][:, :, F.basis.conj_perm]
    return np.conj(F.grid.reflect(c))


@dataclass(frozen=True)
class RealityReport:
    max_violation: float
    relative: float
    worst: tuple

    @property
    def ok(self):
        return self.relative < 1e-11


def reality_check(F):
    diff = np.abs(F.coeffs - _reality_image(F))
    scale = float(np.abs(F.coeffs).max()) if F.coeffs.size else 0.0
    mx = float(diff.max()) if diff.size else 0.0
    worst = tuple(int(i) for i in np.unravel_index(np.argmax(diff), diff.shape)) if diff.size else ()
    return RealityReport(mx, mx / scale if scale > 0 else 0.0, worst)


# ---------------------------------------------------------------------------
# physical-space polynomial algebra

class PointPoly:
    """Polynomial with coefficients sampled at P points: data (M, P)."""

    __slots__ = ("basis", "data")

    def __init__(self, basis, data):
        self.basis = basis
        self.data = data

    @classmethod
    def constant(cls, basis, values):
        d = np.zeros((basis.size, values.shape[-1]), dtype=np.complex128)
        d[0] = values
        return cls(basis, d)

    def rows(self):
        return np.any(self.data != 0, axis=1)

    def __mul__(self, other):
        pairs = self.basis.pairs_for(self.rows(), other.rows())
        return PointPoly(self.basis, kernels.poly_mul(self.data, other.data, pairs, self.basis.size))

    def __add__(self, other):
        return PointPoly(self.basis, self.data + other.data)

    def __sub__(self, other):
        return PointPoly(self.basis, self.data - other.data)

    def add_constant(self, values):
        d = self.data.copy()
        d[0] += values
        return PointPoly(self.basis, d)

    def deriv(self, var):
        src, dst, fac = self.basis.deriv_map(var)
        d = np.zeros_like(self.data)
        d[dst] = self.data[src] * fac[:, None]
        return PointPoly(self.basis, d)

    def eval(self, w):
        return kernels.poly_eval(self.data, self.basis.exps, w)


def horner_substitute(coef, T, basis):
    """Evaluate sum_l coef[l] * T1^l1 T2^l2 T3^l3, truncated at the basis degree.

    coef: (M, P) values of the scalar coefficients; T: three PointPoly.
    """
    exps = basis.exps
    n_pts = coef.shape[1]
    nz = np.any(coef != 0, axis=1)
    result = PointPoly(basis, np.zeros((basis.size, n_pts), dtype=np.complex128))
    if not nz.any():
        return result
    D = basis.degree
    q_outer = None
    for l1 in range(D, -1, -1):
        q_mid = None
        for l2 in range(D - l1, -1, -1):
            r = None
            for l3 in range(D - l1 - l2, -1, -1):
                m = basis.index[(l1, l2, l3)]
                if r is not None:
                    r = r * T[2]
                if nz[m]:
                    r = PointPoly.constant(basis, coef[m]) if r is None else r.add_constant(coef[m])
            if q_mid is not None:
                q_mid = q_mid * T[1]
            if r is not None:
                q_mid = r if q_mid is None else q_mid + r
        if q_outer is not None:
            q_outer = q_outer * T[0]
        if q_mid is not None:
            q_outer = q_mid if q_outer is None else q_outer + q_mid
    return q_outer if q_outer is not None else result


def field_to_points(F):
    """(3, M, P) physical samples with P = n_a * N^n0 (parameter-major)."""
    vals = F.values().reshape(F.n_a, 3, F.basis.size, -1)
    return np.moveaxis(vals, 0, 2).reshape(3, F.basis.size, -1)


def points_to_field(F_like, pts, K=None):
    """Inverse of field_to_points, followed by transform and Gamma truncation."""
    grid = F_like.grid
    n_a = F_like.n_a
    vals = pts.reshape(3, F_like.basis.size, n_a, *grid.shape)
    vals = np.moveaxis(vals, 2, 0)
    return F_like.with_coeffs(grid.to_coeffs(vals, K))


def _degree_norms(F):
    """Per component: array over total degree of sum ||F_jl||_r."""
    w = F.grid.weights(F.r)
    per = np.sum(np.abs(F.coeffs) * w, axis=F.grid.axes).max(axis=0)     # (3, M) sup over a
    out = np.zeros((3, F.basis.degree + 1))
    for m, d in enumerate(F.basis.degrees):
        out[:, d] += per[:, m]
    return out


@dataclass(frozen=True)
class NearIdentity:
    """w = w+ + W0 + W(phi, w+); W0 has shape (n_a, 3), W is a QPPolyField or None."""
    W0: np.ndarray
    W: "QPPolyField | None" = None

    def polys(self, like):
        basis = like.basis
        n_a = like.n_a
        npts = like.grid.npts
        W0 = np.broadcast_to(np.asarray(self.W0, dtype=np.complex128), (n_a, 3))
        if self.W is not None:
            wpts = field_to_points(self.W)
        else:
            wpts = np.zeros((3, basis.size, n_a * npts), dtype=np.complex128)
        T = []
        for i in range(3):
            d = wpts[i].copy()
            d[basis.idx(tuple(int(j == i) for j in range(3)))] += 1.0
            d[0] += np.repeat(W0[:, i], npts)
            T.append(PointPoly(basis, d))
        return T


def substitute(F, T, K=None):
    """F(phi, T(phi, w)) for three PointPoly T, returned in coefficient space."""
    pts = field_to_points(F)
    out = np.stack([horner_substitute(pts[j], T, F.basis).data for j in range(3)])
    return points_to_field(F, out, K)


def compose(F, T, blowup=1e6):
    """Compose F with a near-identity transform; returns (F o T, tail_bound).

    The tail bound is a majorant for the monomials of degree > D dropped by the
    truncation, evaluated at the domain radius ``F.s``.
    """
    if T.W is not None:
        wn = T.W.norm()
        if not np.isfinite(wn) or wn > blowup:
            raise StepFailure(f"transform majorant {wn:.3e} exceeds admissible size")
    out = substitute(F, T.polys(F))
    return out, _tail_bound(F, T)


def _tail_bound(F, T):
    D = F.basis.degree
    s = F.s
    per_mono = np.sum(np.abs(F.coeffs) * F.grid.weights(F.r), axis=F.grid.axes).max(axis=0)
    W0 = np.abs(np.asarray(T.W0)).max(axis=0) if np.size(T.W0) else np.zeros(3)
    wn = _degree_norms(T.W) if T.W is not None else np.zeros((3, D + 1))
    t = []
    for i in range(3):
        p = wn[i].copy()
        p[0] += W0[i]
        p[1] += 1.0
        t.append(p)
    bound = 0.0
    for j in range(3):
        total = np.zeros(1)
        per = per_mono[j]
        for m, e in enumerate(F.basis.exps):
            if per[m] == 0:
                continue
            prod = np.array([per[m]])
            for i in range(3):
                for _ in range(e[i]):
                    prod = np.convolve(prod, t[i])
            if len(prod) > len(total):
                total = np.pad(total, (0, len(prod) - len(total)))
            total[: len(prod)] += prod
        if len(total) > D + 1:
            tail = total[D + 1:]
            bound = max(bound, float(np.sum(tail * s ** np.arange(D + 1, len(total)))))
    return bound


# ---------------------------------------------------------------------------
# coordinate changes

def linear_substitution(F, L, out_mix):
    """Change variables x = L y and mix components: new_j = sum_i out_mix[j,i] old_i.

    L and out_mix are (3, 3) or (n_a, 3, 3) for parameter-dependent maps.
    """
    basis = F.basis
    npts = F.grid.npts
    L = np.broadcast_to(np.asarray(L, dtype=np.complex128), (F.n_a, 3, 3))
    mix = np.broadcast_to(np.asarray(out_mix, dtype=np.complex128), (F.n_a, 3, 3))
    T = []
    for i in range(3):
        d = np.zeros((basis.size, F.n_a * npts), dtype=np.complex128)
        for j in range(3):
            d[basis.idx(tuple(int(q == j) for q in range(3)))] = np.repeat(L[:, i, j], npts)
        T.append(PointPoly(basis, d))
    G = substitute(F, T, K=None)
    mixed = np.einsum("aji,ai...->aj...", mix, G.coeffs)
    return G.with_coeffs(mixed)


_V_OF_W = np.array([[1, 0, 0], [0, 0.5, 0.5], [0, -0.5j, 0.5j]], dtype=np.complex128)
_W_MIX = np.array([[1, 0, 0], [0, 1, 1j], [0, 1, -1j]], dtype=np.complex128)
_W_OF_V = np.array([[1, 0, 0], [0, 1, 1j], [0, 1, -1j]], dtype=np.complex128)
_V_MIX = np.array([[1, 0, 0], [0, 0.5, 0.5], [0, -0.5j, 0.5j]], dtype=np.complex128)


def complexify_field(Fv):
    """Real coordinates (v1, v2, v3) -> (w1, w2, w3) with w2 = v2 + i v3, w3 = v2 - i v3."""
    Fw = linear_substitution(Fv, _V_OF_W, _W_MIX)
    return replace(Fw, coords="w")


def realify_field(Fw):
    """Inverse of complexify_field."""
    Fv = linear_substitution(Fw, _W_OF_V, _V_MIX)
    return replace(Fv, coords="v")


def complexify(system, params=None, grid=None, basis=None):
    """Complexified total field and its normal-form data for a SystemSpec.

    Returns (field, nf) where ``field`` is the complex form of the full right-hand
    side (normal part + higher part + eps * perturbation) and ``nf`` the normal
    form with Omega2 multiplied by i and Omega3 its conjugate.
    """
    from .system import NormalForm
    params = system.work_params() if params is None else np.atleast_1d(params)
    Fv = system.real_field(params, grid=grid, basis=basis)
    Fw = complexify_field(Fv)
    data = system.model.normal_data(params)
    nf = NormalForm.initial(data["Omega1"], data["Omega2"])
    return Fw, nf


def rescale(F, eps, perturbation=False):
    """Blow-up w1 -> eps^(1/4) w1, w2 -> eps^(1/2) w2, then divide component 1 by eps^(1/2).

    With ``perturbation`` the field is taken to enter multiplied by eps.  The
    coefficient of monomial l picks up eps0^(l1 + 2(l2+l3) - 3) in component 1 and
    eps0^(l1 + 2(l2+l3) - 2) in components 2, 3 (plus 4 for a perturbation).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    e0 = eps ** 0.25
    e = F.basis.exps
    weight = e[:, 0] + 2 * (e[:, 1] + e[:, 2])
    extra = 4 if perturbation else 0
    w = np.empty((3, F.basis.size))
    w[0] = e0 ** (weight - 3 + extra)
    w[1:] = e0 ** (weight - 2 + extra)
    return F.with_coeffs(F.coeffs * w.reshape((1, 3, -1) + (1,) * F.grid.n0))


def shift_w1(F, c):
    """Coefficients of F(phi, w1 + c, w2, w3); c has one value per parameter point."""
    c = np.asarray(c, dtype=np.complex128).reshape(-1)
    out = np.zeros_like(F.coeffs)
    exps = F.basis.exps
    cpow = np.stack([c ** p for p in range(F.basis.degree + 1)], axis=1)   # (n_a, D+1)
    for m, (l1, l2, l3) in enumerate(exps):
        for j in range(l1 + 1):
            # w1^l1 -> sum_j C(l1, j) c^(l1-j) w1^j
            dst = F.basis.index[(j, l2, l3)]
            f = comb(int(l1), j) * cpow[:, l1 - j]
            out[:, :, dst] += f.reshape((-1, 1) + (1,) * F.grid.n0) * F.coeffs[:, :, m]
    return F.with_coeffs(out)


# ---------------------------------------------------------------------------
# text dump

def write_dump(F, path, extra_header=None, tol=0.0):
    lines = [f"# n0 {F.grid.n0}", f"# N {F.grid.N}", f"# Kmax {F.grid.kmax}", f"# D {F.basis.degree}",
             f"# r {F.r!r}", f"# s {F.s!r}", f"# coords {F.coords}",
             "# params " + " ".join(f"{a:.17e}" for a in F.params)]
    for key, val in (extra_header or {}).items():
        lines.append(f"# {key} {val}")
    lines.append("# ia comp l1 l2 l3 k... re im")
    kv = F.grid.kvec.reshape(F.grid.n0, -1).T
    for ia in range(F.n_a):
        for j in range(3):
            for m, e in enumerate(F.basis.exps):
                flat = F.coeffs[ia, j, m].reshape(-1)
                for q in np.nonzero(np.abs(flat) > tol)[0]:
                    ks = " ".join(str(int(x)) for x in kv[q])
                    lines.append(f"{ia} {j} {e[0]} {e[1]} {e[2]} {ks} "
                                 f"{flat[q].real:.16e} {flat[q].imag:.16e}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dump(path):
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                parts = line[1:].split(None, 1)
                if len(parts) == 2:
                    header[parts[0]] = parts[1].strip()
                continue
            rows.append(line.split())
    n0, N, kmax, D = (int(header[k]) for k in ("n0", "N", "Kmax", "D"))
    params = np.array([float(x) for x in header["params"].split()])
    grid = FourierGrid(n0, N, kmax)
    basis = monomial_basis(D)
    F = QPPolyField.zeros(grid, basis, params, r=float(header["r"]), s=float(header["s"]),
                          coords=header.get("coords", "w"))
    c = F.coeffs
    for row in rows:
        ia, j, l1, l2, l3 = (int(x) for x in row[:5])
        k = tuple(int(x) % N for x in row[5:5 + n0])
        c[(ia, j, basis.idx((l1, l2, l3))) + k] = float(row[5 + n0]) + 1j * float(row[6 + n0])
    return F, header
