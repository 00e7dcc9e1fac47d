"""Non-resonance: Diophantine certificates and parameter exclusion.

A parameter set is a finite union of closed intervals.  Exclusion removes, for
every small divisor i<k, omega(a)> + lambda(a) that can appear in the
homological equations, the zone of parameters where it is smaller than
gamma/|k|^(n0+1).  Only the imaginary part of the divisor is used, which gives
a (slightly) larger removed set: every parameter left over is certified.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels


class PreconditionFailure(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameter sets

@dataclass(frozen=True)
class ParameterSet:
    intervals: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        iv = np.asarray(self.intervals, dtype=float).reshape(-1, 2)
        if len(iv) and np.any(iv[:, 1] < iv[:, 0]):
            raise ValueError("interval with hi < lo")
        object.__setattr__(self, "intervals", _merge(iv))

    @classmethod
    def interval(cls, lo, hi):
        return cls(np.array([[lo, hi]]))

    @property
    def measure(self):
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0]))

    def contains(self, a):
        a = np.asarray(a, dtype=float)
        iv = self.intervals
        if len(iv) == 0:
            return np.zeros(a.shape, bool)
        i = np.searchsorted(iv[:, 0], a, side="right") - 1
        ok = i >= 0
        ic = np.clip(i, 0, len(iv) - 1)
        return ok & (a <= iv[ic, 1])

    def subtract(self, zones):
        """Remove the open zones (lo, hi); closed remainder intervals are kept."""
        zones = _merge(np.asarray(zones, dtype=float).reshape(-1, 2))
        out = []
        for lo, hi in self.intervals:
            cur = lo
            for zl, zh in zones:
                if zh <= cur or zl >= hi:
                    continue
                if zl > cur:
                    out.append((cur, zl))
                cur = max(cur, zh)
                if cur >= hi:
                    break
            if cur < hi:
                out.append((cur, hi))
        return ParameterSet(np.array(out).reshape(-1, 2))

    def issubset(self, other):
        for lo, hi in self.intervals:
            j = np.searchsorted(other.intervals[:, 0], lo, side="right") - 1
            if j < 0 or other.intervals[j, 1] < hi:
                return False
        return True

    def to_list(self):
        return self.intervals.tolist()


def _merge(iv):
    if len(iv) == 0:
        return np.zeros((0, 2))
    iv = iv[np.argsort(iv[:, 0], kind="stable")]
    out = [list(iv[0])]
    for lo, hi in iv[1:]:
        if lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return np.array(out, dtype=float)


# ---------------------------------------------------------------------------
# Diophantine certificate

@dataclass(frozen=True)
class DiophantineCert:
    omega: tuple
    gamma0: float
    iota: float
    Kcheck: int
    worst_ratio: float
    worst_k: tuple

    @property
    def valid(self):
        return self.worst_ratio >= self.gamma0


def check_diophantine(omega, gamma0, iota, K):
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if K < 1 or gamma0 <= 0:
        raise ValueError("need K >= 1 and gamma0 > 0")
    if iota < len(omega) + 1 - 1e-12:
        raise ValueError("iota must be at least n0 + 1")
    ratio, k = kernels.diophantine_scan(omega, K, iota)
    return DiophantineCert(tuple(omega.tolist()), gamma0, iota, int(K), float(ratio),
                           tuple(int(x) for x in k))


# ---------------------------------------------------------------------------
# exclusion

MELNIKOV_COMBOS = ((1, 0), (0, 1), (1, -1))   # the sign-flipped combos are covered by -k
BISECT_TOL = 1e-12


@dataclass
class ExclusionResult:
    pset: ParameterSet
    removed: float
    zones: np.ndarray
    gamma: float
    K: int
    measure_before: float


def _interpolant(grid, values):
    values = np.asarray(values, dtype=float)
    if len(grid) >= 4:
        return CubicSpline(grid, values, axis=0)
    return lambda a: np.array([np.interp(a, grid, values[:, i]) for i in range(values.shape[1])]).T \
        if values.ndim == 2 else np.interp(a, grid, values)


def _check_monotone(grid, im_omega2, pset, c0, sigma):
    d = np.gradient(np.asarray(im_omega2, dtype=float), grid)
    cells = pset.contains(grid)
    if not cells.any():
        return
    dd = d[cells]
    if np.any(np.sign(dd) != np.sign(dd[0])) or np.any(dd == 0):
        bad = int(np.nonzero(cells)[0][np.argmax(np.sign(dd) != np.sign(dd[0]))])
        raise PreconditionFailure(f"d/da Im Omega2 changes sign near grid cell {bad} (a={grid[bad]:.6f})")
    if c0 is not None:
        lim = c0 * (1.0 - sigma)
        small = np.abs(dd) < lim
        if small.any():
            bad = int(np.nonzero(cells)[0][np.argmax(small)])
            raise PreconditionFailure(
                f"|d/da Im Omega2| = {abs(d[bad]):.3e} < {lim:.3e} at grid cell {bad} (a={grid[bad]:.6f})")


def _exclude(pset, grid, omega_fn, target_fns, n0, gamma, K):
    """Zones where |<k, omega(a)> + t_c(a)| < gamma/|k|^(n0+1) for some k, c."""
    before = pset.measure
    if K < 1 or gamma <= 0 or before == 0:
        return ExclusionResult(pset, 0.0, np.zeros((0, 2)), gamma, K, before)
    grid = np.asarray(grid, dtype=float)
    om = omega_fn(grid)                                   # (n, n0)
    targets = np.stack([f(grid) for f in target_fns])     # (C, n)
    ks = kernels.lattice_points(n0, int(K))
    knorm = np.abs(ks).sum(axis=1).astype(float)
    thr = gamma / knorm ** (n0 + 1)
    # interval bound of <k, omega(a)> over the grid, to discard hopeless k
    lo = np.minimum(ks * om.min(axis=0), ks * om.max(axis=0)).sum(axis=1)
    hi = np.maximum(ks * om.min(axis=0), ks * om.max(axis=0)).sum(axis=1)
    zones = []
    for c in range(len(target_fns)):
        tmin, tmax = targets[c].min(), targets[c].max()
        keep = (hi + tmax > -thr) & (lo + tmin < thr)
        kk, tk = ks[keep], thr[keep]
        for start in range(0, len(kk), 4096):
            kc, tc = kk[start:start + 4096], tk[start:start + 4096]
            h = kc @ om.T + targets[c]                    # (nk, n)
            zones.extend(_zones_from_samples(grid, h, tc, kc, omega_fn, target_fns[c]))
    zones = np.array(zones).reshape(-1, 2)
    new = pset.subtract(zones)
    return ExclusionResult(new, before - new.measure, zones, gamma, K, before)


def _zones_from_samples(grid, h, thr, kc, omega_fn, target_fn):
    inside = np.abs(h) < thr[:, None]
    up = h - thr[:, None]
    dn = h + thr[:, None]
    cross_up = np.sign(up[:, 1:]) != np.sign(up[:, :-1])
    cross_dn = np.sign(dn[:, 1:]) != np.sign(dn[:, :-1])
    rows = np.nonzero(inside.any(axis=1) | cross_up.any(axis=1) | cross_dn.any(axis=1))[0]
    if len(rows) == 0:
        return []
    # gather all brackets and bisect them together
    br_row, br_cell, br_sign = [], [], []
    for sgn, cross in ((-1.0, cross_up), (1.0, cross_dn)):
        r, cidx = np.nonzero(cross[rows])
        br_row.append(rows[r])
        br_cell.append(cidx)
        br_sign.append(np.full(len(r), sgn))
    br_row = np.concatenate(br_row)
    br_cell = np.concatenate(br_cell)
    br_sign = np.concatenate(br_sign)

    def shifted(a, row, sgn):
        return (omega_fn(a) * kc[row]).sum(axis=1) + target_fn(a) + sgn * thr[row]

    roots = np.zeros(0)
    if len(br_row):
        a_lo = grid[br_cell].copy()
        a_hi = grid[br_cell + 1].copy()
        f_lo = shifted(a_lo, br_row, br_sign)
        while np.max(a_hi - a_lo) > BISECT_TOL:
            mid = 0.5 * (a_lo + a_hi)
            f_mid = shifted(mid, br_row, br_sign)
            left = np.sign(f_mid) == np.sign(f_lo)
            a_lo = np.where(left, mid, a_lo)
            f_lo = np.where(left, f_mid, f_lo)
            a_hi = np.where(left, a_hi, mid)
        roots = 0.5 * (a_lo + a_hi)
    out = []
    for row in rows:
        pts = np.sort(np.concatenate([[grid[0], grid[-1]], roots[br_row == row]]))
        mids = 0.5 * (pts[1:] + pts[:-1])
        val = (omega_fn(mids) * kc[row]).sum(axis=1) + target_fn(mids)
        bad = np.abs(val) < thr[row]
        for i in np.nonzero(bad)[0]:
            out.append((pts[i] - BISECT_TOL, pts[i + 1] + BISECT_TOL))
        # isolated grid samples inside the band with no bracket around them
        for i in np.nonzero(inside[row])[0]:
            if not any(pts[j] <= grid[i] <= pts[j + 1] for j in np.nonzero(bad)[0]):
                out.append((grid[i] - BISECT_TOL, grid[i] + BISECT_TOL))
    return out


def _callable(grid, data):
    if callable(data):
        return data
    return _interpolant(np.asarray(grid, dtype=float), data)


def exclude_melnikov(pset, grid, Omega2, Omega3, omega, gamma, K, *, c0=None, sigma=0.0,
                     combos=MELNIKOV_COMBOS, check_monotone=True):
    """Remove Melnikov resonance zones from ``pset``.

    ``Omega2``/``Omega3`` are complex arrays on ``grid`` or callables a -> complex;
    ``omega`` is an (n0,) vector, an (len(grid), n0) table or a callable.
    Returns an ExclusionResult with the certified set and the removed measure.
    """
    grid = np.asarray(grid, dtype=float)
    im2 = _imag_fn(grid, Omega2)
    im3 = _imag_fn(grid, Omega3)
    omega_fn = _omega_fn(grid, omega)
    n0 = omega_fn(grid[:1]).shape[1]
    if check_monotone:
        _check_monotone(grid, im2(grid), pset, c0, sigma)
    targets = [(lambda m2, m3: (lambda a: m2 * im2(a) + m3 * im3(a)))(m2, m3) for m2, m3 in combos]
    return _exclude(pset, grid, omega_fn, targets, n0, gamma, K)


def initial_exclusion(pset, grid, Omega2, omega, gamma0, K0, *, c0=None, check_monotone=True):
    """|<k, omega> +- m Omega2| >= gamma0/|k|^(n0+1), m = 1, 2, with real Omega2."""
    grid = np.asarray(grid, dtype=float)
    om2 = _callable(grid, Omega2)
    omega_fn = _omega_fn(grid, omega)
    n0 = omega_fn(grid[:1]).shape[1]
    if check_monotone:
        _check_monotone(grid, om2(grid), pset, c0, 0.0)
    targets = [(lambda m: (lambda a: m * om2(a)))(m) for m in (1, 2)]
    return _exclude(pset, grid, omega_fn, targets, n0, gamma0, K0)


def _imag_fn(grid, data):
    if callable(data):
        return lambda a: np.imag(data(a))
    return _interpolant(grid, np.imag(data))


def _omega_fn(grid, omega):
    if callable(omega):
        return lambda a: np.atleast_2d(omega(np.atleast_1d(a)))
    om = np.asarray(omega, dtype=float)
    if om.ndim == 1:
        return lambda a: np.broadcast_to(om, (np.size(a), len(om)))
    spl = _interpolant(grid, om)
    return lambda a: np.atleast_2d(spl(np.atleast_1d(a)))


def pointwise_violation(pset, sample, omega_fn, target_fns, gamma, K, n0):
    """Re-test the defining inequalities at sample points inside ``pset``.

    Returns the smallest value of |h| * |k|^(n0+1) / gamma over kept samples
    (>= 1 means every kept sample is non-resonant).
    """
    a = np.asarray(sample, dtype=float)
    a = a[pset.contains(a)]
    if len(a) == 0 or K < 1:
        return np.inf
    om = omega_fn(a)
    ks = kernels.lattice_points(n0, int(K))
    knorm = np.abs(ks).sum(axis=1).astype(float) ** (n0 + 1)
    worst = np.inf
    for f in target_fns:
        t = f(a)
        for start in range(0, len(ks), 2048):
            kc = ks[start:start + 2048]
            h = np.abs(kc @ om.T + t) * knorm[start:start + 2048, None] / gamma
            worst = min(worst, float(h.min()))
    return worst


def schedule_K(nu, eps0, eps1, r0, kcap):
    """Fourier order for step nu, capped at kcap: (K, cap_binds)."""
    if nu == 0:
        K = -(8.0 / r0) * np.log(eps0)
    else:
        K = -(1.0 / r0) * (nu + 1) ** 2 * 2.0 ** (nu + 2) * np.log(eps1)
    K = int(np.ceil(max(K, 1.0)))
    return min(K, kcap), K > kcap
