"""Hot loops, each with a numba kernel and a vectorised numpy twin.

The public names at the bottom dispatch on ``_accel.USE_NUMBA``.  Both
variants stay importable (``*_numba`` / ``*_numpy``) so tests and the
benchmark can compare them directly.
"""
import numpy as np

from ._accel import njit, pick


# --- polynomial products over a point set -----------------------------------
#
# A polynomial is stored as an (M, P) complex array: row m is the value of the
# coefficient of monomial m at each of P sample points (phi-grid x parameter
# grid, flattened).  ``pairs`` lists (i, j, m) with monomial_i * monomial_j =
# monomial_m; callers pre-filter it to the supports actually present.

@njit
def _poly_mul_kernel(a, b, pairs, n_out):
    n_pts = a.shape[1]
    out = np.zeros((n_out, n_pts), dtype=np.complex128)
    for q in range(pairs.shape[0]):
        i = pairs[q, 0]
        j = pairs[q, 1]
        m = pairs[q, 2]
        for p in range(n_pts):
            out[m, p] += a[i, p] * b[j, p]
    return out


def poly_mul_numba(a, b, pairs, n_out):
    return _poly_mul_kernel(np.ascontiguousarray(a, dtype=np.complex128),
                            np.ascontiguousarray(b, dtype=np.complex128),
                            np.ascontiguousarray(pairs, dtype=np.int64), n_out)


def poly_mul_numpy(a, b, pairs, n_out):
    out = np.zeros((n_out, a.shape[1]), dtype=np.complex128)
    if len(pairs) == 0:
        return out
    order = np.argsort(pairs[:, 2], kind="stable")
    pairs = pairs[order]
    prod = a[pairs[:, 0]] * b[pairs[:, 1]]
    targets, starts = np.unique(pairs[:, 2], return_index=True)
    out[targets] = np.add.reduceat(prod, starts, axis=0)
    return out


# --- pointwise polynomial evaluation ----------------------------------------

@njit
def _poly_eval_kernel(coef, exps, w, degree):
    n_mono, n_pts = coef.shape
    out = np.zeros(n_pts, dtype=np.complex128)
    pw = np.empty((3, degree + 1), dtype=np.complex128)
    for p in range(n_pts):
        for v in range(3):
            pw[v, 0] = 1.0
            for d in range(1, degree + 1):
                pw[v, d] = pw[v, d - 1] * w[v, p]
        acc = 0.0j
        for m in range(n_mono):
            c = coef[m, p]
            if c != 0.0:
                acc += c * pw[0, exps[m, 0]] * pw[1, exps[m, 1]] * pw[2, exps[m, 2]]
        out[p] = acc
    return out


def poly_eval_numba(coef, exps, w):
    degree = int(exps.sum(axis=1).max()) if len(exps) else 0
    return _poly_eval_kernel(np.ascontiguousarray(coef, dtype=np.complex128),
                             np.ascontiguousarray(exps, dtype=np.int64),
                             np.ascontiguousarray(w, dtype=np.complex128), degree)


def poly_eval_numpy(coef, exps, w):
    degree = int(exps.sum(axis=1).max()) if len(exps) else 0
    w = np.asarray(w, dtype=np.complex128)
    pw = np.ones((3, degree + 1, w.shape[1]), dtype=np.complex128)
    for d in range(1, degree + 1):
        pw[:, d] = pw[:, d - 1] * w
    mono = pw[0, exps[:, 0]] * pw[1, exps[:, 1]] * pw[2, exps[:, 2]]
    return np.einsum("mp,mp->p", coef, mono)


# --- Diophantine scan --------------------------------------------------------

@njit
def _diophantine_kernel(omega, K, iota):
    n0 = omega.shape[0]
    k = np.full(n0, -K, dtype=np.int64)
    best = np.inf
    best_norm = K + 1
    best_k = np.zeros(n0, dtype=np.int64)
    while True:
        norm = 0
        lead = 0
        for i in range(n0):
            norm += abs(k[i])
            if lead == 0 and k[i] != 0:
                lead = k[i]
        # k and -k give the same value; keep the one with a positive leading entry
        if 0 < norm <= K and lead > 0:
            dot = 0.0
            for i in range(n0):
                dot += k[i] * omega[i]
            ratio = abs(dot) * norm ** iota
            if ratio < best or (ratio == best and norm < best_norm):
                best = ratio
                best_norm = norm
                best_k[:] = k
        # odometer increment
        pos = n0 - 1
        while pos >= 0:
            k[pos] += 1
            if k[pos] <= K:
                break
            k[pos] = -K
            pos -= 1
        if pos < 0:
            break
    return best, best_k


def diophantine_numba(omega, K, iota):
    best, k = _diophantine_kernel(np.asarray(omega, dtype=np.float64), int(K), float(iota))
    return float(best), k


def lattice_points(n0, K):
    """All k in Z^n0 with 0 < |k|_1 <= K, as an (n, n0) int array."""
    axes = [np.arange(-K, K + 1)] * n0
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n0)
    norm = np.abs(grid).sum(axis=1)
    return grid[(norm > 0) & (norm <= K)]


def diophantine_numpy(omega, K, iota):
    omega = np.asarray(omega, dtype=np.float64)
    ks = lattice_points(len(omega), int(K))
    nz = ks != 0
    lead = ks[np.arange(len(ks)), np.argmax(nz, axis=1)] if len(ks) else ks[:, 0]
    ks = ks[lead > 0]
    if len(ks) == 0:
        return np.inf, np.zeros(len(omega), dtype=np.int64)
    norm = np.abs(ks).sum(axis=1)
    ratio = np.abs(ks @ omega) * norm.astype(float) ** iota
    i = int(np.lexsort((norm, ratio))[0])
    return float(ratio[i]), ks[i]


# --- sparse quasi-periodic field evaluation (ODE right-hand sides) -----------
#
# Terms: comp[q], exps[q] (3 ints), kvec[q] (n0 ints), coef[q] complex.
# value_c = Re sum_{q: comp[q]=c} coef[q] exp(i<k_q, phi>) v^exps[q]

@njit
def _field_eval_kernel(phi, v, comp, exps, kvec, coef, degree):
    out = np.zeros(3)
    pw = np.empty((3, degree + 1))
    for i in range(3):
        pw[i, 0] = 1.0
        for d in range(1, degree + 1):
            pw[i, d] = pw[i, d - 1] * v[i]
    n0 = phi.shape[0]
    for q in range(comp.shape[0]):
        arg = 0.0
        for i in range(n0):
            arg += kvec[q, i] * phi[i]
        c = coef[q]
        val = c.real * np.cos(arg) - c.imag * np.sin(arg)
        out[comp[q]] += val * pw[0, exps[q, 0]] * pw[1, exps[q, 1]] * pw[2, exps[q, 2]]
    return out


def field_eval_numba(phi, v, table):
    return _field_eval_kernel(phi, v, table.comp, table.exps, table.kvec, table.coef, table.degree)


def field_eval_numpy(phi, v, table):
    arg = table.kvec @ phi
    val = table.coef.real * np.cos(arg) - table.coef.imag * np.sin(arg)
    mono = np.prod(np.asarray(v)[None, :] ** table.exps, axis=1)
    return np.bincount(table.comp, weights=val * mono, minlength=3)


# --- delayed van der Pol, fixed-step RK4 with Hermite history -----------------
#
# x'' + a (x^2 - 1) x' + x = b x_d + b1 x_d^3 + eps g(omega' t, x, x_d)
# g = Re sum_q gc[q] exp(i<gk[q], phi>) x^gm[q] x_d^gn[q]
# The first m+1 entries of xs/vs hold the history on [-tau, 0] at spacing h;
# the delayed value at a stage is the cubic Hermite interpolant between the
# two bracketing grid values (exact derivative data v = x').

def _dde_rk4(xs, vs, m, n_steps, h, a, b, b1, eps, omega_p, gm, gn, gk, gc):
    for i in range(m, m + n_steps):
        t = (i - m) * h
        x0 = xs[i]
        v0 = vs[i]
        jd = i - m
        xa = xs[jd]
        va = vs[jd]
        xb = xs[jd + 1]
        vb = vs[jd + 1]
        # Hermite midpoint value: (xa + xb)/2 + h (va - vb)/8
        xmid = 0.5 * (xa + xb) + h * (va - vb) / 8.0
        kx = np.zeros(4)
        kv = np.zeros(4)
        cs = (0.0, 0.5, 0.5, 1.0)
        for s in range(4):
            c = cs[s]
            if s == 0:
                x = x0
                v = v0
                xd = xa
            else:
                x = x0 + c * h * kx[s - 1]
                v = v0 + c * h * kv[s - 1]
                xd = xmid if s < 3 else xb
            ts = t + c * h
            force = 0.0
            if eps != 0.0:
                for q in range(gm.shape[0]):
                    arg = 0.0
                    for d in range(omega_p.shape[0]):
                        arg += gk[q, d] * omega_p[d] * ts
                    coeff = gc[q].real * np.cos(arg) - gc[q].imag * np.sin(arg)
                    force += coeff * x ** gm[q] * xd ** gn[q]
            kx[s] = v
            kv[s] = -a * (x * x - 1.0) * v - x + b * xd + b1 * xd ** 3 + eps * force
        xs[i + 1] = x0 + h / 6.0 * (kx[0] + 2 * kx[1] + 2 * kx[2] + kx[3])
        vs[i + 1] = v0 + h / 6.0 * (kv[0] + 2 * kv[1] + 2 * kv[2] + kv[3])
    return xs, vs


_dde_rk4_numba = njit(_dde_rk4)


def dde_rk4_numba(*args):
    return _dde_rk4_numba(*args)


def dde_rk4_python(*args):
    return _dde_rk4(*args)


poly_mul = pick(poly_mul_numba, poly_mul_numpy)
poly_eval = pick(poly_eval_numba, poly_eval_numpy)
diophantine_scan = pick(diophantine_numba, diophantine_numpy)
field_eval = pick(field_eval_numba, field_eval_numpy)
dde_rk4 = pick(dde_rk4_numba, dde_rk4_python)
