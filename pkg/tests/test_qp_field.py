import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpkam.qp_field import (FourierGrid, FourierSeries, NearIdentity, PointPoly, QPPolyField, average,
                            complexify_field, compose, field_to_points, is_higher, is_lower, monomial_basis,
                            read_dump, realify_field, reality_check, rescale, shift_w1, split_lower_higher,
                            truncate, write_dump)

GRID = FourierGrid(2, 16, 5)
SEEDS = st.integers(0, 2 ** 32 - 1)


def random_field(rng, grid, basis, params, monos, K, scale=1.0, real_v=False):
    F = QPPolyField.zeros(grid, basis, params, coords="v" if real_v else "w")
    shape = (len(params), 3) + grid.shape
    for l in monos:
        vals = rng.normal(size=shape)
        if not real_v:
            vals = vals + 1j * rng.normal(size=shape)
        F.coeffs[:, :, basis.idx(l)] = scale * grid.to_coeffs(vals, K=K)
    return F


def pointwise(coeffs_vals, basis, w):
    """sum_l c_l(phi) w^l for sampled coefficients (M,) and a point w (3,)."""
    return sum(coeffs_vals[m] * np.prod(w ** basis.exps[m]) for m in range(basis.size))


# ---------------------------------------------------------------------------
# monomial classes

def test_classification_is_total_and_exclusive():
    for l in itertools.product(range(7), repeat=3):
        if sum(l) > 6:
            continue
        assert not (is_lower(l) and is_higher(l))
        assert is_lower(l) or is_higher(l), l
    assert is_lower((2, 0, 0)) and is_higher((1, 1, 0)) and is_higher((4, 0, 0))
    assert is_lower((0, 0, 1)) and not is_lower((0, 1, 1))


def test_split_is_exact_partition(rng):
    b = monomial_basis(6)
    F = random_field(rng, GRID, b, [0.5], [tuple(e) for e in b.exps], 5)
    lo, hi = split_lower_higher(F)
    assert np.array_equal((lo + hi).coeffs, F.coeffs)
    assert np.all((lo.coeffs != 0).any(axis=(0, 1, 3, 4)) <= b.lower_mask)
    assert np.all(hi.coeffs[:, :, b.lower_mask] == 0)
    one = QPPolyField.zeros(GRID, b, [0.5])
    one.coeffs[0, 0, b.idx((2, 0, 0)), 0, 0] = 1.0
    assert np.abs(split_lower_higher(one)[1].coeffs).max() == 0
    one.coeffs[0, 0, b.idx((1, 1, 0)), 0, 0] = 1.0
    assert split_lower_higher(one)[1].coeffs[0, 0, b.idx((1, 1, 0)), 0, 0] == 1.0


# ---------------------------------------------------------------------------
# Fourier series

def test_truncate_boundary():
    f = FourierSeries.from_modes(GRID, {(3, -2): 1.0})
    kept, tail = truncate(f, 5)
    assert np.array_equal(kept.coeffs, f.coeffs) and not tail.coeffs.any()
    g = FourierSeries.from_modes(GRID, {(4, -2): 1.0})
    kept, tail = truncate(g, 5)
    assert not kept.coeffs.any() and np.array_equal(tail.coeffs, g.coeffs)
    with pytest.raises(ValueError):
        truncate(f, -1)


def test_truncation_tail_estimate(rng):
    """||(Id - Gamma_K) f||_{r-rho} <= C ||f||_r rho^-n0 exp(-rho K), fitted C."""
    grid = FourierGrid(2, 64, 21)
    r = 0.6
    ratios = []
    for _ in range(100):
        decay = np.exp(-r * grid.knorm) * (1 + rng.uniform(size=grid.shape))
        c = np.where(grid.mask, decay * np.exp(2j * np.pi * rng.uniform(size=grid.shape)), 0.0)
        f = FourierSeries(grid, c, r)
        K = int(rng.integers(1, 15))
        rho = float(rng.uniform(0.05, 0.5))
        _, tail = truncate(f, K)
        rhs = f.norm(r) * rho ** -2 * np.exp(-rho * K)
        ratios.append(tail.norm(r - rho) / rhs)
    C = max(ratios)
    assert C <= 1.0          # the weighted l1 norm gives the estimate with C = 1


def test_truncation_does_not_increase_norm(rng):
    b = monomial_basis(4)
    F = random_field(rng, GRID, b, [0.3, 0.7], [(0, 0, 0), (1, 0, 0), (0, 1, 0), (2, 1, 0)], 5)
    for K in range(6):
        assert F.truncated(K).norm() <= F.norm() + 1e-15


def test_average_examples():
    f = FourierSeries.from_modes(GRID, {(0, 0): 3.0, (1, 0): 2.0})
    assert average(f) == 3.0
    assert average(FourierSeries.from_modes(GRID, {(2, -1): 1.0})) == 0.0
    g = FourierSeries.from_function(GRID, lambda p1, p2: np.sin(p1) ** 2)
    assert abs(average(g) - 0.5) < 1e-15


@settings(max_examples=30, deadline=None)
@given(SEEDS, st.floats(0.0, 1.5))
def test_cauchy_coefficient_bound(seed, r):
    rng = np.random.default_rng(seed)
    c = GRID.to_coeffs(rng.normal(size=GRID.shape) + 1j * rng.normal(size=GRID.shape))
    f = FourierSeries(GRID, c, r)
    assert np.all(np.abs(c) <= f.norm() * np.exp(-GRID.knorm * r) * (1 + 1e-12))


@settings(max_examples=20, deadline=None)
@given(SEEDS)
def test_norm_submultiplicative(seed):
    rng = np.random.default_rng(seed)
    b = monomial_basis(4)
    monos = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 0, 1)]
    F = random_field(rng, GRID, b, [0.5], monos, 2)
    G = random_field(rng, GRID, b, [0.5], monos, 2)
    F.coeffs[:, 1:] = 0
    G.coeffs[:, 1:] = 0
    fp, gp = field_to_points(F), field_to_points(G)
    prod = (PointPoly(b, fp[0]) * PointPoly(b, gp[0])).data
    P = F.with_coeffs(np.zeros_like(F.coeffs))
    P.coeffs[0, 0] = GRID.to_coeffs(prod.reshape((b.size,) + GRID.shape))
    for r, s in ((0.0, 1.0), (0.3, 0.5), (0.7, 1.3)):
        assert P.norm(r, s) <= F.norm(r, s) * G.norm(r, s) * (1 + 1e-12)


# ---------------------------------------------------------------------------
# complexify, reality, rescale

def _normal_real(Omega1, Omega2, d1=0.0, d2=0.0):
    b = monomial_basis(6)
    F = QPPolyField.zeros(GRID, b, [0.5], coords="v")
    F.coeffs[0, 0, b.idx((3, 0, 0)), 0, 0] = Omega1
    F.coeffs[0, 1, b.idx((0, 0, 1)), 0, 0] = -Omega2
    F.coeffs[0, 2, b.idx((0, 1, 0)), 0, 0] = Omega2
    F.coeffs[0, 1, b.idx((3, 0, 0)), 0, 0] = d1
    F.coeffs[0, 2, b.idx((3, 0, 0)), 0, 0] = d2
    return F


def test_complexify_rotation_is_diagonal():
    W = complexify_field(_normal_real(0.0, 1.7))
    b = W.basis
    c = W.coeffs[0, :, :, 0, 0]
    expect = np.zeros_like(c)
    expect[1, b.idx((0, 1, 0))] = 1.7j
    expect[2, b.idx((0, 0, 1))] = -1.7j
    assert np.abs(c - expect).max() < 1e-15
    assert np.abs(W.coeffs[..., 1:, :]).max() < 1e-15 and np.abs(W.coeffs[..., 1:]).max() < 1e-15


def test_complexify_d4():
    W = complexify_field(_normal_real(0.0, 0.0, d1=1.0, d2=2.0))
    b = W.basis
    assert abs(W.coeffs[0, 1, b.idx((3, 0, 0)), 0, 0] - (1 + 2j)) < 1e-15
    assert abs(W.coeffs[0, 2, b.idx((3, 0, 0)), 0, 0] - (1 - 2j)) < 1e-15


@settings(max_examples=15, deadline=None)
@given(SEEDS)
def test_complexify_real_input_satisfies_reality(seed):
    rng = np.random.default_rng(seed)
    b = monomial_basis(4)
    monos = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (2, 1, 0), (1, 1, 1), (0, 0, 3)]
    Fv = random_field(rng, GRID, b, [0.2, 0.9], monos, 5, real_v=True)
    W = complexify_field(Fv)
    assert reality_check(W).max_violation < 1e-13 * max(1.0, np.abs(W.coeffs).max())
    back = realify_field(W)
    assert np.abs(back.coeffs - Fv.coeffs).max() < 1e-13


def test_reality_counterexample():
    b = monomial_basis(3)
    F = QPPolyField.zeros(GRID, b, [0.5])
    F.coeffs[0, 0, 0, 0, 0] = 1j
    rep = reality_check(F)
    assert rep.max_violation >= 1.0 and not rep.ok


def test_rescale_weights():
    b = monomial_basis(6)
    F = QPPolyField.zeros(GRID, b, [0.5])
    F.coeffs[...] = 1.0
    eps = 1e-4
    e0 = eps ** 0.25
    P = rescale(F, eps, perturbation=True)
    assert np.isclose(P.coeffs[0, 0, b.idx((0, 0, 0)), 0, 0], e0)
    assert np.isclose(P.coeffs[0, 1, b.idx((3, 0, 0)), 0, 0], e0 ** 5)
    for j, (l1, l2, l3) in itertools.product(range(3), b.exps):
        n = l1 + l2 + l3
        expo = 2 * n + 1 - l1 if j == 0 else 2 * n + 2 - l1
        assert np.isclose(P.coeffs[0, j, b.idx((l1, l2, l3)), 3, 1], e0 ** expo, rtol=1e-12)
    H = rescale(F, eps)
    assert np.isclose(H.coeffs[0, 1, b.idx((3, 0, 0)), 0, 0], e0)      # d4 w1^3 carried at eps0
    assert np.array_equal(rescale(F, 1.0).coeffs, F.coeffs)
    with pytest.raises(ValueError):
        rescale(F, 0.0)


# ---------------------------------------------------------------------------
# composition

def test_compose_identity(rng):
    b = monomial_basis(5)
    F = random_field(rng, GRID, b, [0.4], [(0, 0, 0), (1, 1, 0), (3, 0, 0)], 4)
    G, tail = compose(F, NearIdentity(np.zeros((1, 3))))
    assert np.abs(G.coeffs - F.coeffs).max() < 1e-13 and tail == 0.0


def test_compose_binomial():
    b = monomial_basis(4)
    F = QPPolyField.zeros(GRID, b, [0.4])
    F.coeffs[0, 0, b.idx((2, 0, 0)), 0, 0] = 1.0
    c = 0.3
    G, _ = compose(F, NearIdentity(np.array([[c, 0.0, 0.0]])))
    g = G.coeffs[0, 0, :, 0, 0]
    assert np.isclose(g[b.idx((2, 0, 0))], 1.0) and np.isclose(g[b.idx((1, 0, 0))], 2 * c)
    assert np.isclose(g[0], c * c)
    assert np.abs(np.delete(g, [0, b.idx((1, 0, 0)), b.idx((2, 0, 0))])).max() < 1e-15


def test_compose_matches_pointwise_oracle(rng):
    b = monomial_basis(6)
    params = [0.3, 0.5]
    F = random_field(rng, GRID, b, params, [(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0), (1, 1, 0),
                                            (0, 1, 1), (0, 0, 1)], 1)
    W = random_field(rng, GRID, b, params, [(0, 0, 0), (1, 0, 0), (0, 1, 0)], 1, scale=0.01)
    W0 = 0.05 * (rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3)))
    G, tail = compose(F, NearIdentity(W0, W))
    Fv, Wv, Gv = F.values(), W.values(), G.values()
    worst = 0.0
    for _ in range(20):
        wp = 0.3 * (rng.normal(size=3) + 1j * rng.normal(size=3))
        ia = int(rng.integers(2))
        ip = tuple(rng.integers(16, size=2))
        sl = (ia, slice(None), slice(None)) + ip
        T = wp + W0[ia] + np.array([pointwise(Wv[sl][i], b, wp) for i in range(3)])
        direct = np.array([pointwise(Fv[sl][j], b, T) for j in range(3)])
        via = np.array([pointwise(Gv[sl][j], b, wp) for j in range(3)])
        worst = max(worst, np.abs(direct - via).max())
    assert worst < 1e-10
    assert np.isfinite(tail) and tail >= 0


def test_compose_preserves_reality(rng):
    b = monomial_basis(6)
    F = random_field(rng, GRID, b, [0.5], [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0)], 3)
    F = F.enforce_reality()
    W = random_field(rng, GRID, b, [0.5], [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)], 3, scale=0.02)
    W = W.enforce_reality()
    z = 0.1 + 0.05j
    W0 = np.array([[0.07, z, np.conj(z)]])
    G, _ = compose(F, NearIdentity(W0, W))
    assert reality_check(G).relative < 1e-13
    W2 = W.scaled(0.5)
    H, _ = compose(G, NearIdentity(np.array([[-0.02, 0.0, 0.0]]), W2))
    assert reality_check(H).relative < 1e-13


def test_shift_w1_matches_pointwise(rng):
    b = monomial_basis(5)
    F = random_field(rng, GRID, b, [0.2, 0.8], [(0, 0, 0), (3, 0, 0), (2, 1, 0), (5, 0, 0)], 2)
    c = np.array([0.1, -0.25])
    S = shift_w1(F, c)
    Fv, Sv = F.values(), S.values()
    w = np.array([0.3, -0.2 + 0.1j, 0.4j])
    for ia in range(2):
        sl = (ia, 0, slice(None), 2, 5)
        assert abs(pointwise(Fv[sl], b, w + np.array([c[ia], 0, 0])) - pointwise(Sv[sl], b, w)) < 1e-13


# ---------------------------------------------------------------------------
# dump format

def test_dump_round_trip(rng, tmp_path):
    b = monomial_basis(4)
    F = random_field(rng, GRID, b, [0.25, 1.0 / 3.0], [(0, 0, 0), (1, 0, 2), (4, 0, 0)], 5)
    F = QPPolyField(F.grid, F.basis, F.coeffs, F.params, 0.37, 0.9, "w")
    path = tmp_path / "field.txt"
    write_dump(F, path, extra_header={"eps": 1e-6})
    G, header = read_dump(path)
    assert np.array_equal(G.coeffs, F.coeffs)
    assert np.array_equal(G.params, F.params)
    assert (G.r, G.s, G.grid, G.basis.degree) == (F.r, F.s, F.grid, 4)
    assert float(header["eps"]) == 1e-6
