import numpy as np
import pytest

from qpkam.kam_engine import Engine, IterationSchedule, run
from qpkam.qp_field import StepFailure
from qpkam.system import PolynomialModel, SystemSpec
from qpkam.translate import CASE_TABLE
from qpkam.vdp import GOLDEN, VdpConfig, VdpModel


def _steps(res):
    return [r for r in res.ledger if r.get("event") == "step"]


# ---------------------------------------------------------------------------
# schedule

def test_schedule_sequences():
    eps0 = 1e-6 ** 0.25
    s = IterationSchedule(eps0, CASE_TABLE[1][2], 1e-3, 0.5, 1.0, 512)
    assert s.eps(0) == eps0 and abs(s.eps(1) - eps0 ** 0.5) < 1e-16
    for nu in range(1, 6):
        assert abs(s.eps(nu + 1) - s.eps(nu) ** 1.125) <= 1e-14 * s.eps(nu + 1)
        assert s.gamma(nu) == 1e-3 / (nu + 1) ** 2
        assert s.r(nu) >= 0.25 and s.s(nu) >= 0.5
        assert s.rho(nu) > 0 and s.delta(nu) > 0
    assert s.sigma(0) == 0 and s.sigma(2000) < 0.5
    assert abs(s.sigma(2000) - 0.5) < 1e-3
    K = [s.K(nu)[0] for nu in range(6)]
    assert K == sorted(K) and K[-1] == 512


# ---------------------------------------------------------------------------
# trivial and degenerate inputs

def test_zero_eps_gives_zero_solution(vdp_spec):
    res = run(vdp_spec.with_eps(0.0))
    assert res.converged
    v, imag = res.torus.values()
    assert np.all(v == 0) and imag == 0
    assert 0 < res.pset.measure < 1.0
    assert res.measure[0]["removed"] > 0


def test_unperturbed_normal_form_needs_no_step():
    model = PolynomialModel([1.0, GOLDEN], [2.0], [0.0, 1.0])
    spec = SystemSpec(model, (0.6, 0.9), 1e-6, gate_override=True)
    res = run(spec)
    assert res.converged and not _steps(res)
    v, _ = res.torus.values()
    assert np.abs(v).max() == 0


def test_zero_mean_forcing_is_a_configuration_error():
    cfg = VdpConfig(forcing=({"m": 0, "n": 0, "k": [1, 0], "cos": 1.0},))
    for case in (None, 1):
        spec = SystemSpec(VdpModel(cfg), cfg.interval, 1e-6, case=case, gate_override=True)
        res = run(spec, max_steps=1)
        assert res.status == "configuration", res.message
        assert res.torus is None


def test_gate_is_enforced_without_override(vdp_spec):
    from dataclasses import replace
    res = run(replace(vdp_spec, gate_override=False), max_steps=1)
    assert res.status == "configuration" and "gate" in res.message


def test_reality_fault_injection(vdp_spec):
    eng = Engine(vdp_spec)
    state = eng.initial_state()
    b = state.H.basis
    state.H.coeffs[:, 1, b.idx((1, 0, 0)), 1, 0] += 1e-3       # no conjugate partner in component 3
    with pytest.raises(StepFailure, match="reality"):
        eng.step(state)


# ---------------------------------------------------------------------------
# the van der Pol run

def test_run_converges(vdp_run):
    assert vdp_run.converged
    steps = _steps(vdp_run)
    assert len(steps) <= 6
    assert steps[-1]["G_after"] < 1e-12


def test_transform_sizes(vdp_run):
    for row in _steps(vdp_run):
        assert row["W_size"] <= 10 * row["W_bound"]
    # after the first step the nominal bound holds without the safety factor
    assert all(r["W_size"] <= r["W_bound"] for r in _steps(vdp_run)[1:])


def test_reality_ledger(vdp_run):
    rows = [r for r in vdp_run.ledger if r.get("event") == "reality"]
    assert rows and max(r["max_violation"] for r in rows) < 1e-11


def test_torus_is_real(vdp_run):
    _, imag = vdp_run.torus.values()
    assert imag < 1e-12


def test_grid_independence(vdp_run):
    t = vdp_run.torus
    v16, _ = t.values(16)
    v32, _ = t.values(32)
    assert np.abs(v32[:, :, ::2, ::2] - v16).max() < 1e-9


def test_amplitude_band(vdp_run):
    amp = vdp_run.torus.amplitude().max()
    c = amp / 1e-6 ** (1 / 3)
    assert 0.5 <= c <= 2.0


def test_resonant_work_point_is_dropped(vdp_run):
    t = vdp_run.torus
    assert 1.0 not in t.params
    assert t.valid.sum() == len(t.params) == 8
    assert not vdp_run.pset.contains(1.0)


def test_measure_ledger_telescopes(vdp_run):
    m = vdp_run.measure
    assert m[0]["measure_before"] == 1.0
    for prev, nxt in zip(m[:-1], m[1:]):
        assert nxt["measure_before"] == prev["measure_after"]
    total = sum(r["removed"] for r in m)
    assert abs(m[0]["measure_before"] - vdp_run.pset.measure - total) < 1e-12
    c3 = max(r["c3_fit"] for r in m)
    for r in m:
        assert r["removed"] <= c3 * r["gamma"] * r["measure_before"] * (1 + 1e-12)


def test_summary(vdp_run):
    s = vdp_run.summary()
    assert s["status"] == "converged" and s["steps"] == len(_steps(vdp_run))
    assert s["measure_final"] == vdp_run.pset.measure
