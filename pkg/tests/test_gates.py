import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from g4vspin.effective import effective_qubit
from g4vspin.gates import (
    SQRT_X_GATE,
    TARGETS,
    X_GATE,
    BracketError,
    DriveSpec,
    average_fidelity,
    driven_model,
    optimize_gate_time,
    propagate_drive,
    rotation,
    rwa_angle,
    rwa_gate,
    simulate_gate,
    su2_decompose,
)
from g4vspin.hamiltonians import FieldVector, StrainConfig, get_species

SNV = get_species("SnV")
SIV = get_species("SiV")
NO_STRAIN = StrainConfig()
PERP = math.pi / 2
B_DC_PAR = FieldVector(0.2, 0.0)
B_DC_PERP = FieldVector(0.2, PERP)
B_AC_PAR = FieldVector(1e-3, 0.0)
B_AC_PERP = FieldVector(1e-3, PERP)


def unitarity_error(u):
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def closed_form_fidelity(u, v):
    # unitary pairs: F = (2 + |Tr(V^H U)|^2) / 6
    return (2.0 + abs(np.trace(v.conj().T @ u)) ** 2) / 6.0


def test_drive_spec_validation():
    with pytest.raises(ValueError):
        DriveSpec(B_AC_PAR, 0.0)
    with pytest.raises(ValueError):
        DriveSpec(B_AC_PAR, 1.0, carrier=-1.0)
    with pytest.raises(ValueError):
        DriveSpec(B_AC_PAR, 1.0, envelope="gauss")
    assert DriveSpec(B_AC_PAR, 10.0, envelope="cosine_ramp", ramp_fraction=0.2).ramp == pytest.approx(2.0)
    assert DriveSpec(B_AC_PAR, 10.0, ramp_fraction=0.2).ramp == 0.0


def test_zero_drive_is_free_evolution():
    model = driven_model(SNV, NO_STRAIN, B_DC_PERP, FieldVector(0.0))
    res = simulate_gate(SNV, NO_STRAIN, B_DC_PERP, DriveSpec(FieldVector(0.0), 7.3, carrier=0.9), model=model)
    q = res.qubit_2
    assert abs(q[0, 1]) < 1e-14 and abs(q[1, 0]) < 1e-14
    assert np.allclose(np.abs(np.diag(q)), 1.0, atol=1e-12)
    assert res.leakage == 0.0
    assert math.isnan(res.infidelity)


@pytest.mark.parametrize(
    "p,b_dc,b_ac,t1,t2",
    [
        (SIV, B_DC_PAR, FieldVector(3.7e-3, PERP), 2.3, 6.0),
        (SNV, FieldVector(0.2, 0.8, 0.3), FieldVector(1e-3, 1.9, 1.0), 0.7, 1.5),
    ],
    ids=["SiV", "SnV"],
)
def test_segments_compose(p, b_dc, b_ac, t1, t2):
    model = driven_model(p, NO_STRAIN, b_dc, b_ac)
    drive = DriveSpec(b_ac, t2, envelope="cosine_ramp", ramp_fraction=0.3, phase=0.4)
    whole = propagate_drive(model, drive, 0.0, t2)
    split = propagate_drive(model, drive, t1, t2) @ propagate_drive(model, drive, 0.0, t1)
    assert np.max(np.abs(whole - split)) < 1e-8
    assert unitarity_error(whole) < 1e-8


@pytest.mark.parametrize("envelope,ramp", [("rect", 0.0), ("cosine_ramp", 0.25)])
def test_gate_propagator_is_unitary(envelope, ramp):
    drive = DriveSpec(FieldVector(3.7e-3, PERP), 20.0, envelope=envelope, ramp_fraction=ramp)
    res = simulate_gate(SIV, NO_STRAIN, B_DC_PAR, drive, X_GATE)
    assert unitarity_error(res.unitary_4) < 1e-8
    assert 0.0 <= res.leakage <= 1.0 and 0.0 <= res.infidelity <= 1.0


def test_rwa_gate_examples():
    eq = effective_qubit(SNV, "ground", NO_STRAIN, B_DC_PERP, B_AC_PAR)
    assert np.allclose(rwa_gate(eq, 0.0, 0.3), np.eye(2), atol=1e-15)
    assert average_fidelity(rwa_gate(eq, PERP, 0.0), rotation("x", math.pi)) == pytest.approx(1.0, abs=1e-12)


def _rwa_infidelity(b_ac_mag, duration=40.0):
    b_ac = FieldVector(b_ac_mag, 0.0)
    eq = effective_qubit(SNV, "ground", NO_STRAIN, B_DC_PERP, b_ac)
    res = simulate_gate(SNV, NO_STRAIN, B_DC_PERP, DriveSpec(b_ac, duration))
    # the exact gauge drives about -x
    v = rwa_gate(eq, rwa_angle(eq, duration), math.pi)
    return 1.0 - average_fidelity(res.qubit_2, v), eq.rabi * 1e-3 / eq.delta_g


def test_rwa_matches_exact_for_weak_drive():
    infid, ratio = _rwa_infidelity(0.3e-3)
    assert ratio < 1e-2
    assert infid < 1e-3


def test_rwa_error_falls_with_drive_ratio():
    vals = [_rwa_infidelity(b)[0] for b in (0.5e-3, 0.16e-3, 0.05e-3)]
    for a, b in zip(vals, vals[1:]):
        assert b <= 2.0 * a
    assert vals[-1] < vals[0]


def test_su2_identity_and_axis_cases():
    assert su2_decompose(np.eye(2)) == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)
    assert su2_decompose(rotation("y", 0.7)) == pytest.approx((0.0, 0.7, 0.0), abs=1e-12)


def test_su2_rejects_non_unitary():
    with pytest.raises(ValueError):
        su2_decompose(np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        su2_decompose(np.eye(3))


def test_su2_round_trip_haar():
    targets = unitary_group.rvs(2, size=1000, random_state=np.random.default_rng(17))
    for v in targets:
        a, b, g = su2_decompose(v)
        assert -math.pi < a <= math.pi and -math.pi < g <= math.pi and 0.0 <= b <= math.pi
        r = rotation("x", a) @ rotation("y", b) @ rotation("x", g)
        ov = np.trace(r.conj().T @ v)
        assert np.max(np.abs(v - ov / abs(ov) * r)) < 1e-10


def test_fidelity_identity_and_small_z_error():
    v = unitary_group.rvs(2, random_state=np.random.default_rng(1))
    assert average_fidelity(v, v) == pytest.approx(1.0, abs=1e-12)
    for eps in (1e-2, 1e-3, 1e-4):
        infid = 1.0 - average_fidelity(v @ rotation("z", eps), v)
        assert infid == pytest.approx(eps ** 2 / 6, rel=1e-3)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_fidelity_bounds_phase_invariance_and_oracle(seed, a, b):
    u, v = unitary_group.rvs(2, size=2, random_state=np.random.default_rng(seed))
    f = average_fidelity(u, v)
    assert 0.0 <= f <= 1.0
    assert f == pytest.approx(closed_form_fidelity(u, v), abs=1e-12)
    assert average_fidelity(np.exp(1j * a) * u, np.exp(1j * b) * v) == pytest.approx(f, abs=1e-12)


def test_leakage_lowers_fidelity():
    u4 = np.eye(4, dtype=complex)
    c, s = math.cos(0.1), math.sin(0.1)
    u4[[0, 2], [0, 2]] = c
    u4[0, 2], u4[2, 0] = -s, s
    assert average_fidelity(None, np.eye(2), leakage_map=u4) < 1.0 - 1e-3


def test_snv_parallel_table_durations():
    for target, duration in (("pi", 226.8), ("pi_half", 113.4)):
        res = simulate_gate(SNV, NO_STRAIN, B_DC_PAR, DriveSpec(B_AC_PERP, duration), TARGETS[target])
        assert res.infidelity < 1e-7


@pytest.mark.xfail(
    strict=True,
    reason="at Omega/Delta_g ~ 2e-2 the untuned counter-rotating switch-on/off kicks leave ~2e-5",
)
def test_snv_perpendicular_table_duration_untuned():
    res = simulate_gate(SNV, NO_STRAIN, B_DC_PERP, DriveSpec(B_AC_PAR, 31.1), X_GATE)
    assert res.infidelity < 1e-7


def test_siv_parallel_optimized():
    opt = optimize_gate_time(SIV, NO_STRAIN, B_DC_PAR, "pi", FieldVector(3.7e-3, PERP))
    assert opt.infidelity < 1e-5
    assert abs(opt.b_ac.magnitude / 3.7e-3 - 1.0) <= 0.1
    again = optimize_gate_time(SIV, NO_STRAIN, B_DC_PAR, "pi", FieldVector(3.7e-3, PERP))
    assert (again.duration, again.infidelity) == (opt.duration, opt.infidelity)


@pytest.mark.parametrize(
    "b_dc,b_ac,target,table",
    [
        (B_DC_PAR, B_AC_PERP, "pi", 226.8),
        (B_DC_PAR, B_AC_PERP, "pi_half", 113.4),
        (B_DC_PERP, B_AC_PAR, "pi", 31.1),
        pytest.param(
            B_DC_PERP,
            B_AC_PAR,
            "pi_half",
            15.6,
            marks=pytest.mark.xfail(strict=True, reason="tuned pi/2 lands at 15.31 ns; the 15.6 ns reference is T_pi / 2 rounded up"),
        ),
    ],
    ids=["par-pi", "par-pi_half", "perp-pi", "perp-pi_half"],
)
def test_snv_optimization_keeps_durations(b_dc, b_ac, target, table):
    opt = optimize_gate_time(SNV, NO_STRAIN, b_dc, target, b_ac)
    assert abs(opt.duration / table - 1.0) < 1e-2


def test_optimizer_rejects_zero_drive():
    with pytest.raises(BracketError):
        optimize_gate_time(SNV, NO_STRAIN, B_DC_PERP, "pi", FieldVector(0.0))
    with pytest.raises(ValueError):
        optimize_gate_time(SNV, NO_STRAIN, B_DC_PERP, "hadamard", B_AC_PAR)


def test_targets_are_x_rotations():
    assert average_fidelity(X_GATE, rotation("x", math.pi)) == pytest.approx(1.0, abs=1e-12)
    assert average_fidelity(SQRT_X_GATE, rotation("x", PERP)) == pytest.approx(1.0, abs=1e-12)
