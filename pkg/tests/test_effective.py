import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g4vspin.effective import (
    amplification_curve,
    coupling_lambda,
    delta_g_analytic,
    delta_g_from,
    effective_qubit,
    extremal_configs,
    lambda_limits,
    mixing_angle,
    mu_from,
    mu_matrix,
    mu_closed_form,
    rabi_frequency,
)
from g4vspin.gates import driven_model, fit_rabi, rabi_trace
from g4vspin.hamiltonians import (
    GAMMA_S,
    FieldVector,
    StrainConfig,
    build_static_hamiltonian,
    get_species,
    numeric_splittings,
    zeeman,
)
from g4vspin.numerics import hermitian_eigensystem

SNV = get_species("SnV")
SIV = get_species("SiV")
NO_JT = SNV.with_manifold("ground", upsilon_x=0.0, upsilon_y=0.0)
PERP = math.pi / 2
angles = st.floats(0.0, math.pi)
azimuths = st.floats(-math.pi, math.pi)


def test_mixing_angle_snv():
    ma = mixing_angle(SNV)
    assert ma.xi == 65.0
    assert ma.x == pytest.approx(math.atan(65 / 407.5), rel=1e-14)
    assert ma.x == pytest.approx(0.15818, abs=1e-5)


def test_mixing_angle_without_jahn_teller():
    assert mixing_angle(NO_JT).x == 0.0


def test_mixing_angle_siv_strained():
    ma = mixing_angle(SIV, "ground", StrainConfig(Ex=1e-4))
    assert ma.upsilon_x == pytest.approx(132.0)
    assert ma.x == pytest.approx(math.atan(math.hypot(132, 3) / 24.5), rel=1e-13)


def test_delta_g_in_plane_field():
    x = mixing_angle(SNV).x
    assert delta_g_analytic(SNV, b_dc=FieldVector(0.3, PERP)) == pytest.approx(2 * GAMMA_S * math.sin(x) * 0.3, rel=1e-14)
    assert delta_g_analytic(NO_JT, b_dc=FieldVector(0.3, PERP)) < 1e-12
    assert delta_g_analytic(SNV) == 0.0


def test_delta_g_matches_full_diagonalization():
    b = FieldVector(0.1, PERP)
    exact = numeric_splittings(build_static_hamiltonian(SNV, b_dc=b)).delta_g
    assert delta_g_analytic(SNV, b_dc=b) == pytest.approx(exact, rel=2e-2)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(0.01, 1.0), st.floats(0.05, math.pi - 0.05), azimuths)
def test_mu_closed_form_relations_and_frame_form(x, mag, theta, phi):
    b = FieldVector(mag, theta, phi)
    bx, by, bz = b.cartesian
    if min(abs(bx), abs(by), abs(bz)) < 1e-3 * mag:
        return
    mu = mu_closed_form(x, 0.15, b.cartesian)
    scale = np.max(np.abs(mu))
    assert abs(mu[0, 1] * bx - mu[0, 0] * by) <= 1e-12 * scale * mag
    assert abs(mu[1, 1] * by + mu[1, 0] * bx) <= 1e-12 * scale * mag
    assert abs(mu[2, 1] * bx - mu[2, 0] * by) <= 1e-12 * scale * mag
    assert mu[1, 2] == 0.0
    assert np.max(np.abs(mu_from(x, 0.15, b) - mu)) <= 1e-12 * scale


@pytest.mark.parametrize("theta,phi", [(PERP, 0.0), (PERP, PERP), (0.0, 0.0), (0.7, 0.0), (0.7, PERP), (math.pi, 0.3)])
def test_mu_on_singular_loci_is_the_limit(theta, phi):
    x = mixing_angle(SNV).x
    mu = mu_from(x, 0.15, FieldVector(0.2, theta, phi))
    assert np.all(np.isfinite(mu)) and mu[1, 2] == 0.0
    near = mu_from(x, 0.15, FieldVector(0.2, min(max(theta + 1e-7, 0.0), math.pi), phi + 1e-7))
    assert np.max(np.abs(near - mu)) < 1e-4 * np.max(np.abs(mu))


def test_mu_requires_field():
    with pytest.raises(ValueError):
        mu_matrix(SNV, b_dc=FieldVector(0.0))
    with pytest.raises(ValueError):
        mu_from(0.0, 0.15, FieldVector(0.1, PERP))


def _eliminated_block(p, b_dc, b_ac):
    es = hermitian_eigensystem(build_static_hamiltonian(p, b_dc=b_dc))
    v = es.vectors[:, :2]
    return v.conj().T @ zeeman(p.ground.f, b_ac) @ v


@pytest.mark.parametrize(
    "b_dc,b_ac",
    [
        (FieldVector(0.1, PERP), FieldVector(1e-3, 0.0)),
        (FieldVector(0.1, 0.6, 0.4), FieldVector(1e-3, 1.2, -0.8)),
        (FieldVector(0.1, 0.0), FieldVector(1e-3, PERP, 0.3)),
    ],
)
def test_effective_hamiltonian_matches_numeric_elimination(b_dc, b_ac):
    eq = effective_qubit(SNV, "ground", StrainConfig(), b_dc, b_ac)
    h_eff = eq.hamiltonian(b_ac.cartesian)
    v = _eliminated_block(SNV, b_dc, b_ac)
    drive = h_eff + 0.5 * eq.delta_g * np.diag([1.0, -1.0])
    assert abs(drive[0, 1]) == pytest.approx(abs(v[0, 1]), rel=2e-2)
    diag_exact = (v[0, 0] - v[1, 1]).real
    diag_eff = (drive[0, 0] - drive[1, 1]).real
    assert abs(diag_eff - diag_exact) <= 2e-2 * max(abs(diag_exact), abs(v[0, 1]))


def test_lambda_examples():
    x, f = 0.3, 0.15
    assert coupling_lambda(0.8, 0.8, 0.0, x, f) == pytest.approx(0.0, abs=1e-15)
    assert coupling_lambda(0.0, PERP, 0.0, x, f) == pytest.approx(math.sin(x), abs=1e-12)
    assert coupling_lambda(PERP, 0.0, 0.0, x, f) == pytest.approx(0.5 * f * math.cos(x) + 1.0, abs=1e-12)
    assert coupling_lambda(PERP, 0.0, 0.0, 0.0, f) == pytest.approx(1.075, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(angles, angles, azimuths, st.floats(0.0, PERP), st.floats(-3.0, 3.0))
def test_lambda_depends_only_on_azimuth_difference(theta_dc, theta_ac, phi, x, c):
    ref = effective_qubit(SNV, "ground", StrainConfig(), FieldVector(0.2, theta_dc, phi + 0.4), FieldVector(1e-3, theta_ac, 0.4))
    if ref.delta_g < 1e-9:
        return
    moved = effective_qubit(
        SNV, "ground", StrainConfig(), FieldVector(0.2, theta_dc, phi + 0.4 + c), FieldVector(1e-3, theta_ac, 0.4 + c)
    )
    assert moved.rabi == pytest.approx(ref.rabi, rel=1e-12, abs=1e-12)
    drive_ref = np.linalg.norm(ref.mu @ FieldVector(1e-3, theta_ac, 0.4).cartesian)
    drive_moved = np.linalg.norm(moved.mu @ FieldVector(1e-3, theta_ac, 0.4 + c).cartesian)
    assert abs(drive_moved - drive_ref) < 1e-12 * GAMMA_S * 1e-3


def test_lambda_small_x_slope():
    rng = np.random.default_rng(4)
    for _ in range(100):
        theta_dc = rng.uniform(0.0, math.radians(80))
        theta_ac, phi = rng.uniform(0.0, math.pi), rng.uniform(-math.pi, math.pi)
        slope = lambda_limits(theta_dc, theta_ac, phi).f_small_x
        val = coupling_lambda(theta_dc, theta_ac, phi, 1e-3, 0.15)
        if slope < 1e-6:
            assert val < 1e-6
            continue
        assert abs(val / 1e-3 / slope - 1.0) < 1e-2


@settings(max_examples=100, deadline=None)
@given(angles, angles, azimuths, st.floats(0.0, 1.0))
def test_lambda_free_electron_limit(theta_dc, theta_ac, phi, f):
    g = lambda_limits(theta_dc, theta_ac, phi).g_large_xi
    assert abs(coupling_lambda(theta_dc, theta_ac, phi, PERP, f) - g) < 1e-10


def test_lambda_limits_parallel_and_unbounded():
    lim = lambda_limits(0.9, 0.9, 0.0)
    assert lim.g_large_xi == pytest.approx(0.0, abs=1e-15)
    assert math.isinf(lambda_limits(PERP, 0.0, 0.0).f_small_x)
    assert math.isfinite(lambda_limits(PERP, PERP, 0.3).f_small_x)


def test_extremal_configs():
    assert extremal_configs(PERP, 0.15) == pytest.approx((1.0, 1.0, 1.0), abs=1e-15)
    x = mixing_angle(SNV).x
    ex = extremal_configs(x, 0.15)
    assert ex.ratio == pytest.approx(0.15 / math.tan(x) / 2 + 1 / math.sin(x), rel=1e-14)
    assert math.isinf(extremal_configs(0.0, 0.15).ratio)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, PERP), st.floats(0.0, 1.0))
def test_extremal_ratio_identity(x, f):
    ex = extremal_configs(x, f)
    assert ex.ratio * ex.lambda1 == pytest.approx(ex.lambda2, rel=1e-13)


@pytest.mark.parametrize("p", [SNV, SIV], ids=["SnV", "SiV"])
def test_lambda2_is_global_maximum_on_coarse_grid(p):
    x, f = mixing_angle(p).x, p.ground.f
    lam2 = extremal_configs(x, f).lambda2
    grid = np.linspace(0.0, math.pi, 31)
    best = max(coupling_lambda(a, b, c, x, f) for a in grid for b in grid for c in np.linspace(-math.pi, math.pi, 13))
    assert best <= lam2 + 1e-12
    assert best == pytest.approx(lam2, rel=1e-12)


def test_curvature_near_lambda2():
    x, f = mixing_angle(SNV).x, 0.15
    lam2 = extremal_configs(x, f).lambda2
    for d in np.linspace(-0.2, 0.2, 41):
        assert coupling_lambda(PERP + d, 0.0, 0.0, x, f) <= lam2 + 1e-14


def test_amplification_curve():
    strains = np.linspace(0.0, 2e-3, 21)
    flat = amplification_curve(NO_JT, strains, [0.0])
    assert all(r.lambda2 == pytest.approx(1.0, abs=1e-14) for r in flat)
    rows = amplification_curve(NO_JT, strains, [0.15])
    assert rows[0].lambda2 == pytest.approx(1.075, abs=1e-12)
    lam = [r.lambda2 for r in rows]
    assert all(b < a for a, b in zip(lam, lam[1:]))
    assert all(v > 1.0 for v in lam)


def test_rabi_examples():
    b_dc = FieldVector(0.1, PERP)
    assert rabi_frequency(SNV, "ground", StrainConfig(), b_dc, FieldVector(0.0)) == 0.0
    snv = rabi_frequency(SNV, "ground", StrainConfig(), b_dc, FieldVector(1e-3, 0.0))
    assert snv == pytest.approx(16.1, rel=0.1)


def test_carrier_phase_rotates_axis():
    b_dc, b_ac = FieldVector(0.2, 0.7, 0.2), FieldVector(1e-3, 1.1, -0.5)
    a0 = effective_qubit(SNV, "ground", StrainConfig(), b_dc, b_ac).rotation_axis
    a1 = effective_qubit(SNV, "ground", StrainConfig(), b_dc, b_ac, carrier_phase=PERP).rotation_axis
    assert a0[2] == 0.0 and a1[2] == 0.0
    assert np.linalg.norm(a0) == pytest.approx(1.0, rel=1e-14)
    assert np.dot(a0, a1) == pytest.approx(0.0, abs=1e-14)
    assert abs(abs(np.cross(a0, a1)[2]) - 1.0) < 1e-14


def test_validity_guard():
    good = effective_qubit(SNV, "ground", StrainConfig(), FieldVector(0.2, PERP), FieldVector(1e-3, 0.0))
    assert good.valid
    bad = effective_qubit(SIV, "ground", StrainConfig(), FieldVector(2.0, 0.0), FieldVector(1e-3, PERP))
    assert not bad.valid


def test_delta_g_from_is_nonnegative():
    assert delta_g_from(0.3, 0.1, np.array([0.0, 0.0, -0.2])) > 0.0


@pytest.mark.parametrize(
    "p,b_dc,b_ac",
    [
        (SNV, FieldVector(0.2, PERP), FieldVector(1e-3, 0.0)),
        (SIV, FieldVector(0.1, 0.3, 0.5), FieldVector(1e-3, 1.3, 2.0)),
        (SNV, FieldVector(0.15, 1.0, 0.0), FieldVector(1e-3, 2.0, 1.0)),
    ],
)
def test_rabi_matches_time_evolution(p, b_dc, b_ac):
    s = StrainConfig()
    eq = effective_qubit(p, "ground", s, b_dc, b_ac)
    model = driven_model(p, s, b_dc, b_ac)
    rate = eq.rabi * 1e-3
    times = np.linspace(0.0, 1.0 / rate, 9)[1:]
    fitted = fit_rabi(times, rabi_trace(model, model.delta_g, times), rate)
    assert fitted == pytest.approx(rate, rel=5e-2)
