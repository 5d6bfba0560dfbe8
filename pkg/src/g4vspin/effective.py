"""Reduced two-level qubit: mixing angle, splitting, mu matrix, coupling efficiency.

Sign conventions follow the effective Hamiltonian

    H_eff = -(delta_g / 2) sigma_z - (1/2) sigma . (mu @ B_ac)

with mu in GHz/T and fields in tesla; Rabi rates are population-oscillation
frequencies (a pi rotation lasts 1 / (2 * rabi)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .hamiltonians import (
    GAMMA_L,
    GAMMA_S,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    ZERO_STRAIN,
    FieldVector,
    Manifold,
    SpeciesParams,
    StrainConfig,
)

# The closed-form coupling efficiency weights the orbital Zeeman term by f/2;
# the splitting Theta(B_z) and the mu matrix carry it at full weight f. The
# full four-level model agrees with the full-weight form, so Rabi rates use it.
LAMBDA_ORBITAL_FACTOR = 0.5
RABI_ORBITAL_FACTOR = 1.0

VALIDITY_FRACTION = 0.1

# |cos theta| below this counts as an exactly in-plane dc field, so that
# float(pi / 2) lands on the in-plane branch of the x -> 0 limits
IN_PLANE_COS = 1e-12


class MixingAngle(NamedTuple):
    x: float
    xi: float
    upsilon_x: float
    upsilon_y: float
    lam: float


def mixing_angle(p: SpeciesParams, m: Manifold | str = Manifold.ground, s: StrainConfig = ZERO_STRAIN) -> MixingAngle:
    lam = p.require(m, "lam")
    ux = p.require(m, "upsilon_x")
    uy = p.require(m, "upsilon_y")
    if s.Ex or s.eps_xy:
        d = p.require(m, "d")
        ux += d * s.Ex
        uy += 2.0 * d * s.eps_xy
    xi = math.hypot(ux, uy)
    return MixingAngle(math.atan2(xi, lam), xi, ux, uy, lam)


def theta_factor(x: float, f: float) -> float:
    """Theta(B_z) / B_z = -(f cos x + 1) (gamma_L = gamma_S)."""
    return -(f * GAMMA_L / GAMMA_S * math.cos(x) + 1.0)


def delta_g_from(x: float, f: float, b: np.ndarray) -> float:
    bx, by, bz = b
    theta = theta_factor(x, f) * bz
    return 2.0 * GAMMA_S * math.sqrt(math.sin(x) ** 2 * (bx * bx + by * by) + theta * theta)


def delta_g_analytic(
    p: SpeciesParams, m: Manifold | str = Manifold.ground, s: StrainConfig = ZERO_STRAIN, b_dc: FieldVector | None = None
) -> float:
    """Lowest-doublet Zeeman splitting (GHz) of the adiabatically reduced model."""
    if b_dc is None or b_dc.magnitude == 0.0:
        return 0.0
    x = mixing_angle(p, m, s).x
    return delta_g_from(x, p.require(m, "f"), b_dc.cartesian)


def mu_from(x: float, f: float, b_dc: FieldVector) -> np.ndarray:
    """mu for mixing angle x and dc field, built from the frame of the effective dc field.

    mu = 2 gamma_s R C, where C = diag(sin x, sin x, Theta/B_z) maps a field
    to the reduced doublet and the rows of R are the eigen-frame axes. Built
    this way the entries stay finite when B_x, B_y or B_z vanish; the
    in-plane direction then comes from the azimuth of ``b_dc``.
    """
    if b_dc.magnitude == 0.0:
        raise ValueError("mu is undefined at zero dc field (degenerate qubit)")
    sx = math.sin(x)
    tz = theta_factor(x, f)
    bx, by, bz = b_dc.cartesian
    b_perp = math.hypot(bx, by)
    if b_perp > 0.0:
        cphi, sphi = bx / b_perp, by / b_perp
    else:
        cphi, sphi = math.cos(b_dc.phi), math.sin(b_dc.phi)
    if abs(bz) < IN_PLANE_COS * b_dc.magnitude:
        bz = 0.0
    theta = tz * bz
    norm = math.sqrt((sx * b_perp) ** 2 + theta ** 2)
    if norm <= IN_PLANE_COS * b_dc.magnitude:
        raise ValueError("mu is undefined: effective dc field vanishes (x = 0 with in-plane field)")
    rot = np.array(
        [
            [theta * cphi / norm, theta * sphi / norm, -sx * b_perp / norm],
            [sphi, -cphi, 0.0],
            [sx * b_perp * cphi / norm, sx * b_perp * sphi / norm, theta / norm],
        ]
    )
    return 2.0 * GAMMA_S * rot @ np.diag([sx, sx, tz])


def mu_matrix(
    p: SpeciesParams, m: Manifold | str = Manifold.ground, s: StrainConfig = ZERO_STRAIN, b_dc: FieldVector | None = None
) -> np.ndarray:
    if b_dc is None:
        raise ValueError("mu requires a dc field")
    return mu_from(mixing_angle(p, m, s).x, p.require(m, "f"), b_dc)


def mu_closed_form(x: float, f: float, b: np.ndarray) -> np.ndarray:
    """Entry-by-entry closed forms, valid only for generic fields (all components nonzero).

    The zx, zy and xz entries carry gamma_s^2 rather than gamma_s so that
    every entry has units of GHz/T.
    """
    bx, by, bz = b
    g = GAMMA_S
    bp = math.hypot(bx, by)
    th = theta_factor(x, f) * bz
    dg = delta_g_from(x, f, b)
    sx = math.sin(x)
    mxx = 4 * g * g * sx * bx * th / (bp * dg)
    myx = 2 * g * sx * by / bp
    mzx = 4 * g * g * sx * sx * bx / dg
    return np.array(
        [
            [mxx, by / bx * mxx, -4 * g * g * sx * bp * th / (bz * dg)],
            [myx, -bx / by * myx, 0.0],
            [mzx, by / bx * mzx, 4 * g * g * th * th / (bz * dg)],
        ]
    )


def effective_hamiltonian(delta_g: float, mu: np.ndarray, b_ac: np.ndarray) -> np.ndarray:
    m = mu @ np.asarray(b_ac, dtype=float)
    return -0.5 * delta_g * PAULI_Z - 0.5 * (m[0] * PAULI_X + m[1] * PAULI_Y + m[2] * PAULI_Z)


def coupling_lambda(
    theta_dc: float,
    theta_ac: float,
    phi: float,
    x: float,
    f: float,
    orbital_factor: float = LAMBDA_ORBITAL_FACTOR,
) -> float:
    """Dimensionless drive efficiency Lambda(phi, theta_dc, theta_ac; x).

    ``phi`` is the azimuth difference phi_dc - phi_ac. ``orbital_factor``
    weights f inside zeta(x) = sin x / (orbital_factor f cos x + 1).
    """
    xi_term = math.sin(phi) * math.sin(theta_ac)
    chi = math.sin(theta_dc) * math.cos(theta_ac) - math.cos(phi) * math.cos(theta_dc) * math.sin(theta_ac)
    q = orbital_factor * f * math.cos(x) + 1.0
    s2 = math.sin(x) ** 2
    ct = math.cos(theta_dc)
    if abs(ct) < IN_PLANE_COS:
        ct = 0.0
    st2 = 1.0 - ct * ct
    ct2 = ct * ct
    # sin^2 x chi^2 / (sin^2 theta zeta^2 + cos^2 theta), multiplied through by q^2
    den = st2 * s2 + ct2 * q * q
    if den > 0.0:
        chi_term = s2 * q * q * chi * chi / den
    else:
        chi_term = q * q * chi * chi  # x -> 0 at theta_dc = pi/2
    return math.sqrt(s2 * xi_term * xi_term + chi_term)


class LambdaLimits(NamedTuple):
    f_small_x: float
    g_large_xi: float


def lambda_limits(theta_dc: float, theta_ac: float, phi: float) -> LambdaLimits:
    """Slope of Lambda at x -> 0 and the value at x = pi/2 (free-electron limit).

    The slope is unbounded (inf) when B_dc lies in the plane and B_ac has an
    axial component.
    """
    xi_term = math.sin(phi) * math.sin(theta_ac)
    c = math.cos(theta_dc)
    if abs(c) < IN_PLANE_COS:
        if abs(math.cos(theta_ac)) > IN_PLANE_COS:
            f_val = math.inf
        else:
            f_val = math.hypot(xi_term, math.cos(phi) * math.sin(theta_ac))
    else:
        inner = math.cos(phi) * math.sin(theta_ac) - math.cos(theta_ac) * math.tan(theta_dc)
        f_val = math.hypot(xi_term, inner)
    chi = math.sin(theta_dc) * math.cos(theta_ac) - math.cos(phi) * math.cos(theta_dc) * math.sin(theta_ac)
    return LambdaLimits(f_val, math.hypot(xi_term, chi))


class ExtremalConfigs(NamedTuple):
    lambda1: float
    lambda2: float
    ratio: float


def extremal_configs(x: float, f: float, orbital_factor: float = LAMBDA_ORBITAL_FACTOR) -> ExtremalConfigs:
    """Lambda for axial dc / in-plane ac (lambda1) and in-plane dc / axial ac (lambda2)."""
    l1 = math.sin(x)
    l2 = orbital_factor * f * math.cos(x) + 1.0
    if l1 == 0.0:
        ratio = math.inf
    else:
        ratio = orbital_factor * f / math.tan(x) + 1.0 / l1
    return ExtremalConfigs(l1, l2, ratio)


def _geometry(b_dc: FieldVector, b_ac: FieldVector):
    return b_dc.theta, b_ac.theta, b_dc.phi - b_ac.phi


def rabi_frequency(
    p: SpeciesParams,
    m: Manifold | str,
    s: StrainConfig,
    b_dc: FieldVector,
    b_ac: FieldVector,
) -> float:
    """Rabi frequency gamma_s |B_ac| Lambda in MHz."""
    if b_ac.magnitude == 0.0:
        return 0.0
    x = mixing_angle(p, m, s).x
    lam = coupling_lambda(*_geometry(b_dc, b_ac), x, p.require(m, "f"), orbital_factor=RABI_ORBITAL_FACTOR)
    return GAMMA_S * b_ac.magnitude * lam * 1e3


@dataclass(frozen=True)
class EffectiveQubit:
    x: float
    xi: float
    delta_g: float  # GHz
    mu: np.ndarray  # GHz/T
    rotation_axis: np.ndarray
    rabi: float  # MHz
    valid: bool

    def hamiltonian(self, b_ac: np.ndarray) -> np.ndarray:
        return effective_hamiltonian(self.delta_g, self.mu, b_ac)


def effective_qubit(
    p: SpeciesParams,
    m: Manifold | str,
    s: StrainConfig,
    b_dc: FieldVector,
    b_ac: FieldVector,
    carrier_phase: float = 0.0,
) -> EffectiveQubit:
    """Collect the reduced-model quantities for one operating point.

    ``valid`` is False when delta_g or the Rabi rate exceeds 10 % of the
    orbital branch gap 2 sqrt(lambda^2 + xi^2), where adiabatic elimination
    stops being trustworthy.
    """
    ma = mixing_angle(p, m, s)
    f = p.require(m, "f")
    dg = delta_g_from(ma.x, f, b_dc.cartesian)
    mu = mu_from(ma.x, f, b_dc)
    drive = mu @ b_ac.cartesian
    half = 0.5 * np.hypot(drive[0], drive[1])
    if half > 0.0:
        axis = np.array([drive[0], drive[1], 0.0]) / (2.0 * half)
        c, sn = math.cos(-carrier_phase), math.sin(-carrier_phase)
        axis = np.array([c * axis[0] - sn * axis[1], sn * axis[0] + c * axis[1], 0.0])
    else:
        axis = np.zeros(3)
    rabi = rabi_frequency(p, m, s, b_dc, b_ac)
    gap = 2.0 * math.hypot(ma.lam, ma.xi)
    valid = dg <= VALIDITY_FRACTION * gap and rabi * 1e-3 <= VALIDITY_FRACTION * gap
    return EffectiveQubit(ma.x, ma.xi, dg, mu, axis, rabi, valid)


class AmplificationRow(NamedTuple):
    Ex: float
    f: float
    x: float
    lambda2: float


def amplification_curve(
    p: SpeciesParams,
    strains: list[float] | np.ndarray,
    f_values: list[float] | np.ndarray,
    m: Manifold | str = Manifold.ground,
    orbital_factor: float = LAMBDA_ORBITAL_FACTOR,
) -> list[AmplificationRow]:
    """Lambda for in-plane B_dc and axial B_ac versus external Ex, one curve per f."""
    rows = []
    for f in f_values:
        for ex in strains:
            x = mixing_angle(p, m, StrainConfig(Ex=float(ex))).x
            lam2 = coupling_lambda(math.pi / 2, 0.0, 0.0, x, float(f), orbital_factor)
            rows.append(AmplificationRow(float(ex), float(f), x, lam2))
    return rows
