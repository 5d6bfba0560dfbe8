"""Dissipation: optical dipoles, phonon couplings, five-level pumping model.

Rates are in 1/ns (numerically GHz without the 2 pi). Level labels 1..4 are
the ground eigenstates in ascending energy and 5 is the lowest excited
eigenstate; gamma_ij is the rate of the jump |j> -> |i>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
import scipy.linalg
from scipy.constants import elementary_charge, epsilon_0, hbar, speed_of_light

from .hamiltonians import (
    ID2,
    PAULI_X,
    PAULI_Z,
    FieldVector,
    Manifold,
    SpeciesParams,
    StrainConfig,
    UnavailableParameterError,
    build_static_hamiltonian,
)
from .numerics import TWO_PI, NumericsError, hermitian_eigensystem

REFRACTIVE_INDEX = 2.42
ETA_SNV = 8.67635e-10

OPTICAL_PAIRS = ((1, 5), (2, 5), (3, 5), (4, 5))
PHONON_PAIRS = ((1, 3), (2, 3), (1, 4), (2, 4))


class DegenerateBranchingError(ValueError):
    """A decay branch has an incoming rate but no way out."""


@dataclass(frozen=True)
class RateSet:
    gamma_opt: dict = field(default_factory=dict)
    gamma_phonon: dict = field(default_factory=dict)
    gamma_init: float | None = None

    def __post_init__(self):
        for k, v in {**self.gamma_opt, **self.gamma_phonon}.items():
            if not v >= 0.0:
                raise ValueError(f"rate gamma{k} must be non-negative, got {v}")

    def rate(self, i: int, j: int) -> float:
        key = (i, j)
        if key in self.gamma_opt:
            return self.gamma_opt[key]
        if key in self.gamma_phonon:
            return self.gamma_phonon[key]
        raise KeyError(f"rate gamma{i}{j} not present")

    @property
    def total_optical(self) -> float:
        return sum(self.gamma_opt.get(k, 0.0) for k in OPTICAL_PAIRS)


# -- optical ---------------------------------------------------------------


@dataclass(frozen=True)
class DipoleSet:
    """Relative transition-dipole matrices on (ground, excited) kron 4-level basis."""

    p_x: np.ndarray
    p_y: np.ndarray
    p_z: np.ndarray
    eta: float = ETA_SNV

    def components(self):
        return self.p_x, self.p_y, self.p_z


def dipole_operators(eta: float = ETA_SNV) -> DipoleSet:
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    px = np.kron(swap, np.diag([1.0, 1.0, -1.0, -1.0]))
    py_block = np.zeros((4, 4))
    py_block[0, 2] = py_block[1, 3] = py_block[2, 0] = py_block[3, 1] = -1.0
    py = np.kron(swap, py_block)
    pz = 2.0 * np.kron(swap, np.eye(4))
    return DipoleSet(px, py, pz, eta)


class EightLevel(NamedTuple):
    energies: np.ndarray  # GHz; ground block then excited block, excited offset by the ZPL
    vectors: np.ndarray  # 8x8 block-diagonal eigenvector matrix


def eight_level_eigensystem(
    p: SpeciesParams, s: StrainConfig, b_dc: FieldVector, zpl: float | None = None
) -> EightLevel:
    if zpl is None:
        zpl = p.require_global("zpl_frequency")
    g = hermitian_eigensystem(build_static_hamiltonian(p, Manifold.ground, s, b_dc))
    e = hermitian_eigensystem(build_static_hamiltonian(p, Manifold.excited, s, b_dc))
    vecs = np.zeros((8, 8), dtype=complex)
    vecs[:4, :4] = g.vectors
    vecs[4:, 4:] = e.vectors
    return EightLevel(np.concatenate([g.energies, e.energies + 1e3 * zpl]), vecs)


def _raw_optical(levels: EightLevel, eta: float, zpl: float, freeze_frequency: bool) -> dict:
    dip = dipole_operators(eta)
    v = levels.vectors
    prefactor = REFRACTIVE_INDEX * (elementary_charge * eta) ** 2 / (3.0 * math.pi * epsilon_0 * hbar * speed_of_light ** 3)
    rates = {}
    for i, _ in OPTICAL_PAIRS:
        weight = 0.0
        for comp in dip.components():
            weight += abs(v[:, i - 1].conj() @ comp @ v[:, 4]) ** 2
        # transition frequency in Hz enters cubed (ordinary, not angular)
        nu = 1e12 * zpl if freeze_frequency else 1e9 * (levels.energies[4] - levels.energies[i - 1])
        rates[(i, 5)] = prefactor * nu ** 3 * weight * 1e-9
    return rates


def calibrate_eta(
    p: SpeciesParams,
    zpl_fraction: float | None = None,
    tau_rad: float | None = None,
    zpl: float | None = None,
) -> float:
    """Dipole length scale that makes the zero-field ZPL decay equal zpl_fraction / tau_rad."""
    zpl_fraction = p.require_global("zpl_fraction") if zpl_fraction is None else zpl_fraction
    tau_rad = p.require_global("tau_rad") if tau_rad is None else tau_rad
    zpl = p.require_global("zpl_frequency") if zpl is None else zpl
    levels = eight_level_eigensystem(p, StrainConfig(), FieldVector(0.0), zpl)
    total = sum(_raw_optical(levels, 1.0, zpl, False).values())
    return math.sqrt(zpl_fraction / tau_rad / total)


def radiative_rates(
    p: SpeciesParams,
    s: StrainConfig,
    b_dc: FieldVector,
    zpl: float | None = None,
    eta: float | None = None,
    freeze_frequency: bool = False,
) -> dict:
    """Spontaneous-emission rates gamma_i5 (1/ns) from the lowest excited state.

    ``eta`` falls back to the species value, then to a calibration from its
    radiative lifetime and ZPL fraction; with none of these the species is
    not configured for optics.
    """
    if zpl is None:
        zpl = p.require_global("zpl_frequency")
    if eta is None:
        eta = p.eta
    if eta is None:
        try:
            eta = calibrate_eta(p, zpl=zpl)
        except UnavailableParameterError as exc:
            raise UnavailableParameterError(p.species.value, "species", "eta (or tau_rad and zpl_fraction)") from exc
    return _raw_optical(eight_level_eigensystem(p, s, b_dc, zpl), eta, zpl, freeze_frequency)


# -- phonons ----------------------------------------------------------------


class PhononElements(NamedTuple):
    L_Ex_tilde: np.ndarray
    L_epsxy_tilde: np.ndarray


def phonon_coupling_elements(p: SpeciesParams, s: StrainConfig, b_dc: FieldVector) -> PhononElements:
    """Dynamical-strain operators expressed in the ground eigenbasis."""
    es = hermitian_eigensystem(build_static_hamiltonian(p, Manifold.ground, s, b_dc))
    l_ex = np.kron(PAULI_Z, ID2)
    l_xy = np.kron(PAULI_X, ID2)
    return PhononElements(es.transform(l_ex), es.transform(l_xy))


def phonon_rates(
    elements: PhononElements,
    rho_dos: float | dict | None,
    mode_weights: tuple[float, float] = (1.0, 1.0),
) -> dict:
    """gamma_ij = 2 pi rho sum_modes w |<i|L_mode|j>|^2 for the upper-to-lower branch pairs.

    ``rho_dos`` (ns) is a single density of states or a per-pair mapping.
    """
    if rho_dos is None:
        raise ValueError("a phonon density of states is needed for absolute phonon rates")
    rates = {}
    for i, j in PHONON_PAIRS:
        rho = rho_dos[(i, j)] if isinstance(rho_dos, dict) else rho_dos
        if rho < 0:
            raise ValueError("density of states must be non-negative")
        strength = sum(w * abs(op[i - 1, j - 1]) ** 2 for w, op in zip(mode_weights, elements))
        rates[(i, j)] = TWO_PI * rho * strength
    return rates


# -- initialization rate ---------------------------------------------------


def _branch(incoming: float, to_target: float, to_other: float, label: str) -> float:
    out = to_target + to_other
    if out == 0.0:
        if incoming > 0.0:
            raise DegenerateBranchingError(f"level {label} is fed but has no phonon decay")
        return 0.0
    return incoming * to_target / out


def gamma_init_closed_form(r: RateSet) -> float:
    """Quasi-stationary spin-pumping rate from the mixed state under strong 1<->5 pumping.

    Evaluated as (g25 + g35 g23/(g13+g23) + g45 g24/(g14+g24)) / 2, which is
    algebraically the bracketed form but stays finite when g25 or g23 vanish.
    """
    g = r.rate
    via3 = _branch(g(3, 5), g(2, 3), g(1, 3), "3")
    via4 = _branch(g(4, 5), g(2, 4), g(1, 4), "4")
    return 0.5 * (g(2, 5) + via3 + via4)


def rate_set(
    p: SpeciesParams,
    s: StrainConfig,
    b_dc: FieldVector,
    rho_dos: float | dict,
    zpl: float | None = None,
    eta: float | None = None,
    freeze_frequency: bool = False,
) -> RateSet:
    opt = radiative_rates(p, s, b_dc, zpl, eta, freeze_frequency)
    ph = phonon_rates(phonon_coupling_elements(p, s, b_dc), rho_dos)
    partial = RateSet(opt, ph)
    return RateSet(opt, ph, gamma_init_closed_form(partial))


def readout_branching_ratio(r: RateSet) -> float:
    """gamma_25 / gamma_15: spin-flip leakage per cycle of the 1<->5 readout transition."""
    g15 = r.rate(1, 5)
    return math.inf if g15 == 0.0 else r.rate(2, 5) / g15


# -- master equation ---------------------------------------------------------


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def check(self, herm_tol: float = 1e-10, trace_tol: float = 1e-9, pos_tol: float = 1e-9) -> None:
        rho = self.entries
        if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
            raise ValueError("density matrix not Hermitian")
        if abs(np.trace(rho) - 1.0) > trace_tol:
            raise ValueError("density matrix trace differs from one")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -pos_tol:
            raise ValueError("density matrix has a negative eigenvalue")


def liouvillian(h: np.ndarray, lindblads: Iterable[tuple[float, np.ndarray]]) -> np.ndarray:
    """Superoperator acting on row-major vec(rho); H in GHz, rates in 1/ns."""
    d = h.shape[0]
    eye = np.eye(d)
    sup = -1j * TWO_PI * (np.kron(h, eye) - np.kron(eye, h.T))
    for rate, jump in lindblads:
        if rate < 0:
            raise ValueError("Lindblad rates must be non-negative")
        if rate == 0.0:
            continue
        jj = jump.conj().T @ jump
        sup += rate * (np.kron(jump, jump.conj()) - 0.5 * np.kron(jj, eye) - 0.5 * np.kron(eye, jj.T))
    return sup


def evolve_master(
    rho0: DensityMatrix | np.ndarray,
    h: np.ndarray,
    lindblads: Iterable[tuple[float, np.ndarray]],
    times: float | Iterable[float],
    trace_limit: float = 1e-7,
) -> np.ndarray:
    """rho(t) for a time-independent Lindblad generator, by exact exponentiation.

    Returns an array of shape (len(times), d, d), or (d, d) for a scalar time.
    """
    rho = rho0.entries if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    d = rho.shape[0]
    sup = liouvillian(np.asarray(h, dtype=complex), list(lindblads))
    scalar = np.ndim(times) == 0
    ts = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(ts < 0):
        raise ValueError("times must be non-negative")
    out = np.empty((len(ts), d, d), dtype=complex)
    vec = rho.reshape(-1)
    for k, t in enumerate(ts):
        r = (scipy.linalg.expm(sup * t) @ vec).reshape(d, d)
        drift = abs(np.trace(r) - 1.0)
        if drift > trace_limit:
            raise NumericsError(f"trace drifted by {drift:.2e} at t={t}")
        out[k] = r
    return out[0] if scalar else out


def projector(d: int, i: int, j: int) -> np.ndarray:
    """|i><j| on d levels, 1-indexed."""
    m = np.zeros((d, d), dtype=complex)
    m[i - 1, j - 1] = 1.0
    return m


def five_level_model(rates: RateSet, ground_energies: np.ndarray, omega_l: float):
    """H_RWA (GHz) and jump list for resonant pumping of 1<->5 at coupling ``omega_l`` (GHz)."""
    e = np.asarray(ground_energies, dtype=float)
    h = np.diag(np.array([0.0, e[1] - e[0], e[2] - e[0], e[3] - e[0], 0.0], dtype=complex))
    h[0, 4] = h[4, 0] = omega_l
    jumps = [(rates.rate(i, j), projector(5, i, j)) for i, j in OPTICAL_PAIRS + PHONON_PAIRS]
    return h, jumps


MIXED_START = np.diag([0.5, 0.5, 0.0, 0.0, 0.0]).astype(complex)


class InitializationTrace(NamedTuple):
    gamma_closed: float
    gamma_fit: float
    times: np.ndarray
    rho11: np.ndarray
    rho22: np.ndarray


def fit_decay_rate(times: np.ndarray, values: np.ndarray) -> float:
    """Least-squares slope of -log(values): the rate of a pure exponential tail."""
    slope, _ = np.polyfit(times, np.log(values), 1)
    return float(-slope)


def simulate_initialization(
    p: SpeciesParams,
    s: StrainConfig,
    b_dc: FieldVector,
    rho_dos: float,
    pump_ratio: float = 10.0,
    n_times: int = 60,
) -> InitializationTrace:
    """Five-level Lindblad run from the mixed ground state, with a fitted pumping rate.

    The pump coupling is set so 2 pi omega_L = pump_ratio * total optical
    decay. The fit uses the tail after the fast optical and phonon
    transients, over about three initialization times.
    """
    rates = rate_set(p, s, b_dc, rho_dos)
    g_closed = rates.gamma_init
    if not g_closed > 0.0:
        raise ValueError("closed-form initialization rate vanishes; nothing to fit")
    total = rates.total_optical
    omega_l = pump_ratio * total / TWO_PI
    e = hermitian_eigensystem(build_static_hamiltonian(p, Manifold.ground, s, b_dc)).energies
    h, jumps = five_level_model(rates, e, omega_l)
    fast = min([total] + [v for v in rates.gamma_phonon.values() if v > 0.0])
    t0 = 10.0 / fast
    times = np.linspace(t0, t0 + 3.0 / g_closed, n_times)
    traj = evolve_master(MIXED_START, h, jumps, times)
    rho11 = traj[:, 0, 0].real
    rho22 = traj[:, 1, 1].real
    return InitializationTrace(g_closed, fit_decay_rate(times, rho11), times, rho11, rho22)


class InitializationRow(NamedTuple):
    Ex: float
    theta_dc: float
    gamma_init: float


def initialization_sweep(
    p: SpeciesParams,
    strains: Iterable[float],
    thetas: Iterable[float],
    b_dc: float,
    rho_dos: float,
    phi: float = 0.0,
) -> list[InitializationRow]:
    """gamma_init (1/ns) on an (Ex, theta_dc) grid at fixed field magnitude."""
    strains, thetas = list(strains), list(thetas)
    if not strains or not thetas:
        raise ValueError("grids must be non-empty")
    rows = []
    for ex in strains:
        for th in thetas:
            r = rate_set(p, StrainConfig(Ex=float(ex)), FieldVector(b_dc, float(th), phi), rho_dos)
            rows.append(InitializationRow(float(ex), float(th), r.gamma_init))
    return rows


# -- addressability ----------------------------------------------------------


class Addressability(NamedTuple):
    passes: bool
    margin: float  # GHz, delta - threshold
    delta: float  # |delta_e - delta_g|, GHz
    delta_g: float
    delta_e: float
    threshold: float


def addressability_check(
    p: SpeciesParams, s: StrainConfig, b_dc: FieldVector, linewidth: float = 0.0
) -> Addressability:
    """Compare the ground/excited splitting mismatch with max(1/tau_rad, linewidth)."""
    eg = hermitian_eigensystem(build_static_hamiltonian(p, Manifold.ground, s, b_dc)).energies
    ee = hermitian_eigensystem(build_static_hamiltonian(p, Manifold.excited, s, b_dc)).energies
    dg, de = float(eg[1] - eg[0]), float(ee[1] - ee[0])
    delta = abs(de - dg)
    gamma = 1.0 / p.tau_rad if p.tau_rad else 0.0
    threshold = max(gamma, linewidth)
    return Addressability(delta > threshold, delta - threshold, delta, dg, de, threshold)
