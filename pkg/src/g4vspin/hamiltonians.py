"""Species parameters and static Hamiltonians of the ground/excited manifolds.

Basis order for every 4x4 operator: |e_x up>, |e_x down>, |e_y up>, |e_y down>,
i.e. (orbital) kron (spin). All energies are ordinary frequencies in GHz.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.constants import physical_constants

from .numerics import hermitian_eigensystem

# mu_B / h in GHz/T
GAMMA_S = physical_constants["Bohr magneton in Hz/T"][0] * 1e-9
GAMMA_L = GAMMA_S

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)

STRAIN_LIMIT = 1e-2


class UnavailableParameterError(ValueError):
    def __init__(self, species: str, manifold: str, name: str):
        super().__init__(f"{species} {manifold}-state parameter '{name}' is not available; supply it explicitly")
        self.species = species
        self.manifold = manifold
        self.name = name


class Species(str, enum.Enum):
    SiV = "SiV"
    GeV = "GeV"
    SnV = "SnV"
    PbV = "PbV"


class Manifold(str, enum.Enum):
    ground = "ground"
    excited = "excited"


@dataclass(frozen=True)
class ManifoldParams:
    """One row of the parameter table. ``None`` marks an unavailable entry.

    lam is the spin-orbit constant (half the tabulated 2*lambda), upsilon_x/y
    the Jahn-Teller constants (GHz), f the orbital Zeeman quenching factor and
    d the strain susceptibility in GHz per unit strain.
    """

    lam: float
    upsilon_x: float | None = None
    upsilon_y: float | None = None
    f: float | None = None
    d: float | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("spin-orbit constant must be positive")
        if self.f is not None and not 0.0 <= self.f <= 1.0:
            raise ValueError("quenching factor f must lie in [0, 1]")
        if self.d is not None and self.d < 0:
            raise ValueError("strain susceptibility d must be non-negative")


@dataclass(frozen=True)
class SpeciesParams:
    species: Species
    ground: ManifoldParams
    excited: ManifoldParams
    tau_rad: float | None = None  # ns
    zpl_fraction: float | None = None
    zpl_frequency: float | None = None  # THz, not from the parameter table
    eta: float | None = None  # dipole length scale (m)
    provenance: dict = field(default_factory=dict, compare=False, hash=False)

    def manifold(self, m: Manifold | str) -> ManifoldParams:
        return self.ground if Manifold(m) is Manifold.ground else self.excited

    def require(self, m: Manifold | str, name: str) -> float:
        value = getattr(self.manifold(m), name)
        if value is None:
            raise UnavailableParameterError(self.species.value, Manifold(m).value, name)
        return value

    def require_global(self, name: str) -> float:
        value = getattr(self, name)
        if value is None:
            raise UnavailableParameterError(self.species.value, "species", name)
        return value

    def with_manifold(self, m: Manifold | str, **changes) -> "SpeciesParams":
        key = Manifold(m).value
        return replace(self, **{key: replace(self.manifold(m), **changes)})


def _row(two_lambda, ux=None, uy=None, f=None, d_phz=None):
    return ManifoldParams(
        lam=two_lambda / 2.0,
        upsilon_x=ux,
        upsilon_y=uy,
        f=f,
        d=None if d_phz is None else d_phz * 1e6,
    )


# ZPL frequencies are literature wavelengths (737, 602, 619, 520 nm), not
# part of the parameter table; they only enter omega^3 in radiative rates.
_EXTERNAL = {"zpl_frequency": "external: ZPL wavelength literature value"}

SPECIES_TABLE: dict[Species, SpeciesParams] = {
    Species.SiV: SpeciesParams(
        Species.SiV,
        _row(49, 2, 3, 0.10, 1.3),
        _row(257, 12, 16, 0.10, 1.8),
        tau_rad=1.7,
        zpl_frequency=406.7,
        provenance=_EXTERNAL,
    ),
    Species.GeV: SpeciesParams(
        Species.GeV, _row(207), _row(989), zpl_frequency=497.0, provenance=_EXTERNAL
    ),
    Species.SnV: SpeciesParams(
        Species.SnV,
        _row(815, 65, 0, 0.15, 0.787),
        _row(2355, 855, 0, 0.15, 0.956),
        tau_rad=4.5,
        zpl_fraction=0.6,
        zpl_frequency=484.3,
        eta=8.67635e-10,
        provenance=_EXTERNAL,
    ),
    Species.PbV: SpeciesParams(
        Species.PbV, _row(4385), _row(6920), zpl_frequency=576.5, provenance=_EXTERNAL
    ),
}


def species_table() -> list[SpeciesParams]:
    return [SPECIES_TABLE[s] for s in Species]


def get_species(name: Species | str) -> SpeciesParams:
    return SPECIES_TABLE[Species(name)]


@dataclass(frozen=True)
class StrainConfig:
    """External strain: Ex = eps_xx - eps_yy and eps_xy (dimensionless)."""

    Ex: float = 0.0
    eps_xy: float = 0.0
    limit: float = STRAIN_LIMIT

    def __post_init__(self):
        if max(abs(self.Ex), abs(self.eps_xy)) > self.limit:
            raise ValueError(f"strain component exceeds sanity bound {self.limit}")


ZERO_STRAIN = StrainConfig()


@dataclass(frozen=True)
class FieldVector:
    """Magnetic field: magnitude (T), polar angle theta from the symmetry axis, azimuth phi."""

    magnitude: float
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("field magnitude must be non-negative")
        if not 0.0 <= self.theta <= np.pi + 1e-12:
            raise ValueError("theta must lie in [0, pi]")

    @property
    def cartesian(self) -> np.ndarray:
        st = np.sin(self.theta)
        return self.magnitude * np.array([np.cos(self.phi) * st, np.sin(self.phi) * st, np.cos(self.theta)])

    def scaled(self, magnitude: float) -> "FieldVector":
        return replace(self, magnitude=magnitude)


ZERO_FIELD = FieldVector(0.0)


def spin_orbit(lam: float) -> np.ndarray:
    return np.kron(lam * PAULI_Y, PAULI_Z)


def orbital_doublet(ax: float, ay: float) -> np.ndarray:
    """[[ax, ay], [ay, -ax]] kron 1, the common form of Jahn-Teller and strain terms."""
    return np.kron(ax * PAULI_Z + ay * PAULI_X, ID2)


def jahn_teller(upsilon_x: float, upsilon_y: float) -> np.ndarray:
    return orbital_doublet(upsilon_x, upsilon_y)


def strain_term(d: float, s: StrainConfig) -> np.ndarray:
    return orbital_doublet(d * s.Ex, 2.0 * d * s.eps_xy)


def zeeman(f: float, b: np.ndarray | FieldVector) -> np.ndarray:
    """Orbital (quenched by f) plus spin Zeeman coupling; linear in the field."""
    bx, by, bz = b.cartesian if isinstance(b, FieldVector) else np.asarray(b, dtype=float)
    orbital = f * GAMMA_L * bz * np.kron(-PAULI_Y, ID2)
    spin = GAMMA_S * np.kron(ID2, bx * PAULI_X + by * PAULI_Y + bz * PAULI_Z)
    return orbital + spin


def build_static_hamiltonian(
    p: SpeciesParams,
    m: Manifold | str = Manifold.ground,
    s: StrainConfig = ZERO_STRAIN,
    b_dc: FieldVector = ZERO_FIELD,
) -> np.ndarray:
    """H_SO + H_JT + H_strain + H_B for one manifold (4x4, GHz)."""
    lam = p.require(m, "lam")
    ux = p.require(m, "upsilon_x")
    uy = p.require(m, "upsilon_y")
    h = spin_orbit(lam) + jahn_teller(ux, uy)
    if s.Ex or s.eps_xy:
        h = h + strain_term(p.require(m, "d"), s)
    if b_dc.magnitude:
        h = h + zeeman(p.require(m, "f"), b_dc)
    return h


def build_eight_level(
    p: SpeciesParams,
    s: StrainConfig = ZERO_STRAIN,
    b_dc: FieldVector = ZERO_FIELD,
    zpl: float | None = None,
) -> np.ndarray:
    """Block-diagonal ground (+) excited Hamiltonian; excited block offset by zpl (THz)."""
    if zpl is None:
        zpl = p.require_global("zpl_frequency")
    h = np.zeros((8, 8), dtype=complex)
    h[:4, :4] = build_static_hamiltonian(p, Manifold.ground, s, b_dc)
    h[4:, 4:] = build_static_hamiltonian(p, Manifold.excited, s, b_dc) + 1e3 * zpl * np.eye(4)
    return h


class Splittings(NamedTuple):
    delta_g: float
    branch_gap: float
    delta_e: float | None = None
    energies: np.ndarray | None = None


def numeric_splittings(h: np.ndarray) -> Splittings:
    """Lowest spin splitting and orbital branch gap of each 4x4 block."""
    h = np.asarray(h)
    if h.shape == (4, 4):
        e = hermitian_eigensystem(h).energies
        return Splittings(e[1] - e[0], e[2] - e[1], None, e)
    if h.shape == (8, 8):
        eg = hermitian_eigensystem(h[:4, :4]).energies
        ee = hermitian_eigensystem(h[4:, 4:]).energies
        return Splittings(eg[1] - eg[0], eg[2] - eg[1], ee[1] - ee[0], np.concatenate([eg, ee]))
    raise ValueError(f"expected a 4x4 or 8x8 Hamiltonian, got {h.shape}")
