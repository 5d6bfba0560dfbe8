"""Driven ground-manifold gates: exact propagation, RWA reference, fidelity, tuning.

The drive adds the Zeeman coupling of b(t) B_ac cos(2 pi w t + phase) to the
static four-level Hamiltonian. Propagation runs in the eigenbasis of the
static part, in the interaction picture of its energies, which removes the
fast orbital phases from the step-size control. The lab-frame Hamiltonian is
periodic in the carrier period, so a flat pulse needs only one period
integrated numerically; whole periods are matrix powers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.optimize import brentq, curve_fit

from .effective import EffectiveQubit
from .hamiltonians import (
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    FieldVector,
    SpeciesParams,
    StrainConfig,
    build_static_hamiltonian,
    zeeman,
)
from .numerics import TWO_PI, NumericsError, bloch_nodes, hermitian_eigensystem, integrate

DEFAULT_TOL = 1e-10
ENVELOPES = ("rect", "cosine_ramp")

ID2 = np.eye(2, dtype=complex)
X_GATE = np.array([[0, -1j], [-1j, 0]])  # exp(-i pi sigma_x / 2)
SQRT_X_GATE = (ID2 - 1j * PAULI_X) / math.sqrt(2.0)  # exp(-i pi sigma_x / 4)
TARGETS = {"pi": X_GATE, "pi_half": SQRT_X_GATE}
# Fraction of a full Rabi cycle covered by each target rotation.
TARGET_CYCLES = {"pi": 0.5, "pi_half": 0.25}


class BracketError(NumericsError):
    """The duration search has no interior minimum to converge to."""


@dataclass(frozen=True)
class DriveSpec:
    """Microwave pulse f(t) B_ac cos(2 pi carrier t + phase) lasting ``duration`` ns.

    ``carrier`` is in GHz; None means the numeric qubit splitting. For the
    cosine_ramp envelope, ``ramp_fraction`` of the duration is spent rising
    as sin^2 at each end.
    """

    b_ac: FieldVector
    duration: float
    carrier: float | None = None
    phase: float = 0.0
    envelope: str = "rect"
    ramp_fraction: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.carrier is not None and not self.carrier > 0:
            raise ValueError("carrier must be positive")
        if self.envelope not in ENVELOPES:
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if not 0.0 <= self.ramp_fraction <= 0.5:
            raise ValueError("ramp_fraction must lie in [0, 0.5]")

    @property
    def ramp(self) -> float:
        return self.ramp_fraction * self.duration if self.envelope == "cosine_ramp" else 0.0


@dataclass(frozen=True)
class GateResult:
    """Gate in the carrier frame.

    unitary_4 is the full propagator in the static eigenbasis, with the qubit
    pair in the frame rotating at the carrier and the upper levels in their
    own energy frame; qubit_2 is its upper-left block. ``infidelity`` is NaN
    when no target was given.
    """

    unitary_4: np.ndarray
    qubit_2: np.ndarray
    leakage: float
    infidelity: float
    carrier: float
    duration: float


@dataclass(frozen=True)
class DrivenModel:
    """Static energies (GHz) and the drive coupling in their eigenbasis.

    The phase of the second eigenvector is chosen so coupling[0, 1] is real
    and non-negative; the resonant drive then rotates about +x.
    """

    energies: np.ndarray
    coupling: np.ndarray

    @property
    def delta_g(self) -> float:
        return float(self.energies[1] - self.energies[0])

    @property
    def rabi(self) -> float:
        """Resonant RWA population-oscillation rate |V_01| in GHz."""
        return float(abs(self.coupling[0, 1]))

    def scaled(self, factor: float) -> "DrivenModel":
        return replace(self, coupling=self.coupling * factor)


def driven_model(p: SpeciesParams, s: StrainConfig, b_dc: FieldVector, b_ac: FieldVector) -> DrivenModel:
    es = hermitian_eigensystem(build_static_hamiltonian(p, "ground", s, b_dc))
    vecs = np.array(es.vectors)
    coupling = vecs.conj().T @ zeeman(p.require("ground", "f"), b_ac) @ vecs
    v01 = coupling[0, 1]
    if abs(v01) > 0.0:
        vecs[:, 1] *= (v01 / abs(v01)).conjugate()
        coupling = vecs.conj().T @ zeeman(p.require("ground", "f"), b_ac) @ vecs
    return DrivenModel(np.array(es.energies), 0.5 * (coupling + coupling.conj().T))


def _envelope(drive_ramp: float, duration: float):
    if drive_ramp <= 0.0:
        return None

    def b(t):
        if t < drive_ramp:
            return math.sin(0.5 * math.pi * t / drive_ramp) ** 2
        if t > duration - drive_ramp:
            return math.sin(0.5 * math.pi * (duration - t) / drive_ramp) ** 2
        return 1.0

    return b


class _Segment:
    """Interaction-picture propagation with checkpoints from a fixed start time."""

    def __init__(self, model: DrivenModel, carrier: float, phase: float, envelope=None, tol: float = DEFAULT_TOL):
        self.model = model
        self.carrier = carrier
        self.phase = phase
        self.envelope = envelope
        self.tol = tol
        self._gap = model.energies[:, None] - model.energies[None, :]
        self._checkpoints: list[tuple[float, np.ndarray]] = []

    def rhs(self, t, y):
        amp = math.cos(TWO_PI * self.carrier * t + self.phase)
        if self.envelope is not None:
            amp *= self.envelope(t)
        h = self.model.coupling * (amp * np.exp(1j * TWO_PI * self._gap * t))
        return -1j * TWO_PI * (h @ y)

    def interaction(self, t0: float, t1: float) -> np.ndarray:
        """U_I(t1, t0), reusing the nearest stored checkpoint at or after t0."""
        start, u0 = t0, np.eye(4, dtype=complex)
        cps = self._checkpoints
        if cps and cps[0][0] == t0 and t1 >= t0:
            idx = int(np.searchsorted([c[0] for c in cps], t1, side="right")) - 1
            start, u0 = cps[idx]
            record = None
        else:
            record = self._checkpoints if not cps else None
        return integrate(self.rhs, u0, start, t1, tol=self.tol, record=record)

    def lab(self, t0: float, t1: float) -> np.ndarray:
        e = self.model.energies
        ui = self.interaction(t0, t1)
        return np.exp(-1j * TWO_PI * e * t1)[:, None] * ui * np.exp(1j * TWO_PI * e * t0)[None, :]


class _Periodic:
    """Flat-top propagation from ``start``: one integrated period, then powers."""

    def __init__(self, model: DrivenModel, carrier: float, phase: float, start: float = 0.0, tol: float = DEFAULT_TOL):
        self.seg = _Segment(model, carrier, phase, None, tol)
        self.start = start
        self.period = 1.0 / carrier
        self.one_period = self.seg.lab(start, start + self.period)
        self._powers: dict[int, np.ndarray] = {}

    def lab(self, duration: float) -> np.ndarray:
        n = int(math.floor(duration / self.period))
        rem = duration - n * self.period
        if n not in self._powers:
            self._powers[n] = np.linalg.matrix_power(self.one_period, n)
        return self.seg.lab(self.start, self.start + rem) @ self._powers[n]


def rotating_frame(model: DrivenModel, carrier: float, t: float) -> np.ndarray:
    """Diagonal of the frame change taking lab amplitudes to the carrier frame."""
    e = model.energies
    mid = 0.5 * (e[0] + e[1])
    k = np.array([mid - 0.5 * carrier, mid + 0.5 * carrier, e[2], e[3]])
    return np.exp(1j * TWO_PI * k * t)


def _result(model, carrier, duration, u_lab, target) -> GateResult:
    _check_unitary(u_lab)
    # drop the integrator's norm drift (~tol) so small infidelities stay resolvable
    left, _, right = np.linalg.svd(u_lab)
    u_lab = left @ right
    u4 = rotating_frame(model, carrier, duration)[:, None] * u_lab
    q = u4[:2, :2]
    # population leaving the qubit block; summed directly so tiny values survive
    leak = min(1.0, max(0.0, 0.5 * float(np.sum(np.abs(u4[2:, :2]) ** 2))))
    inf = math.nan if target is None else 1.0 - average_fidelity(q, target)
    return GateResult(u4, q, leak, inf, carrier, duration)


def _check_unitary(u: np.ndarray, tol: float = 1e-8) -> None:
    dev = float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))
    if dev > tol:
        raise NumericsError(f"propagator lost unitarity ({dev:.2e})")


def propagate_drive(model: DrivenModel, drive: DriveSpec, t0: float, t1: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Lab-frame propagator U(t1, t0) for any sub-interval of the pulse."""
    carrier = model.delta_g if drive.carrier is None else drive.carrier
    seg = _Segment(model, carrier, drive.phase, _envelope(drive.ramp, drive.duration), tol)
    return seg.lab(t0, t1)


def simulate_gate(
    p: SpeciesParams,
    s: StrainConfig,
    b_dc: FieldVector,
    drive: DriveSpec,
    target: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    model: DrivenModel | None = None,
) -> GateResult:
    """Integrate the driven four-level ground manifold over one pulse."""
    if model is None:
        model = driven_model(p, s, b_dc, drive.b_ac)
    carrier = model.delta_g if drive.carrier is None else drive.carrier
    if drive.ramp > 0.0:
        env = _envelope(drive.ramp, drive.duration)
        up = _Segment(model, carrier, drive.phase, env, tol)
        u = up.lab(0.0, drive.ramp)
        flat = drive.duration - 2.0 * drive.ramp
        if flat > 0.0:
            u = _Periodic(model, carrier, drive.phase, drive.ramp, tol).lab(flat) @ u
        down = _Segment(model, carrier, drive.phase, env, tol)
        u = down.lab(drive.duration - drive.ramp, drive.duration) @ u
    else:
        u = _Periodic(model, carrier, drive.phase, 0.0, tol).lab(drive.duration)
    return _result(model, carrier, drive.duration, u, target)


def rabi_trace(model: DrivenModel, carrier: float, times: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Population moved from the lower to the upper qubit state by a flat pulse of each length."""
    per = _Periodic(model, carrier, 0.0, 0.0, tol)
    return np.array([abs(per.lab(float(t))[1, 0]) ** 2 for t in times])


def fit_rabi(times: np.ndarray, populations: np.ndarray, guess: float) -> float:
    """Population-oscillation rate (GHz) from a sin^2(pi rabi t) fit."""
    (rate,), _ = curve_fit(
        lambda t, r: np.sin(math.pi * r * t) ** 2, np.asarray(times), np.asarray(populations), p0=[guess]
    )
    return abs(float(rate))


def rwa_gate(eq: EffectiveQubit, theta: float, axis_phase: float) -> np.ndarray:
    """exp(i theta n.sigma) with n = (cos axis_phase, sin axis_phase, 0)."""
    n_sigma = math.cos(axis_phase) * PAULI_X + math.sin(axis_phase) * PAULI_Y
    return math.cos(theta) * ID2 + 1j * math.sin(theta) * n_sigma


def rwa_angle(eq: EffectiveQubit, duration: float) -> float:
    """theta accumulated by a resonant flat pulse: pi * Rabi * duration."""
    return math.pi * eq.rabi * 1e-3 * duration


def rotation(axis: str, angle: float) -> np.ndarray:
    """R_a(angle) = exp(-i angle sigma_a / 2)."""
    sig = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}[axis]
    return math.cos(angle / 2) * ID2 - 1j * math.sin(angle / 2) * sig


def _phase_residual(v: np.ndarray, r: np.ndarray) -> float:
    ov = np.trace(r.conj().T @ v)
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.max(np.abs(v - ph * r)))


def _wrap(a: float) -> float:
    # into (-pi, pi]
    a = math.remainder(a, TWO_PI)
    return math.pi if a == -math.pi else a


def su2_decompose(v: np.ndarray, tol: float = 1e-10) -> tuple[float, float, float]:
    """Angles with R_x(alpha) R_y(beta) R_x(gamma) = v up to a global phase.

    beta lies in [0, pi]; alpha and gamma are returned in (-pi, pi].
    """
    v = np.asarray(v, dtype=complex)
    if v.shape != (2, 2) or np.max(np.abs(v.conj().T @ v - ID2)) > tol:
        raise ValueError("input is not a 2x2 unitary")
    # H v H turns the x-y-x product into R_z(alpha) R_y(-beta) R_z(gamma)
    had = np.array([[1, 1], [1, -1]]) / math.sqrt(2.0)
    w = had @ v @ had
    beta = 2.0 * math.atan2(abs(w[1, 0]), abs(w[0, 0]))
    tiny = 1e-12
    total = float(np.angle(w[1, 1] * w[0, 0].conjugate()))  # alpha + gamma
    diff = float(np.angle(-w[1, 0] * w[0, 1].conjugate()))  # alpha - gamma
    if abs(w[1, 0]) <= tiny:
        cands = [(total, 0.0)]
    elif abs(w[0, 0]) <= tiny:
        cands = [(diff, 0.0)]
    else:
        a, g = 0.5 * (total + diff), 0.5 * (total - diff)
        cands = [(a, g), (a + math.pi, g + math.pi)]
    best = None
    for a, g in cands:
        a, g = _wrap(a), _wrap(g)
        r = rotation("x", a) @ rotation("y", beta) @ rotation("x", g)
        res = _phase_residual(v, r)
        if best is None or res < best[0]:
            best = (res, a, g)
    res, a, g = best
    if res > tol:
        raise NumericsError(f"decomposition residual {res:.2e} exceeds {tol:.0e}")
    return a, beta, g


def average_fidelity(
    u_qubit: np.ndarray,
    v: np.ndarray,
    leakage_map: np.ndarray | None = None,
    n_theta: int = 32,
    n_phi: int = 64,
) -> float:
    """Bloch-sphere average of |<psi| v^H u |psi>|^2.

    ``u_qubit`` may be a non-unitary projection of a larger propagator, in
    which case leaked population lowers the result. Passing the full 4x4
    propagator as ``leakage_map`` uses its qubit block instead.
    """
    u = np.asarray(leakage_map if leakage_map is not None else u_qubit, dtype=complex)[:2, :2]
    v = np.asarray(v, dtype=complex)
    m = v.conj().T @ u

    def quad(nt, nph):
        th, ph, w = bloch_nodes(nt, nph)
        psi = np.stack([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)], axis=1)
        amp = np.einsum("ni,ij,nj->n", psi.conj(), m, psi)
        return float(np.sum(w * np.abs(amp) ** 2))

    f = quad(n_theta, n_phi)
    if abs(f - quad(max(8, n_theta // 2), max(8, n_phi // 2))) > 1e-12:
        raise NumericsError("Bloch quadrature not converged")
    return min(1.0, max(0.0, f))


class Resonance(NamedTuple):
    """Drive-dressed qubit resonance at one B_ac magnitude."""

    carrier: float  # GHz
    rabi_half: float  # |off-diagonal| of the Floquet Hamiltonian, GHz
    b_ac: float  # T


def floquet_hamiltonian(model: DrivenModel, carrier: float, phase: float = 0.0, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Effective 2x2 Hamiltonian (GHz, traceless) of one carrier period in the carrier frame."""
    per = _Periodic(model, carrier, phase, 0.0, tol)
    f = (rotating_frame(model, carrier, per.period)[:, None] * per.one_period)[:2, :2]
    f = f / np.sqrt(np.linalg.det(f))
    return 1j * scipy.linalg.logm(f) / (TWO_PI * per.period)


def dressed_resonance(model: DrivenModel, b_ac: float, tol: float = DEFAULT_TOL) -> Resonance:
    """Carrier at which the one-period Floquet Hamiltonian has no sigma_z part.

    This folds the Bloch-Siegert and off-resonant-level shifts into the
    carrier, which bare resonance leaves as a detuning of order rabi^2 / delta_g.
    """
    if model.rabi == 0.0:
        raise BracketError("drive does not couple the qubit states")
    dg = model.delta_g
    shift = (0.5 * model.rabi) ** 2 / dg

    def hz(d):
        return float(floquet_hamiltonian(model, dg + d, tol=tol)[0, 0].real)

    lo, hi = -4.0 * shift, 2.0 * shift
    f_lo, f_hi = hz(lo), hz(hi)
    for _ in range(8):
        if f_lo * f_hi < 0:
            break
        lo, hi = 2 * lo, 2 * hi
        f_lo, f_hi = hz(lo), hz(hi)
    else:
        raise BracketError("dressed resonance not bracketed")
    d0 = brentq(hz, lo, hi, xtol=1e-13, rtol=1e-12)
    h = floquet_hamiltonian(model, dg + d0, tol=tol)
    return Resonance(dg + d0, float(abs(h[0, 1])), b_ac)


def golden_section(f, a: float, b: float, xtol: float = 1e-3, max_iter: int = 200) -> tuple[float, float]:
    """Minimum of a unimodal f on [a, b] to absolute tolerance ``xtol``."""
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= xtol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


@dataclass(frozen=True)
class GateOptimum:
    b_ac: FieldVector
    duration: float  # ns
    infidelity: float
    carrier: float  # GHz
    gate: GateResult = field(repr=False)


def optimize_gate_time(
    p: SpeciesParams,
    s: StrainConfig,
    b_dc: FieldVector,
    target: str,
    b_ac: FieldVector,
    b_ac_range: tuple[float, float] | None = None,
    n_candidates: int = 1,
    tol: float = DEFAULT_TOL,
    resonance: Resonance | None = None,
) -> GateOptimum:
    """Tune B_ac magnitude and duration of a flat pulse for the 'pi' or 'pi_half' target.

    ``b_ac`` fixes the direction and the reference magnitude; ``b_ac_range``
    bounds the magnitude (default +-10 %). The carrier sits on the dressed
    resonance. Candidate magnitudes are those whose area-matched duration
    spans a half-integer number of carrier periods, where the switch-on and
    switch-off counter-rotating kicks cancel; the ``n_candidates`` closest to
    the reference are kept (by default only the nearest, so B_ac moves as
    little as possible). For each, the duration is refined by golden
    section (1e-3 ns) over a quarter carrier period on either side.
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {sorted(TARGETS)}")
    if b_ac.magnitude == 0.0:
        raise BracketError("zero drive: infidelity does not depend on duration")
    lo, hi = b_ac_range if b_ac_range is not None else (0.9 * b_ac.magnitude, 1.1 * b_ac.magnitude)
    if not 0.0 < lo <= hi:
        raise ValueError("b_ac_range must satisfy 0 < lo <= hi")
    b_ref = min(max(b_ac.magnitude, lo), hi)
    model = driven_model(p, s, b_dc, b_ac.scaled(b_ref))
    if model.rabi == 0.0:
        raise BracketError("drive does not couple the qubit states: flat infidelity landscape")
    if resonance is None or resonance.b_ac != b_ref:
        resonance = dressed_resonance(model, b_ref, tol)
    vt = TARGETS[target]
    shift = resonance.carrier - model.delta_g
    cycles = TARGET_CYCLES[target]

    def carrier_at(x):
        return model.delta_g + shift * x * x

    def turns(x):
        # carrier periods in the area-matched pulse at scale x
        return carrier_at(x) * cycles / (2.0 * resonance.rabi_half * x)

    x_lo, x_hi = lo / b_ref, hi / b_ref
    n_hi, n_lo = turns(x_lo), turns(x_hi)
    ks = [k for k in range(math.ceil(n_lo - 0.5), math.floor(n_hi - 0.5) + 1)]
    scales = [brentq(lambda x: turns(x) - (k + 0.5), x_lo, x_hi, xtol=1e-14) for k in ks]
    scales = sorted(scales, key=lambda x: (abs(x - 1.0), x))[:n_candidates] or [1.0]

    best = None
    for x in scales:
        m = model.scaled(x)
        w = carrier_at(x)
        per = _Periodic(m, w, 0.0, 0.0, tol)
        t_c = cycles / (2.0 * resonance.rabi_half * x)
        cache = {}

        def infid(t):
            u = per.lab(t)
            res = _result(m, w, t, u, vt)
            cache[t] = res
            return res.infidelity

        a, b = max(t_c - 0.25 / w, 1e-9), t_c + 0.25 / w
        t_opt, f_opt = golden_section(infid, a, b, xtol=1e-3)
        if best is None or f_opt < best.infidelity:
            res = cache[t_opt]
            best = GateOptimum(b_ac.scaled(b_ref * x), t_opt, f_opt, w, res)
    return best
