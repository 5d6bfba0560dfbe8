"""Small dense linear algebra and ODE kernel.

Everything here works on matrices of dimension <= 16. Energies are in GHz
and times in ns; the factor 2*pi is applied only inside the propagators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

TWO_PI = 2.0 * np.pi
MAX_DIM = 16
HERMITIAN_RTOL = 1e-12
DEGENERACY_TOL = 1e-9


class NumericsError(RuntimeError):
    pass


class NonHermitianError(ValueError):
    def __init__(self, asymmetry: float):
        super().__init__(f"matrix is not Hermitian: max |A - A^H| = {asymmetry:.3e}")
        self.asymmetry = asymmetry


class ConvergenceError(NumericsError):
    pass


class StepUnderflowError(NumericsError):
    def __init__(self, t: float, h: float):
        super().__init__(f"step size underflow (h={h:.3e}) at t={t!r}")
        self.t = t
        self.h = h


@dataclass(frozen=True)
class EigenSystem:
    """Ascending energies and orthonormal eigenvectors (columns)."""

    energies: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        self.energies.setflags(write=False)
        self.vectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.energies)

    def transform(self, op: np.ndarray) -> np.ndarray:
        """Express ``op`` in the eigenbasis, V^H op V."""
        return self.vectors.conj().T @ op @ self.vectors


def _check_dim(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not 1 <= a.shape[0] <= MAX_DIM:
        raise ValueError(f"dimension {a.shape[0]} outside 1..{MAX_DIM}")


def hermitian_asymmetry(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def check_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> None:
    asym = hermitian_asymmetry(a)
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if asym > rtol * max(scale, np.finfo(float).tiny):
        raise NonHermitianError(asym)


def fix_phase(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate the global phase so the largest entry is real and non-negative.

    Ties within ``tol`` of the largest magnitude go to the lowest index.
    """
    mags = np.abs(v)
    k = int(np.argmax(mags >= mags.max() - tol))
    if mags[k] == 0.0:
        return v
    return v * (abs(v[k]) / v[k])


def _canonical_block(q: np.ndarray) -> np.ndarray:
    # Basis-independent basis for span(q): Gram-Schmidt on the projected unit
    # vectors, taken in index order.
    n, k = q.shape
    proj = q @ q.conj().T
    out = []
    for i in range(n):
        w = proj[:, i].copy()
        for u in out:
            w -= u * (u.conj() @ w)
        norm = np.linalg.norm(w)
        if norm > 1e-6:
            out.append(w / norm)
            if len(out) == k:
                break
    # re-orthonormalise once to clean up rounding
    basis, _ = np.linalg.qr(np.column_stack(out))
    return basis


def hermitian_eigensystem(a: np.ndarray) -> EigenSystem:
    """Eigen-decomposition with a deterministic gauge.

    Energies ascend. Degenerate blocks (spread below ``DEGENERACY_TOL`` times
    the matrix scale) get a canonical basis built from the projector onto the
    block, so the result does not depend on LAPACK's arbitrary choice inside
    the block. Each vector is then phase-fixed with :func:`fix_phase`.
    """
    a = np.asarray(a, dtype=complex)
    _check_dim(a)
    check_hermitian(a)
    a = 0.5 * (a + a.conj().T)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigensolver did not converge: {exc}") from exc

    scale = max(float(np.max(np.abs(a))), 1.0)
    v = v.copy()
    i = 0
    n = len(w)
    while i < n:
        j = i + 1
        while j < n and w[j] - w[i] <= DEGENERACY_TOL * scale:
            j += 1
        if j - i > 1:
            v[:, i:j] = _canonical_block(v[:, i:j])
            w[i:j] = np.real(np.diag(v[:, i:j].conj().T @ a @ v[:, i:j]))
        i = j
    for k in range(n):
        v[:, k] = fix_phase(v[:, k])
    return EigenSystem(np.array(w, dtype=float), v)


def matrix_exponential(a: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """exp(scale * a).

    A Hermitian ``a`` goes through its spectral decomposition, which keeps
    exp(i t a) unitary to rounding; anything else uses Pade (scipy).
    """
    a = np.asarray(a, dtype=complex)
    _check_dim(a)
    if hermitian_asymmetry(a) <= HERMITIAN_RTOL * max(float(np.max(np.abs(a))), 1e-300):
        w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
        return (v * np.exp(scale * w)) @ v.conj().T
    return scipy.linalg.expm(scale * a)


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t0: float,
    t1: float,
    tol: float = 1e-10,
    h0: float | None = None,
    max_step: float | None = None,
    max_steps: int = 10_000_000,
    record: list | None = None,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """Adaptive Dormand-Prince 5(4) integration of y' = rhs(t, y) from t0 to t1.

    ``tol`` is the local error target, measured in the max norm relative to
    max(1, |y|_max). ``y`` may be any complex array shape. If ``record`` is a
    list, every accepted (t, y) pair, including the initial one, is appended.
    ``project`` maps each accepted state back onto an invariant manifold of
    the exact flow (norm, unitarity) so that drift does not build up.
    """
    y = np.array(y0, dtype=complex)
    if record is not None:
        record.append((t0, y))
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    if t1 == t0:
        return y
    span = t1 - t0
    hmax = span if max_step is None else min(max_step, span)
    k1 = rhs(t0, y)
    if h0 is None:
        d = float(np.max(np.abs(k1)))
        h = hmax if d == 0.0 else min(hmax, 0.5 * tol ** 0.2 / d * max(1.0, float(np.max(np.abs(y)))))
    else:
        h = min(h0, hmax)
    t = t0
    hmin = 1e-14 * max(abs(t0), abs(t1), span)
    ks = [None] * 7
    for _ in range(max_steps):
        if t >= t1:
            return y
        last = t + h >= t1 or (t1 - (t + h)) < hmin
        if last:
            h = t1 - t
        ks[0] = k1
        # overflowing trial stages are rejected below, not reported
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(1, 7):
                acc = y.copy()
                for j, aij in enumerate(_A[s]):
                    if aij != 0.0:
                        acc += (h * aij) * ks[j]
                ks[s] = rhs(t + _C[s] * h, acc)
            # _A[6] equals _B5, so the stage-7 argument is the 5th-order solution
            y_new = y.copy()
            for j in range(6):
                if _B5[j] != 0.0:
                    y_new += (h * _B5[j]) * ks[j]
            err_vec = sum((h * _E[j]) * ks[j] for j in range(7) if _E[j] != 0.0)
            scale = max(1.0, float(np.max(np.abs(y))), float(np.max(np.abs(y_new))))
            err = float(np.max(np.abs(err_vec))) / (tol * scale)
        if not math.isfinite(err):
            err = 1e6
        if err <= 1.0:
            t = t1 if last else t + h
            if project is not None:
                y_new = project(y_new)
                ks[6] = rhs(t, y_new)
            y = y_new
            k1 = ks[6]
            if record is not None:
                record.append((t, y))
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = min(h * fac, hmax)
        else:
            h *= max(0.1, 0.9 * err ** -0.25)
            if h < hmin:
                raise StepUnderflowError(t, h)
    raise ConvergenceError(f"step budget exhausted at t={t!r}")


def propagate_schrodinger(
    hamiltonian: Callable[[float], np.ndarray],
    psi0: np.ndarray,
    t_i: float,
    t_e: float,
    tol: float = 1e-10,
    max_step: float | None = None,
) -> np.ndarray:
    """Integrate i d(psi)/dt = 2 pi H(t) psi with H in GHz and t in ns.

    ``psi0`` may be a state vector or a matrix whose columns are propagated
    together (pass the identity to get the propagator).
    """

    def rhs(t, y):
        return -1j * TWO_PI * (hamiltonian(t) @ y)

    return integrate(rhs, psi0, t_i, t_e, tol=tol, max_step=max_step, project=gram_projector(psi0))


def gram_projector(y0: np.ndarray) -> Callable[[np.ndarray], np.ndarray] | None:
    """Projection keeping the norm of a vector, or the unitarity of a unitary frame.

    Schroedinger evolution conserves y^H y; returns None when y0 is neither
    a vector nor a square unitary matrix.
    """
    y0 = np.asarray(y0)
    if y0.ndim == 1:
        norm0 = float(np.linalg.norm(y0))
        if norm0 == 0.0:
            return None
        return lambda y: y * (norm0 / np.linalg.norm(y))
    if y0.ndim == 2 and y0.shape[0] == y0.shape[1]:
        if np.max(np.abs(y0.conj().T @ y0 - np.eye(y0.shape[0]))) > 1e-12:
            return None

        def polar(y):
            left, _, right = np.linalg.svd(y)
            return left @ right

        return polar
    return None


def bloch_nodes(n_theta: int = 32, n_phi: int = 64):
    """Product-rule nodes on the Bloch sphere.

    Gauss-Legendre in cos(theta), trapezoid (equispaced) in phi. Returns
    (theta, phi, weight) arrays whose weights sum to one.
    """
    if n_theta < 8 or n_phi < 8:
        raise ValueError("need n_theta >= 8 and n_phi >= 8")
    u, wu = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(u)
    phi = TWO_PI * np.arange(n_phi) / n_phi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    ww = np.repeat(wu[:, None] / (2.0 * n_phi), n_phi, axis=1)
    return tt.ravel(), pp.ravel(), ww.ravel()


def bloch_state(theta: float, phi: float) -> np.ndarray:
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])


def bloch_average(f: Callable[[np.ndarray], float], n_theta: int = 32, n_phi: int = 64) -> float:
    """(1/4pi) times the surface integral of f(psi) over the Bloch sphere."""
    total = 0.0
    for th, ph, w in zip(*bloch_nodes(n_theta, n_phi)):
        total += w * f(bloch_state(th, ph))
    return float(total)
