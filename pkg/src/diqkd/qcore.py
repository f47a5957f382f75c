"""Two-qubit states, x-z plane measurements and the Born rule.

Everything here works on 4x4 complex density matrices stored as numpy
arrays.  Ordering of the tensor factors is Alice (A) then Bob (B), so the
computational basis is |00>, |01>, |10>, |11>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._numerics import DomainError
from .behavior import Behavior

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
PSI_MINUS = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10


def jacobi_eigh(h: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a small Hermitian matrix by cyclic Jacobi sweeps.

    Parameters
    ----------
    h : ndarray
        Square Hermitian matrix.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm drops below
        ``tol`` times the matrix norm.
    max_sweeps : int
        Hard cap on the number of full sweeps.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    v : ndarray
        Unitary whose columns are the matching eigenvectors.
    """
    a = np.array(h, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise DomainError("jacobi_eigh needs a square matrix")
    if np.max(np.abs(a - a.conj().T), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(a), initial=0.0)):
        raise DomainError("jacobi_eigh needs a Hermitian matrix")
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=complex)
    scale = max(np.linalg.norm(a), 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                theta = 0.5 * math.atan2(2.0 * mag, (a[q, q] - a[p, p]).real)
                c, s = math.cos(theta), math.sin(theta)
                rot = _jacobi_rotation(n, p, q, c, s, phase)
                a = rot.conj().T @ a @ rot
                a[p, q] = 0.0
                a[q, p] = 0.0
                v = v @ rot
    w = np.real(np.diag(a))
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def _jacobi_rotation(n: int, p: int, q: int, c: float, s: float, phase: complex) -> np.ndarray:
    # U = D G with D = diag(1, conj(phase)) on (p, q) and G the real rotation [[c, s], [-s, c]]
    rot = np.eye(n, dtype=complex)
    rot[p, p] = c
    rot[p, q] = s
    rot[q, p] = -s * np.conj(phase)
    rot[q, q] = c * np.conj(phase)
    return rot


@dataclass(frozen=True)
class QubitPairState:
    """Two-qubit density operator (4x4, Hermitian, PSD, unit trace)."""

    density: np.ndarray
    _eig: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        rho = np.array(self.density, dtype=complex)
        if rho.shape != (4, 4):
            raise DomainError(f"two-qubit density must be 4x4, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise DomainError("density operator is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > TRACE_TOL:
            raise DomainError(f"density operator has trace {np.trace(rho).real}")
        w, v = jacobi_eigh(rho)
        if w[0] < -PSD_TOL:
            raise DomainError(f"density operator has negative eigenvalue {w[0]:.3g}")
        rho.setflags(write=False)
        object.__setattr__(self, "density", rho)
        object.__setattr__(self, "_eig", (w, v))

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eig[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._eig[1]

    def is_pure(self, tol: float = 1e-10) -> bool:
        return bool(self.eigenvalues[-1] > 1.0 - tol)

    @classmethod
    def from_vector(cls, psi) -> "QubitPairState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))


@dataclass(frozen=True)
class Measurement:
    """Dichotomic observable cos(theta) sigma_z + sin(theta) sigma_x.

    Outcome 0 is the +1 eigenspace, outcome 1 the -1 eigenspace.
    """

    angle: float

    def __post_init__(self):
        if not math.isfinite(self.angle):
            raise DomainError("measurement angle must be finite")
        object.__setattr__(self, "angle", float(self.angle) % (2.0 * math.pi))

    @property
    def observable(self) -> np.ndarray:
        return math.cos(self.angle) * SIGMA_Z + math.sin(self.angle) * SIGMA_X

    @property
    def projectors(self) -> np.ndarray:
        """Array of shape (2, 2, 2): P_+ then P_-."""
        o = self.observable
        return np.stack([0.5 * (IDENTITY2 + o), 0.5 * (IDENTITY2 - o)])


def werner_state(p: float) -> QubitPairState:
    """p |phi+><phi+| + (1 - p) I / 4."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"Werner weight must lie in [0, 1], got {p}")
    return QubitPairState(p * np.outer(PHI_PLUS, PHI_PLUS.conj()) + (1.0 - p) * np.eye(4) / 4.0)


def tilted_state(theta: float) -> QubitPairState:
    """Pure state cos(theta)|00> + sin(theta)|11>."""
    return QubitPairState.from_vector([math.cos(theta), 0.0, 0.0, math.sin(theta)])


def singlet_state() -> QubitPairState:
    """(|01> - |10>)/sqrt(2); outcomes anticorrelate for equal settings."""
    return QubitPairState.from_vector(PSI_MINUS)


def chsh_optimal_settings() -> tuple[list[Measurement], list[Measurement]]:
    """Alice {0, pi/2}, Bob {pi/4, -pi/4}: reaches 2 sqrt 2 on |phi+>."""
    return ([Measurement(0.0), Measurement(math.pi / 2)],
            [Measurement(math.pi / 4), Measurement(-math.pi / 4)])


def _as_measurements(ms) -> list[Measurement]:
    out = [m if isinstance(m, Measurement) else Measurement(float(m)) for m in ms]
    if not out:
        raise DomainError("measurement list must be nonempty")
    return out


def born_behavior(state: QubitPairState, alice: Sequence, bob: Sequence) -> Behavior:
    """p(ab|xy) = Tr[(P^A_{a|x} (x) P^B_{b|y}) rho].

    ``alice`` and ``bob`` hold :class:`Measurement` objects or bare angles.
    """
    if not isinstance(state, QubitPairState):
        raise DomainError("born_behavior needs a QubitPairState")
    pa = np.stack([m.projectors for m in _as_measurements(alice)])  # (x, a, i, j)
    pb = np.stack([m.projectors for m in _as_measurements(bob)])  # (y, b, k, l)
    rho = state.density.reshape(2, 2, 2, 2)  # (i, k, j, l) with row index (i, k)
    # Tr[(PA (x) PB) rho] = sum PA[i, j] PB[k, l] rho[(j, l), (i, k)]
    t = np.einsum("xaij,ybkl,jlik->abxy", pa, pb, rho, optimize=True)
    t = np.clip(t.real, 0.0, None)
    t = t / t.sum(axis=(0, 1), keepdims=True)
    return Behavior(t)


def sos_residual(state: QubitPairState, alice: Sequence, bob: Sequence) -> float:
    """Sum-of-squares residual of the Tsirelson bound.

    Returns ``||(M_+ - B_0) psi||^2 + ||(M_- - B_1) psi||^2`` with
    ``M_pm = (A_0 pm A_1)/sqrt 2``.  For a mixed state the value is the
    eigenvalue-weighted average over its eigenvectors, which keeps the
    identity residual = sqrt(2) (2 sqrt 2 - beta) exact.
    """
    alice = _as_measurements(alice)
    bob = _as_measurements(bob)
    if len(alice) != 2 or len(bob) != 2:
        raise DomainError("SOS residual needs exactly two settings per party")
    a0, a1 = alice[0].observable, alice[1].observable
    b0, b1 = bob[0].observable, bob[1].observable
    m_plus = np.kron((a0 + a1) / math.sqrt(2.0), IDENTITY2)
    m_minus = np.kron((a0 - a1) / math.sqrt(2.0), IDENTITY2)
    op0 = m_plus - np.kron(IDENTITY2, b0)
    op1 = m_minus - np.kron(IDENTITY2, b1)
    w, v = state.eigenvalues, state.eigenvectors
    total = 0.0
    for k in range(4):
        if w[k] <= 0.0:
            continue
        psi = v[:, k]
        total += w[k] * (np.linalg.norm(op0 @ psi) ** 2 + np.linalg.norm(op1 @ psi) ** 2)
    return float(max(total, 0.0))
