"""Two-level optical Bloch dynamics in the frame rotating at the drive.

The density matrix is carried as a real 4-vector
``(rho_aa, rho_bb, Re rho_ab, Im rho_ab)`` with ``a`` the ground state, and
every propagator is a real 4x4 linear map on that vector.  All propagators
broadcast over leading array dimensions, so an entire inhomogeneous
ensemble can be pushed through a sequence with a handful of matrix products.

Units: angular frequencies in rad/us, times in us.

Equations of motion (rotating frame, ``Omega`` the detuning)::

    d rho_aa/dt = -(i/2)(rho_ba chi* - rho_ab chi) + (1 - rho_aa)/T1
    d rho_bb/dt = +(i/2)(rho_ba chi* - rho_ab chi) - rho_bb/T1
    d rho_ab/dt = -(i/2)(rho_bb - rho_aa) chi* + i Omega rho_ab - rho_ab/T2
"""

from dataclasses import dataclass
import math

import numpy as np

TRACE_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """Fine-step integration did not converge on the supplied grid."""


@dataclass(frozen=True)
class TwoLevelState:
    rho_aa: float
    rho_bb: float
    rho_ab: complex

    @classmethod
    def ground(cls):
        return cls(1.0, 0.0, 0j)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[..., 0], v[..., 1], v[..., 2] + 1j * v[..., 3])

    def to_vector(self) -> np.ndarray:
        rho_ab = np.asarray(self.rho_ab)
        return np.stack(
            np.broadcast_arrays(self.rho_aa, self.rho_bb, rho_ab.real, rho_ab.imag),
            axis=-1,
        ).astype(float)

    @property
    def rho_ba(self):
        return np.conj(self.rho_ab)

    def matrix(self) -> np.ndarray:
        return np.array([[self.rho_aa, self.rho_ab], [np.conj(self.rho_ab), self.rho_bb]])

    def is_physical(self, tol=TRACE_TOL) -> bool:
        aa, bb = np.asarray(self.rho_aa), np.asarray(self.rho_bb)
        ok = np.abs(aa + bb - 1.0) <= tol
        ok &= (aa >= -tol) & (aa <= 1 + tol)
        ok &= np.abs(self.rho_ab) ** 2 <= aa * bb + tol
        return bool(np.all(ok))


@dataclass(frozen=True)
class PulseParams:
    chi: complex
    detuning: float
    duration: float

    def __post_init__(self):
        if np.any(np.asarray(self.duration) < 0):
            raise ValueError("pulse duration must be >= 0")


@dataclass(frozen=True)
class FreeParams:
    detuning: float
    stark: float
    duration: float
    T1: float = math.inf
    T2: float = math.inf

    def __post_init__(self):
        if np.any(np.asarray(self.duration) < 0):
            raise ValueError("free-evolution duration must be >= 0")
        if self.T1 <= 0 or self.T2 <= 0:
            raise ValueError("T1 and T2 must be positive")
        if math.isfinite(self.T1) and math.isfinite(self.T2) and self.T2 > 2 * self.T1:
            raise ValueError("T2 cannot exceed 2*T1")


class StateMap:
    """Batch of real linear maps acting on Bloch 4-vectors."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape[-2:] != (4, 4):
            raise ValueError("a StateMap must have trailing shape (4, 4)")
        self.matrix = matrix

    @classmethod
    def identity(cls, shape=()):
        return cls(np.broadcast_to(np.eye(4), tuple(shape) + (4, 4)).copy())

    @property
    def shape(self):
        return self.matrix.shape[:-2]

    def __matmul__(self, other):
        # self @ other applies ``other`` first
        if isinstance(other, StateMap):
            return StateMap(self.matrix @ other.matrix)
        return NotImplemented

    def apply(self, state):
        if isinstance(state, TwoLevelState):
            return TwoLevelState.from_vector(self.apply(state.to_vector()))
        v = np.asarray(state, dtype=float)
        return np.einsum("...ij,...j->...i", self.matrix, v)

    def inverse(self):
        return StateMap(np.linalg.inv(self.matrix))


# Hermitian basis matching the 4-vector components: rho = sum_j v_j B_j
_BASIS = np.array(
    [
        [[1, 0], [0, 0]],
        [[0, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, 1j], [-1j, 0]],
    ],
    dtype=complex,
)


def _unitary_to_map(U):
    """Turn a batch of 2x2 unitaries into the 4x4 map rho -> U rho U^+."""
    out = np.einsum("...ik,jkl,...ml->...jim", U, _BASIS, U.conj())
    # out[..., j] is U B_j U^+; read back (aa, bb, Re ab, Im ab)
    M = np.empty(U.shape[:-2] + (4, 4))
    M[..., 0, :] = out[..., :, 0, 0].real
    M[..., 1, :] = out[..., :, 1, 1].real
    M[..., 2, :] = out[..., :, 0, 1].real
    M[..., 3, :] = out[..., :, 0, 1].imag
    return StateMap(M)


def pulse_unitary(chi, detuning, duration):
    """2x2 evolution operator for a square pulse, exp(-iHt).

    ``H = (1/2) [[-detuning, chi*], [chi, detuning]]``; the phase of ``chi``
    sets the azimuth of the rotation axis.
    """
    chi, detuning, duration = np.broadcast_arrays(
        np.asarray(chi, dtype=complex),
        np.asarray(detuning, dtype=float),
        np.asarray(duration, dtype=float),
    )
    gen = np.sqrt(np.abs(chi) ** 2 + detuning**2)
    half = 0.5 * gen * duration
    c = np.cos(half)
    # sin(g t/2)/g, finite at g = 0
    s = 0.5 * duration * np.sinc(half / np.pi)
    U = np.empty(chi.shape + (2, 2), dtype=complex)
    U[..., 0, 0] = c + 1j * s * detuning
    U[..., 1, 1] = c - 1j * s * detuning
    U[..., 0, 1] = -1j * s * np.conj(chi)
    U[..., 1, 0] = -1j * s * chi
    return U


def pulse_propagator(chi, detuning=0.0, duration=0.0) -> StateMap:
    """Exact map for a square pulse with relaxation neglected.

    Accepts a :class:`PulseParams` or broadcastable ``chi, detuning,
    duration`` arrays.
    """
    if isinstance(chi, PulseParams):
        chi, detuning, duration = chi.chi, chi.detuning, chi.duration
    if np.any(np.asarray(duration) < 0):
        raise ValueError("pulse duration must be >= 0")
    return _unitary_to_map(pulse_unitary(chi, detuning, duration))


def free_propagator(detuning, stark=0.0, duration=0.0, T1=math.inf, T2=math.inf) -> StateMap:
    """Free precession at ``detuning + stark`` with T1/T2 relaxation.

    Accepts a :class:`FreeParams` or broadcastable arrays.
    """
    if isinstance(detuning, FreeParams):
        f = detuning
        detuning, stark, duration, T1, T2 = f.detuning, f.stark, f.duration, f.T1, f.T2
    detuning, stark, duration = np.broadcast_arrays(
        np.asarray(detuning, dtype=float),
        np.asarray(stark, dtype=float),
        np.asarray(duration, dtype=float),
    )
    if np.any(duration < 0):
        raise ValueError("free-evolution duration must be >= 0")
    theta = (detuning + stark) * duration
    g2 = np.exp(-duration / T2)
    g1 = np.exp(-duration / T1)
    M = np.zeros(theta.shape + (4, 4))
    M[..., 0, 0] = 1.0
    M[..., 0, 1] = 1.0 - g1
    M[..., 1, 1] = g1
    M[..., 2, 2] = g2 * np.cos(theta)
    M[..., 2, 3] = -g2 * np.sin(theta)
    M[..., 3, 2] = g2 * np.sin(theta)
    M[..., 3, 3] = g2 * np.cos(theta)
    return StateMap(M)


def _as_time_function(value):
    if callable(value):
        return value
    return lambda t: value


def _rhs(y, chi, omega, inv_t1, inv_t2):
    aa, bb, ab = y[..., 0], y[..., 1], y[..., 2]
    ba = np.conj(ab)
    flow = -0.5j * (ba * np.conj(chi) - ab * chi)
    d_aa = flow + inv_t1 * (1.0 - aa)
    d_bb = -flow - inv_t1 * bb
    d_ab = -0.5j * (bb - aa) * np.conj(chi) + 1j * omega * ab - inv_t2 * ab
    return np.stack([d_aa, d_bb, d_ab], axis=-1)


def _rk4(y, chi_f, omega, stark_f, inv_t1, inv_t2, grid):
    for k in range(grid.shape[-1] - 1):
        t0, t1 = grid[..., k], grid[..., k + 1]
        h = (t1 - t0)[..., None]
        tm = 0.5 * (t0 + t1)

        def f(t, y):
            return _rhs(y, chi_f(t), omega + stark_f(t), inv_t1, inv_t2)

        k1 = f(t0, y)
        k2 = f(tm, y + 0.5 * h * k1)
        k3 = f(tm, y + 0.5 * h * k2)
        k4 = f(t1, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def reference_evolve(state, chi, detuning, stark, T1, T2, t_grid, tol=1e-8) -> TwoLevelState:
    """Integrate the master equations directly with fixed-step RK4.

    This is a test oracle: it shares nothing with the analytic propagators.
    ``chi`` and ``stark`` may be constants or callables of time; ``t_grid``
    may carry leading batch dimensions (one grid per case).  The step is
    halved once and the two results compared; a change larger than ``tol``
    raises :class:`ConvergenceError`.
    """
    grid = np.asarray(t_grid, dtype=float)
    if grid.shape[-1] < 2:
        raise ValueError("t_grid needs at least two points")
    if np.any(np.diff(grid, axis=-1) < 0):
        raise ValueError("t_grid must be non-decreasing")
    chi_f = _as_time_function(chi)
    stark_f = _as_time_function(stark)
    omega = np.asarray(detuning, dtype=float)
    inv_t1 = 0.0 if math.isinf(T1) else 1.0 / T1
    inv_t2 = 0.0 if math.isinf(T2) else 1.0 / T2

    y0 = np.stack(
        np.broadcast_arrays(
            np.asarray(state.rho_aa, dtype=complex),
            np.asarray(state.rho_bb, dtype=complex),
            np.asarray(state.rho_ab, dtype=complex),
        ),
        axis=-1,
    )
    y0 = np.broadcast_to(y0, grid.shape[:-1] + (3,))

    fine = np.empty(grid.shape[:-1] + (2 * grid.shape[-1] - 1,))
    fine[..., ::2] = grid
    fine[..., 1::2] = 0.5 * (grid[..., :-1] + grid[..., 1:])

    coarse_y = _rk4(y0, chi_f, omega, stark_f, inv_t1, inv_t2, grid)
    fine_y = _rk4(y0, chi_f, omega, stark_f, inv_t1, inv_t2, fine)
    change = np.max(np.abs(fine_y - coarse_y))
    if change > tol:
        raise ConvergenceError(
            f"halving the step changed the result by {change:.3e} (> {tol:g}); refine t_grid"
        )
    return TwoLevelState(fine_y[..., 0].real, fine_y[..., 1].real, fine_y[..., 2])
