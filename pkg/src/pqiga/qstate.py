"""Small state-vector simulation: single qubits and the 4-qubit feature encoder.

Basis convention: qubit 0 is the most significant bit, so the amplitude of
``|q0 q1 q2 q3>`` lives at index ``q0*8 + q1*4 + q2*2 + q3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

N_QUBITS = 4
DIM = 2**N_QUBITS

_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0)


def ry_matrix(theta):
    """2x2 Ry rotation (half-angle convention)."""
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


@dataclass(frozen=True)
class QubitPair:
    """One qubit ``alpha|0> + beta|1>``."""

    alpha: complex
    beta: complex

    @classmethod
    def from_angle(cls, phi):
        """Real qubit ``(cos(phi/2), sin(phi/2))``."""
        return cls(complex(math.cos(phi / 2.0)), complex(math.sin(phi / 2.0)))

    @property
    def norm(self):
        return math.sqrt(abs(self.alpha) ** 2 + abs(self.beta) ** 2)

    @property
    def p1(self):
        """Probability of measuring ``|1>``."""
        return abs(self.beta) ** 2

    def normalized(self):
        n = self.norm
        if n == 0.0:
            raise ValueError("cannot normalize a zero qubit")
        return QubitPair(self.alpha / n, self.beta / n)

    def rotate(self, theta):
        """Apply Ry(theta)."""
        if not math.isfinite(theta):
            raise ValueError(f"rotation angle must be finite, got {theta!r}")
        c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
        return QubitPair(c * self.alpha - s * self.beta, s * self.alpha + c * self.beta)


class StateVector4:
    """Immutable normalized state of 4 qubits (16 complex amplitudes)."""

    __slots__ = ("_amps",)

    def __init__(self, amps):
        a = np.array(amps, dtype=complex).reshape(-1)
        if a.shape != (DIM,):
            raise ValueError(f"expected {DIM} amplitudes, got {a.size}")
        a.flags.writeable = False
        self._amps = a

    @classmethod
    def zero(cls):
        a = np.zeros(DIM, dtype=complex)
        a[0] = 1.0
        return cls(a)

    @classmethod
    def basis(cls, index):
        if not 0 <= index < DIM:
            raise ValueError(f"basis index out of range: {index}")
        a = np.zeros(DIM, dtype=complex)
        a[index] = 1.0
        return cls(a)

    @property
    def amps(self):
        return self._amps

    @property
    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self._amps) ** 2)))

    def __repr__(self):
        return f"StateVector4({self._amps!r})"

    def __eq__(self, other):
        if not isinstance(other, StateVector4):
            return NotImplemented
        return bool(np.array_equal(self._amps, other._amps))

    __hash__ = None


def _check_qubit(qubit):
    if not isinstance(qubit, (int, np.integer)) or not 0 <= qubit < N_QUBITS:
        raise ValueError(f"qubit index must be in 0..{N_QUBITS - 1}, got {qubit!r}")


def _apply_1q(state, gate, qubit):
    _check_qubit(qubit)
    psi = state.amps.reshape((2,) * N_QUBITS)
    out = np.tensordot(gate, psi, axes=([1], [qubit]))
    out = np.moveaxis(out, 0, qubit)
    return StateVector4(out.reshape(DIM))


def apply_hadamard(state, qubit):
    return _apply_1q(state, _H, qubit)


def apply_ry(state, qubit, theta):
    if not math.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta!r}")
    return _apply_1q(state, ry_matrix(theta), qubit)


def apply_cnot(state, control, target):
    _check_qubit(control)
    _check_qubit(target)
    if control == target:
        raise ValueError("control and target must differ")
    psi = state.amps.reshape((2,) * N_QUBITS).copy()
    idx_c1 = [slice(None)] * N_QUBITS
    idx_c1[control] = 1
    sub = psi[tuple(idx_c1)]
    # target axis shifts down by one when control precedes it
    t_axis = target - 1 if target > control else target
    psi[tuple(idx_c1)] = np.flip(sub, axis=t_axis)
    return StateVector4(psi.reshape(DIM))


def encode_features(features):
    """Encode an even-length vector of angles with the layered H/CNOT/Ry circuit.

    The circuit starts with H on qubits 0 and 3; every pair of angles
    ``(a, b)`` then adds ``CNOT(0,1), Ry(a) on 1, CNOT(1,2), Ry(b) on 2,
    CNOT(2,3)``.

    Parameters
    ----------
    features : array_like
        Angles in radians, typically MFCCs scaled to ``[0, pi]``.

    Returns
    -------
    StateVector4
    """
    x = np.asarray(features, dtype=float).reshape(-1)
    if x.size == 0 or x.size % 2:
        raise ValueError(f"feature vector length must be even and >= 2, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    state = apply_hadamard(apply_hadamard(StateVector4.zero(), 0), 3)
    for a, b in x.reshape(-1, 2):
        state = apply_cnot(state, 0, 1)
        state = apply_ry(state, 1, float(a))
        state = apply_cnot(state, 1, 2)
        state = apply_ry(state, 2, float(b))
        state = apply_cnot(state, 2, 3)
    amps = state.amps / state.norm
    return StateVector4(amps)


def fidelity(a, b):
    """``|<a|b>|^2`` clipped to [0, 1]."""
    overlap = np.vdot(a.amps, b.amps)
    return float(min(1.0, max(0.0, abs(overlap) ** 2)))
