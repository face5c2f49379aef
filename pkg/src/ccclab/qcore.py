"""
Exact pure-state manipulation for registers of at most four qubits.

Conventions used throughout the package:

* Amplitude index is big-endian in qubit order: qubit 0 is the most
  significant bit, so for labels ``(q0, q1, q2)`` the amplitude of
  ``|q0 q1 q2> = |0 1 1>`` sits at index ``0b011 = 3``.
* Measurements use real-plane bases.  A basis angle ``theta`` denotes the pair
  ``cos(theta)|0> + sin(theta)|1>`` (outcome 0) and
  ``-sin(theta)|0> + cos(theta)|1>`` (outcome 1).
* Bell indices::

      0 -> (|00> + |11>)/sqrt(2)
      1 -> (|01> + |10>)/sqrt(2)
      2 -> (|00> - |11>)/sqrt(2)
      3 -> (|01> - |10>)/sqrt(2)

  Which physical Bell state each non-zero index stands for is a convention of
  this package; only index 0 is singled out by the experiments.

Every public operation returns normalized states; unnormalized projections are
never exposed, weights are returned separately.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import cos, isfinite, pi, sin, sqrt

import numpy as np

from .errors import NormalizationError, PreconditionError, ZeroProbabilityError

MAX_QUBITS = 4
NORM_TOL = 1e-12
ZERO_WEIGHT = 1e-15

_S = 1 / sqrt(2)
# rows: Bell index; columns: |00>, |01>, |10>, |11>
BELL_VECTORS = np.array(
    [
        [_S, 0, 0, _S],
        [0, _S, _S, 0],
        [_S, 0, 0, -_S],
        [0, _S, -_S, 0],
    ],
    dtype=complex,
)


def check_bell_index(index) -> int:
    if isinstance(index, bool) or not isinstance(index, (int, np.integer)) or not 0 <= index <= 3:
        raise PreconditionError(f"BellIndex out of range: {index!r} (expected 0..3)")
    return int(index)


def canonical_angle(theta: float) -> float:
    """Reduce a basis angle mod pi; theta and theta + pi name the same basis up to relabeling."""
    return float(theta % pi)


def basis_vectors(theta: float) -> np.ndarray:
    """Rows are the outcome-0 and outcome-1 basis vectors for angle ``theta``."""
    if not isfinite(theta):
        raise PreconditionError(f"basis angle must be finite, got {theta!r}")
    c, s = cos(theta), sin(theta)
    return np.array([[c, s], [-s, c]], dtype=float)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized amplitude vector over ``n_qubits`` named qubits."""

    amplitudes: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        n = amps.size.bit_length() - 1
        if amps.size < 2 or amps.size != 1 << n:
            raise PreconditionError(f"amplitude count must be 2**n with n >= 1, got {amps.size}")
        if n > MAX_QUBITS:
            raise PreconditionError(f"at most {MAX_QUBITS} qubits supported, got {n}")
        if not np.all(np.isfinite(amps)):
            raise NormalizationError("amplitudes must be finite")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise NormalizationError(f"state not normalized: sum |amp|^2 = {norm!r}")
        labels = tuple(self.labels) or tuple(f"q{i}" for i in range(n))
        if len(labels) != n:
            raise PreconditionError(f"{len(labels)} labels given for {n} qubits")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "labels", labels)

    @property
    def n_qubits(self) -> int:
        return len(self.labels)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per qubit."""
        return self.amplitudes.reshape((2,) * self.n_qubits)

    def qubit(self, label: str) -> int:
        return self.labels.index(label)

    def allclose(self, other: "StateVector", atol: float = 1e-9) -> bool:
        return self.n_qubits == other.n_qubits and np.allclose(self.amplitudes, other.amplitudes, atol=atol)

    def __repr__(self):
        return f"StateVector(labels={self.labels}, amplitudes={np.round(self.amplitudes, 9).tolist()})"


def _from_tensor(psi: np.ndarray, labels, scale: float = 1.0) -> StateVector:
    return StateVector(psi.reshape(-1) * scale, labels)


def basis_state(bits: str, labels=()) -> StateVector:
    """Computational basis state, e.g. ``basis_state("01")``."""
    amps = np.zeros(1 << len(bits), dtype=complex)
    amps[int(bits, 2)] = 1.0
    return StateVector(amps, labels)


def bell_state(index: int, labels=()) -> StateVector:
    return StateVector(BELL_VECTORS[check_bell_index(index)], labels)


def tensor(left: StateVector, right: StateVector) -> StateVector:
    """Tensor product; qubit order is left's qubits followed by right's."""
    return StateVector(np.kron(left.amplitudes, right.amplitudes), left.labels + right.labels)


def _check_qubit(state: StateVector, qubit: int) -> int:
    if isinstance(qubit, bool) or not isinstance(qubit, (int, np.integer)) or not 0 <= qubit < state.n_qubits:
        raise PreconditionError(f"qubit {qubit!r} out of range for {state.n_qubits}-qubit state")
    return int(qubit)


def _collapse(state: StateVector, qubit: int, vec: np.ndarray):
    psi = state.tensor()
    reduced = np.tensordot(vec.conj(), psi, axes=([0], [qubit]))
    prob = float(np.vdot(reduced, reduced).real)
    full = np.moveaxis(np.multiply.outer(vec, reduced), 0, qubit)
    return prob, full


def measure_distribution(state: StateVector, qubit: int, basis: float):
    """Outcome probabilities and collapsed states for a single-qubit measurement.

    Returns ``(p0, post0, p1, post1)``.  A post-state is ``None`` when its
    outcome has probability below 1e-15, since it cannot be normalized.
    """
    qubit = _check_qubit(state, qubit)
    vecs = basis_vectors(basis)
    out = []
    for k in (0, 1):
        p, full = _collapse(state, qubit, vecs[k])
        post = _from_tensor(full, state.labels, 1 / sqrt(p)) if p >= ZERO_WEIGHT else None
        out.extend((p, post))
    # absorb rounding so that p0 + p1 == 1 to machine precision
    total = out[0] + out[2]
    out[0] /= total
    out[2] /= total
    return tuple(out)


def sample_measurement(state: StateVector, qubit: int, basis: float, u: float):
    """Measure ``qubit`` using the uniform draw ``u``: outcome 0 iff ``u < p0``."""
    if not 0.0 <= u < 1.0:
        raise PreconditionError(f"uniform draw must lie in [0, 1), got {u!r}")
    p0, post0, _, post1 = measure_distribution(state, qubit, basis)
    return (0, post0) if u < p0 else (1, post1)


def bell_project(state: StateVector, q_i: int, q_j: int, m: int, renormalize: bool = True):
    """Project qubits ``(q_i, q_j)`` onto Bell state ``m``.

    Returns ``(weight, post)`` where ``weight`` is the squared norm of the
    projection.  With ``renormalize=False`` the post-state is not built and
    ``post`` is ``None``; this is how zero-weight branches are queried.
    """
    q_i, q_j = _check_qubit(state, q_i), _check_qubit(state, q_j)
    if q_i == q_j:
        raise PreconditionError("Bell projection needs two distinct qubits")
    bell = BELL_VECTORS[check_bell_index(m)].reshape(2, 2)
    reduced = np.tensordot(bell.conj(), state.tensor(), axes=([0, 1], [q_i, q_j]))
    weight = float(np.vdot(reduced, reduced).real)
    if not renormalize:
        return weight, None
    if weight < ZERO_WEIGHT:
        raise ZeroProbabilityError(f"projection onto Bell state {m} of qubits ({q_i}, {q_j}) has weight {weight:.3g}")
    full = np.moveaxis(np.multiply.outer(bell, reduced), [0, 1], [q_i, q_j])
    return weight, _from_tensor(full, state.labels, 1 / sqrt(weight))


def bell_weights(state: StateVector, q_i: int, q_j: int) -> np.ndarray:
    """Weights of all four Bell projections of ``(q_i, q_j)``; they sum to one."""
    return np.array([bell_project(state, q_i, q_j, m, renormalize=False)[0] for m in range(4)])
