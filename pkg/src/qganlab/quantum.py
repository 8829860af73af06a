"""Exact statevector simulation of small qubit registers.

Provides diagonal (Z-string) observables, a hardware-efficient layered ansatz
(RY+RZ rotations with CX entanglement), parameter-shift gradients, and a
brute-force diagonalization oracle for ground-state energies.

Basis convention: amplitude index ``b`` encodes qubit ``i`` in bit ``i`` (qubit
0 is the least significant bit). Bit value 0 corresponds to sigma_z eigenvalue
+1 ("spin up"), bit value 1 to eigenvalue -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

ENTANGLEMENTS = ("linear", "circular")

MAX_ORACLE_QUBITS = 20


@dataclass(frozen=True)
class PauliTerm:
    """A weighted string of sigma_z factors, identity on all other qubits."""

    coefficient: float
    z_mask: int  # bit i set -> sigma_z acts on qubit i

    def __post_init__(self) -> None:
        if not math.isfinite(self.coefficient):
            raise ValueError(f"non-finite coefficient {self.coefficient!r}")
        if self.z_mask < 0:
            raise ValueError("z_mask must be a non-negative bit set")


@dataclass(frozen=True)
class Hamiltonian:
    """Sum of Z-string terms; diagonal in the computational basis."""

    n_qubits: int
    terms: tuple[PauliTerm, ...]

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise ValueError("need at least one qubit")
        object.__setattr__(self, "terms", tuple(self.terms))
        for term in self.terms:
            if term.z_mask >> self.n_qubits:
                raise ValueError(
                    f"term mask {term.z_mask:#x} references qubits >= {self.n_qubits}"
                )

    def diagonal(self) -> np.ndarray:
        """Classical energy of every basis state, as a length-2^n vector."""
        return _diagonal(self.n_qubits, self.terms)


@lru_cache(maxsize=128)
def _diagonal(n_qubits: int, terms: tuple[PauliTerm, ...]) -> np.ndarray:
    basis = np.arange(1 << n_qubits, dtype=np.int64)
    energies = np.zeros(basis.shape, dtype=np.float64)
    for term in terms:
        parity = np.zeros(basis.shape, dtype=np.int64)
        mask = term.z_mask
        while mask:
            qubit = (mask & -mask).bit_length() - 1
            parity ^= (basis >> qubit) & 1
            mask &= mask - 1
        energies += term.coefficient * (1.0 - 2.0 * parity)
    energies.setflags(write=False)
    return energies


@dataclass(frozen=True)
class Statevector:
    """Unit-norm complex amplitudes over the 2^n computational basis states."""

    n_qubits: int
    amplitudes: np.ndarray

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def from_amplitudes(cls, amplitudes: np.ndarray) -> "Statevector":
        amps = np.asarray(amplitudes, dtype=np.complex128)
        n = int(amps.size).bit_length() - 1
        if amps.ndim != 1 or amps.size != 1 << n:
            raise ValueError("amplitude vector length must be a power of two")
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state norm^2 = {norm!r} is not 1 within 1e-12")
        return cls(n, amps)

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


@lru_cache(maxsize=None)
def _pair_index(n_qubits: int, qubit: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices of basis states with bit `qubit` clear, and their bit-set partners."""
    basis = np.arange(1 << n_qubits)
    lo = basis[(basis >> qubit) & 1 == 0]
    hi = lo | (1 << qubit)
    lo.setflags(write=False)
    hi.setflags(write=False)
    return lo, hi


@lru_cache(maxsize=None)
def _cx_index(n_qubits: int, control: int, target: int) -> tuple[np.ndarray, np.ndarray]:
    basis = np.arange(1 << n_qubits)
    src = basis[((basis >> control) & 1 == 1) & ((basis >> target) & 1 == 0)]
    dst = src | (1 << target)
    src.setflags(write=False)
    dst.setflags(write=False)
    return src, dst


def _check_qubit(n_qubits: int, qubit: int) -> None:
    if not 0 <= qubit < n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {n_qubits}-qubit register")


def _ry_inplace(amps: np.ndarray, n_qubits: int, qubit: int, angle: float) -> None:
    lo, hi = _pair_index(n_qubits, qubit)
    c, s = math.cos(angle / 2.0), math.sin(angle / 2.0)
    a0 = amps[lo]
    a1 = amps[hi]
    amps[lo] = c * a0 - s * a1
    amps[hi] = s * a0 + c * a1


def _rz_inplace(amps: np.ndarray, n_qubits: int, qubit: int, angle: float) -> None:
    lo, hi = _pair_index(n_qubits, qubit)
    phase = complex(math.cos(angle / 2.0), math.sin(angle / 2.0))
    amps[lo] *= phase.conjugate()
    amps[hi] *= phase


def _cx_inplace(amps: np.ndarray, n_qubits: int, control: int, target: int) -> None:
    src, dst = _cx_index(n_qubits, control, target)
    tmp = amps[src].copy()
    amps[src] = amps[dst]
    amps[dst] = tmp


def apply_ry(state: Statevector, qubit: int, angle: float) -> Statevector:
    """Rotate `qubit` by exp(-i*angle/2*sigma_y). Returns a new state."""
    _check_qubit(state.n_qubits, qubit)
    if not math.isfinite(angle):
        raise ValueError("angle must be finite")
    amps = state.amplitudes.copy()
    _ry_inplace(amps, state.n_qubits, qubit, angle)
    return Statevector(state.n_qubits, amps)


def apply_rz(state: Statevector, qubit: int, angle: float) -> Statevector:
    """Rotate `qubit` by exp(-i*angle/2*sigma_z). Returns a new state."""
    _check_qubit(state.n_qubits, qubit)
    if not math.isfinite(angle):
        raise ValueError("angle must be finite")
    amps = state.amplitudes.copy()
    _rz_inplace(amps, state.n_qubits, qubit, angle)
    return Statevector(state.n_qubits, amps)


def apply_cx(state: Statevector, control: int, target: int) -> Statevector:
    """Controlled-X: basis permutation |c,t> -> |c, t xor c>."""
    _check_qubit(state.n_qubits, control)
    _check_qubit(state.n_qubits, target)
    if control == target:
        raise ValueError("control and target must differ")
    amps = state.amplitudes.copy()
    _cx_inplace(amps, state.n_qubits, control, target)
    return Statevector(state.n_qubits, amps)


@dataclass(frozen=True)
class AnsatzCircuit:
    """Layered hardware-efficient ansatz: RY+RZ rotation layers, CX entanglers.

    Parameters are indexed layer-major: within rotation layer ``l`` the RY
    block comes first (one angle per qubit, qubit-major), then the RZ block,
    so parameter ``l*2n + rot*n + q`` drives rotation ``rot`` on qubit ``q``.
    One entangling layer sits between consecutive rotation layers; ``linear``
    chains CX(0,1)..CX(n-2,n-1) and ``circular`` adds CX(n-1,0).
    """

    n_qubits: int
    repetitions: int
    entanglement: str

    def __post_init__(self) -> None:
        if self.n_qubits < 2:
            raise ValueError("ansatz needs at least two qubits")
        if self.repetitions < 0:
            raise ValueError("repetitions must be non-negative")
        if self.entanglement not in ENTANGLEMENTS:
            raise ValueError(f"entanglement must be one of {ENTANGLEMENTS}")

    @property
    def parameter_count(self) -> int:
        return 2 * self.n_qubits * (self.repetitions + 1)

    def entangler_pairs(self) -> tuple[tuple[int, int], ...]:
        pairs = [(q, q + 1) for q in range(self.n_qubits - 1)]
        if self.entanglement == "circular":
            pairs.append((self.n_qubits - 1, 0))
        return tuple(pairs)


def build_ansatz(
    n_qubits: int, repetitions: int = 1, entanglement: str = "circular"
) -> AnsatzCircuit:
    return AnsatzCircuit(n_qubits, repetitions, entanglement)


def _run_circuit(amps: np.ndarray, circuit: AnsatzCircuit, params: np.ndarray) -> None:
    n = circuit.n_qubits
    pairs = circuit.entangler_pairs()
    for layer in range(circuit.repetitions + 1):
        base = layer * 2 * n
        for q in range(n):
            _ry_inplace(amps, n, q, params[base + q])
        for q in range(n):
            _rz_inplace(amps, n, q, params[base + n + q])
        if layer < circuit.repetitions:
            for control, target in pairs:
                _cx_inplace(amps, n, control, target)


def prepare_state(circuit: AnsatzCircuit, params: np.ndarray) -> Statevector:
    """Apply the ansatz gate program to |0...0>."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (circuit.parameter_count,):
        raise ValueError(
            f"expected {circuit.parameter_count} parameters, got shape {params.shape}"
        )
    amps = np.zeros(1 << circuit.n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    _run_circuit(amps, circuit, params)
    return Statevector(circuit.n_qubits, amps)


def expectation(state: Statevector, h: Hamiltonian) -> float:
    """<psi|H|psi> for a diagonal H, via probability-weighted basis energies."""
    if state.n_qubits != h.n_qubits:
        raise ValueError(
            f"state has {state.n_qubits} qubits but Hamiltonian has {h.n_qubits}"
        )
    probs = np.abs(state.amplitudes) ** 2
    return float(probs @ h.diagonal())


def energy_gradient(
    circuit: AnsatzCircuit, params: np.ndarray, h: Hamiltonian
) -> np.ndarray:
    """Exact gradient via the parameter-shift rule, (E(+pi/2)-E(-pi/2))/2."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (circuit.parameter_count,):
        raise ValueError(
            f"expected {circuit.parameter_count} parameters, got shape {params.shape}"
        )
    grad = np.empty_like(params)
    shifted = params.copy()
    for k in range(params.size):
        original = shifted[k]
        shifted[k] = original + math.pi / 2.0
        e_plus = expectation(prepare_state(circuit, shifted), h)
        shifted[k] = original - math.pi / 2.0
        e_minus = expectation(prepare_state(circuit, shifted), h)
        shifted[k] = original
        grad[k] = (e_plus - e_minus) / 2.0
    return grad


def ground_state_energy(h: Hamiltonian) -> tuple[float, int]:
    """Exact minimum basis energy and its argmin index (lowest index on ties)."""
    if h.n_qubits > MAX_ORACLE_QUBITS:
        raise ValueError(
            f"enumeration oracle capped at {MAX_ORACLE_QUBITS} qubits, got {h.n_qubits}"
        )
    energies = h.diagonal()
    index = int(np.argmin(energies))
    return float(energies[index]), index


# -- Batched kernels -----------------------------------------------------------
#
# Same gate program as prepare_state, vectorized over a batch of parameter
# vectors. The trainer's quantum-energy bridge uses these; tests pin them to
# the single-state path.


def prepare_batch(circuit: AnsatzCircuit, thetas: np.ndarray) -> np.ndarray:
    """Statevectors for a [batch, parameter_count] matrix of angles."""
    thetas = np.asarray(thetas, dtype=np.float64)
    if thetas.ndim != 2 or thetas.shape[1] != circuit.parameter_count:
        raise ValueError(
            f"expected shape (batch, {circuit.parameter_count}), got {thetas.shape}"
        )
    n = circuit.n_qubits
    batch = thetas.shape[0]
    amps = np.zeros((batch, 1 << n), dtype=np.complex128)
    amps[:, 0] = 1.0
    pairs = circuit.entangler_pairs()
    for layer in range(circuit.repetitions + 1):
        base = layer * 2 * n
        for q in range(n):
            lo, hi = _pair_index(n, q)
            half = thetas[:, base + q] / 2.0
            c = np.cos(half)[:, None]
            s = np.sin(half)[:, None]
            a0 = amps[:, lo]
            a1 = amps[:, hi]
            amps[:, lo] = c * a0 - s * a1
            amps[:, hi] = s * a0 + c * a1
        for q in range(n):
            lo, hi = _pair_index(n, q)
            half = thetas[:, base + n + q] / 2.0
            phase = np.exp(1j * half)[:, None]
            amps[:, lo] *= phase.conjugate()
            amps[:, hi] *= phase
        if layer < circuit.repetitions:
            for control, target in pairs:
                src, dst = _cx_index(n, control, target)
                tmp = amps[:, src].copy()
                amps[:, src] = amps[:, dst]
                amps[:, dst] = tmp
    return amps


def expectation_batch(amps: np.ndarray, diagonals: np.ndarray) -> np.ndarray:
    """Per-row <psi|H|psi> for diagonal observables.

    `diagonals` is either one energy vector [2^n] shared by the batch or a
    per-row matrix [batch, 2^n].
    """
    probs = np.abs(amps) ** 2
    if diagonals.ndim == 1:
        return probs @ diagonals
    return np.sum(probs * diagonals, axis=1)


def gradient_batch(
    circuit: AnsatzCircuit, thetas: np.ndarray, diagonals: np.ndarray
) -> np.ndarray:
    """Parameter-shift gradients for every row of `thetas`, shape [batch, P].

    All 2P shifted circuits for all rows run as one stacked batch; the gate
    kernels are purely row-wise, so the values are identical to evaluating the
    shifts one at a time.
    """
    thetas = np.asarray(thetas, dtype=np.float64)
    batch, p = thetas.shape
    stacked = np.repeat(thetas[None, :, :], 2 * p, axis=0)
    for k in range(p):
        stacked[2 * k, :, k] += math.pi / 2.0
        stacked[2 * k + 1, :, k] -= math.pi / 2.0
    amps = prepare_batch(circuit, stacked.reshape(2 * p * batch, p))
    if diagonals.ndim == 1:
        energies = expectation_batch(amps, diagonals)
    else:
        energies = expectation_batch(amps, np.tile(diagonals, (2 * p, 1)))
    energies = energies.reshape(2 * p, batch)
    return ((energies[0::2] - energies[1::2]) / 2.0).T
