"""Independent reference implementations the tests check the package against.

Everything here is deliberately written from first principles (dense matrices,
explicit kron products, central finite differences) and stays independent of
the code paths it validates.
"""

from __future__ import annotations

import numpy as np


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def single_qubit_operator(u: np.ndarray, qubit: int, n: int) -> np.ndarray:
    """Embed a 2x2 gate on `qubit` (qubit 0 = least significant index bit)."""
    op = np.eye(1, dtype=complex)
    for q in reversed(range(n)):
        op = np.kron(op, u if q == qubit else np.eye(2, dtype=complex))
    return op


def cx_operator(control: int, target: int, n: int) -> np.ndarray:
    dim = 1 << n
    op = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        row = col ^ (((col >> control) & 1) << target)
        op[row, col] = 1.0
    return op


def dense_hamiltonian(n: int, terms: list[tuple[float, int]]) -> np.ndarray:
    """Diagonal matrix from (coefficient, z_mask) pairs; spin +1 for bit 0."""
    diag = np.zeros(1 << n)
    for b in range(1 << n):
        for coeff, mask in terms:
            sign = 1.0
            for q in range(n):
                if (mask >> q) & 1:
                    sign *= 1.0 - 2.0 * ((b >> q) & 1)
            diag[b] += coeff * sign
    return np.diag(diag)


def dense_ansatz_state(
    n: int, repetitions: int, entanglement: str, params: np.ndarray
) -> np.ndarray:
    """Matrix-product evaluation of the layered RY/RZ + CX program."""
    state = np.zeros(1 << n, dtype=complex)
    state[0] = 1.0
    pairs = [(q, q + 1) for q in range(n - 1)]
    if entanglement == "circular":
        pairs.append((n - 1, 0))
    for layer in range(repetitions + 1):
        base = layer * 2 * n
        for q in range(n):
            state = single_qubit_operator(ry_matrix(params[base + q]), q, n) @ state
        for q in range(n):
            state = single_qubit_operator(rz_matrix(params[base + n + q]), q, n) @ state
        if layer < repetitions:
            for control, target in pairs:
                state = cx_operator(control, target, n) @ state
    return state


def dense_expectation(state: np.ndarray, h: np.ndarray) -> float:
    return float(np.real(state.conj() @ h @ state))


def finite_difference_grads(make_loss, params, h: float = 1e-6) -> list[np.ndarray]:
    """Central finite differences of a scalar-loss closure w.r.t. each Tensor."""
    grads = []
    for p in params:
        grad = np.zeros_like(p.values)
        it = np.nditer(p.values, flags=["multi_index"])
        while not it.finished:
            i = it.multi_index
            original = p.values[i]
            p.values[i] = original + h
            up = make_loss().item()
            p.values[i] = original - h
            down = make_loss().item()
            p.values[i] = original
            grad[i] = (up - down) / (2.0 * h)
            it.iternext()
        grads.append(grad)
    return grads


def max_relative_error(analytic, numeric) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(np.abs(n).max(), 1.0)
        worst = max(worst, np.abs(a - n).max() / scale)
    return worst
