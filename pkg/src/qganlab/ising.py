"""Class-specific ferromagnetic Ising Hamiltonians on a linear chain.

Each class label c gets H_c = -J * sum_<i,i+1> Z_i Z_{i+1} - h_c * sum_i Z_i
with a uniform local field h_c = h_global + c * delta_h, so the fields step
linearly across classes (defaults: 0.10 for class 0 up to 0.19 for class 9).
The Hamiltonians are built once and never change during training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quantum import Hamiltonian, PauliTerm


@dataclass(frozen=True)
class IsingSpec:
    """Construction constants for the per-class Hamiltonian family."""

    n_qubits: int = 4
    coupling: float = 1.0
    topology: str = "linear_chain"
    h_global: float = 0.1
    delta_h: float = 0.01
    n_classes: int = 10

    def __post_init__(self) -> None:
        if self.n_qubits < 2:
            raise ValueError("need at least two qubits for a chain")
        if self.topology != "linear_chain":
            raise ValueError(f"unsupported topology {self.topology!r}")
        if self.n_classes < 1:
            raise ValueError("need at least one class")

    def field(self, class_label: int) -> float:
        """Local field strength for one class."""
        if not 0 <= class_label < self.n_classes:
            raise ValueError(
                f"class {class_label} out of range [0, {self.n_classes})"
            )
        return self.h_global + class_label * self.delta_h


def build_class_hamiltonian(spec: IsingSpec, class_label: int) -> Hamiltonian:
    """H_c for one class: (n-1) chain couplings of -J plus n fields of -h_c."""
    h_c = spec.field(class_label)
    terms = [
        PauliTerm(-spec.coupling, (1 << q) | (1 << (q + 1)))
        for q in range(spec.n_qubits - 1)
    ]
    terms += [PauliTerm(-h_c, 1 << q) for q in range(spec.n_qubits)]
    return Hamiltonian(spec.n_qubits, tuple(terms))


def class_hamiltonians(spec: IsingSpec) -> tuple[Hamiltonian, ...]:
    return tuple(build_class_hamiltonian(spec, c) for c in range(spec.n_classes))


def class_energy_table(spec: IsingSpec) -> np.ndarray:
    """Basis-state energies for every class, shape [n_classes, 2^n]."""
    table = np.stack([h.diagonal() for h in class_hamiltonians(spec)])
    table.setflags(write=False)
    return table
