import dataclasses

import numpy as np
import pytest

from qganlab.ising import IsingSpec, build_class_hamiltonian, class_energy_table, class_hamiltonians
from qganlab.quantum import ground_state_energy

SPEC = IsingSpec()


def coupling_terms(h):
    return [t for t in h.terms if bin(t.z_mask).count("1") == 2]


def field_terms(h):
    return [t for t in h.terms if bin(t.z_mask).count("1") == 1]


def test_class_zero_and_nine_field_coefficients():
    for c, expected in ((0, -0.10), (9, -0.19)):
        fields = field_terms(build_class_hamiltonian(SPEC, c))
        assert len(fields) == 4
        for term in fields:
            assert abs(term.coefficient - expected) < 1e-15


def test_class_five_structure():
    h = build_class_hamiltonian(SPEC, 5)
    couplings = coupling_terms(h)
    fields = field_terms(h)
    assert len(couplings) == 3 and len(fields) == 4
    for term in couplings:
        assert term.coefficient == -1.0
    for term in fields:
        assert abs(term.coefficient - (-0.15)) < 1e-15


def test_linear_chain_edges():
    h = build_class_hamiltonian(SPEC, 0)
    masks = {t.z_mask for t in coupling_terms(h)}
    assert masks == {0b0011, 0b0110, 0b1100}


def test_ground_energies_match_closed_form_and_decrease():
    energies = []
    for c in range(SPEC.n_classes):
        energy, _ = ground_state_energy(build_class_hamiltonian(SPEC, c))
        expected = -SPEC.coupling * (SPEC.n_qubits - 1) - SPEC.n_qubits * SPEC.field(c)
        assert abs(energy - expected) < 1e-12
        energies.append(energy)
    assert all(a > b for a, b in zip(energies, energies[1:]))


def test_class_separation():
    energies = [ground_state_energy(h)[0] for h in class_hamiltonians(SPEC)]
    assert len(set(energies)) == SPEC.n_classes


def test_energy_table_matches_per_class_diagonals():
    table = class_energy_table(SPEC)
    assert table.shape == (10, 16)
    for c in range(10):
        np.testing.assert_array_equal(table[c], build_class_hamiltonian(SPEC, c).diagonal())


def test_hamiltonians_are_immutable():
    h = build_class_hamiltonian(SPEC, 3)
    with pytest.raises(dataclasses.FrozenInstanceError):
        h.n_qubits = 5
    with pytest.raises(dataclasses.FrozenInstanceError):
        h.terms[0].coefficient = 0.0
    diag = h.diagonal()
    with pytest.raises(ValueError):
        diag[0] = 99.0


def test_class_out_of_range():
    with pytest.raises(ValueError):
        build_class_hamiltonian(SPEC, 10)
    with pytest.raises(ValueError):
        build_class_hamiltonian(SPEC, -1)


def test_spec_validation():
    with pytest.raises(ValueError):
        IsingSpec(topology="all_to_all")
    with pytest.raises(ValueError):
        IsingSpec(n_qubits=1)


def test_field_rule_spans_documented_range():
    assert SPEC.field(0) == 0.1
    assert abs(SPEC.field(SPEC.n_classes - 1) - 0.19) < 1e-15
