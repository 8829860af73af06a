"""Interchangeable per-sample energy providers for the generator objective.

Five variants sit behind one interface: the exact quantum expectation (VQE),
an MLP pseudo-energy, a learnable per-class bias, frozen per-class random
noise, and no regularizer at all. All variants that consume the latent input
take the same element-wise product of noise and class embedding; the embedding
table is shared with the generator, so gradients from a differentiable energy
flow back into the generator's class conditioning as well as into the
provider's own weights.

The quantum pathway is differentiable end to end: the angle network output
enters a tape op whose backward applies the parameter-shift rule per sample
and chains it into the upstream gradients.
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor, custom_op, elementwise_multiply, embedding_lookup, relu, reshape, tanh
from .ising import IsingSpec, class_energy_table
from .nn import Dense
from .quantum import AnsatzCircuit, expectation_batch, gradient_batch, prepare_batch
from .seeding import stream

ENERGY_SOURCE_KINDS = ("vqe", "mlp", "bias", "noise", "none")

NOISE_LOW, NOISE_HIGH = 0.1, 0.2
BIAS_INIT = 0.15  # midpoint of the frozen-noise range, scale-matched


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"class label out of range [0, {n_classes})")
    return labels


class AngleProducer:
    """Maps (noise * class embedding) to circuit angles in [-pi, pi].

    Two dense layers (latent -> 64 -> parameter_count); the tanh output scaled
    by pi keeps every angle bounded, which keeps parameter-shift well behaved.
    """

    HIDDEN = 64

    def __init__(self, rng: np.random.Generator, latent_dim: int, parameter_count: int,
                 class_embedding: Tensor):
        self.class_embedding = class_embedding
        self.hidden = Dense(rng, latent_dim, self.HIDDEN, "angle.hidden")
        self.out = Dense(rng, self.HIDDEN, parameter_count, "angle.out")

    def __call__(self, z: Tensor, labels: np.ndarray) -> Tensor:
        x = elementwise_multiply(z, embedding_lookup(self.class_embedding, labels))
        return math.pi * tanh(self.out(relu(self.hidden(x))))

    def parameters(self) -> dict[str, Tensor]:
        return {**self.hidden.parameters(), **self.out.parameters()}


def quantum_energy(theta: Tensor, labels: np.ndarray, circuit: AnsatzCircuit,
                   energy_table: np.ndarray) -> Tensor:
    """Per-sample <psi(theta_b)|H_{c_b}|psi(theta_b)> with parameter-shift backward."""
    diagonals = energy_table[labels]
    values = expectation_batch(prepare_batch(circuit, theta.values), diagonals)
    theta_values = theta.values.copy()

    def grad_fn(g: np.ndarray) -> None:
        jac = gradient_batch(circuit, theta_values, diagonals)
        theta._accumulate(g[:, None] * jac)

    return custom_op(values, (theta,), grad_fn)


class EnergySource:
    """Common surface: per-sample differentiable energies plus capacity bookkeeping."""

    kind: str

    def __init__(self, n_classes: int):
        self.n_classes = n_classes

    def energy(self, z: Tensor, labels: np.ndarray) -> Tensor:
        raise NotImplementedError

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def parameter_count(self) -> int:
        return sum(p.values.size for p in self.parameters().values())


class VqeEnergy(EnergySource):
    """Exact statevector expectation of the class Hamiltonian at produced angles."""

    kind = "vqe"

    def __init__(self, rng: np.random.Generator, latent_dim: int, class_embedding: Tensor,
                 ising_spec: IsingSpec, circuit: AnsatzCircuit):
        super().__init__(ising_spec.n_classes)
        if circuit.n_qubits != ising_spec.n_qubits:
            raise ValueError("ansatz and Hamiltonian qubit counts differ")
        self.ising_spec = ising_spec
        self.circuit = circuit
        self.energy_table = class_energy_table(ising_spec)
        self.producer = AngleProducer(rng, latent_dim, circuit.parameter_count, class_embedding)

    def energy(self, z: Tensor, labels: np.ndarray) -> Tensor:
        labels = _check_labels(labels, self.n_classes)
        theta = self.producer(z, labels)
        return quantum_energy(theta, labels, self.circuit, self.energy_table)

    def parameters(self) -> dict[str, Tensor]:
        return self.producer.parameters()


class MlpEnergy(EnergySource):
    """Three dense layers (64 hidden units, relu) emitting a scalar pseudo-energy."""

    kind = "mlp"
    HIDDEN = 64

    def __init__(self, rng: np.random.Generator, latent_dim: int, class_embedding: Tensor,
                 n_classes: int):
        super().__init__(n_classes)
        self.class_embedding = class_embedding
        self.fc1 = Dense(rng, latent_dim, self.HIDDEN, "menergy.fc1")
        self.fc2 = Dense(rng, self.HIDDEN, self.HIDDEN, "menergy.fc2")
        self.out = Dense(rng, self.HIDDEN, 1, "menergy.out")

    def energy(self, z: Tensor, labels: np.ndarray) -> Tensor:
        labels = _check_labels(labels, self.n_classes)
        x = elementwise_multiply(z, embedding_lookup(self.class_embedding, labels))
        scalar = self.out(relu(self.fc2(relu(self.fc1(x)))))
        return reshape(scalar, (len(labels),))

    def parameters(self) -> dict[str, Tensor]:
        return {**self.fc1.parameters(), **self.fc2.parameters(), **self.out.parameters()}


class LearnedBias(EnergySource):
    """A trainable scalar per class; gradients touch nothing but the bias table."""

    kind = "bias"

    def __init__(self, n_classes: int):
        super().__init__(n_classes)
        self.table = Tensor(np.full((n_classes, 1), BIAS_INIT), requires_grad=True)

    def energy(self, z: Tensor, labels: np.ndarray) -> Tensor:
        labels = _check_labels(labels, self.n_classes)
        return reshape(embedding_lookup(self.table, labels), (len(labels),))

    def parameters(self) -> dict[str, Tensor]:
        return {"bias.table": self.table}


class RandomNoiseEnergy(EnergySource):
    """A frozen uniform draw in [0.1, 0.2) per class; zero gradient by construction."""

    kind = "noise"

    def __init__(self, rng: np.random.Generator, n_classes: int):
        super().__init__(n_classes)
        self.values = NOISE_LOW + (NOISE_HIGH - NOISE_LOW) * rng.random(n_classes)
        self.values.setflags(write=False)

    def energy(self, z: Tensor, labels: np.ndarray) -> Tensor:
        labels = _check_labels(labels, self.n_classes)
        return Tensor(self.values[labels])


class NoRegularizer(EnergySource):
    """Exact zero with zero gradient."""

    kind = "none"

    def energy(self, z: Tensor, labels: np.ndarray) -> Tensor:
        labels = _check_labels(labels, self.n_classes)
        return Tensor(np.zeros(len(labels)))


def make_energy_source(
    kind: str,
    *,
    seed: int,
    latent_dim: int,
    n_classes: int,
    class_embedding: Tensor,
    ising_spec: IsingSpec | None = None,
    circuit: AnsatzCircuit | None = None,
) -> EnergySource:
    """Build one variant, drawing its init from the run's domain-separated streams.

    Weight-bearing variants draw from the "energy" stream and the frozen noise
    table from "rnoise", so no variant can perturb the shared init/data/latent
    streams of the run.
    """
    if kind == "vqe":
        if ising_spec is None or circuit is None:
            raise ValueError("vqe needs an IsingSpec and an AnsatzCircuit")
        return VqeEnergy(stream(seed, "energy"), latent_dim, class_embedding, ising_spec, circuit)
    if kind == "mlp":
        return MlpEnergy(stream(seed, "energy"), latent_dim, class_embedding, n_classes)
    if kind == "bias":
        return LearnedBias(n_classes)
    if kind == "noise":
        return RandomNoiseEnergy(stream(seed, "rnoise"), n_classes)
    if kind == "none":
        return NoRegularizer(n_classes)
    raise ValueError(f"unknown energy source {kind!r}; expected one of {ENERGY_SOURCE_KINDS}")
