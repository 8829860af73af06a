"""Class-conditional generator and two-headed discriminator (dense backbones)."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, elementwise_multiply, no_grad, relu, tanh
from .nn import Dense, Embedding


class Generator:
    """Noise * class-embedding product through a dense stack, tanh pixels in [-1, 1]."""

    def __init__(self, rng: np.random.Generator, latent_dim: int, n_classes: int, image_dim: int):
        self.latent_dim = latent_dim
        self.n_classes = n_classes
        self.image_dim = image_dim
        self.class_embedding = Embedding(rng, n_classes, latent_dim, "gen.emb")
        self.fc1 = Dense(rng, latent_dim, 256, "gen.fc1")
        self.fc2 = Dense(rng, 256, 512, "gen.fc2")
        self.out = Dense(rng, 512, image_dim, "gen.out")

    def __call__(self, z: Tensor, labels: np.ndarray) -> Tensor:
        x = elementwise_multiply(z, self.class_embedding(labels))
        h = relu(self.fc2(relu(self.fc1(x))))
        return tanh(self.out(h))

    def sample(self, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Tape-free flat images for metric evaluation."""
        z = Tensor(rng.standard_normal((len(labels), self.latent_dim)))
        with no_grad():
            return self(z, labels).values

    def parameters(self) -> dict[str, Tensor]:
        return {
            **self.class_embedding.parameters(),
            **self.fc1.parameters(),
            **self.fc2.parameters(),
            **self.out.parameters(),
        }


class Discriminator:
    """Shared dense trunk with a real/fake logit head and a class-logits head."""

    def __init__(self, rng: np.random.Generator, image_dim: int, n_classes: int):
        self.fc1 = Dense(rng, image_dim, 512, "disc.fc1")
        self.fc2 = Dense(rng, 512, 256, "disc.fc2")
        self.source_head = Dense(rng, 256, 1, "disc.src")
        self.class_head = Dense(rng, 256, n_classes, "disc.cls")

    def __call__(self, images: Tensor) -> tuple[Tensor, Tensor]:
        h = relu(self.fc2(relu(self.fc1(images))))
        return self.source_head(h), self.class_head(h)

    def parameters(self) -> dict[str, Tensor]:
        return {
            **self.fc1.parameters(),
            **self.fc2.parameters(),
            **self.source_head.parameters(),
            **self.class_head.parameters(),
        }
