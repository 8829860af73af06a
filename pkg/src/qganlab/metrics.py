"""Evaluation metrics from a repo-trained frozen feature classifier.

All four quantities (external-classifier accuracy, Fréchet distance between
feature Gaussians, an Inception-Score analog, and intra-class feature
diversity) are computed against one dense classifier trained on the desk
dataset and then frozen. Its 256-unit penultimate layer is the feature
embedding; nothing here depends on pretrained third-party networks.

A metric value is only trusted when the frozen classifier holds at least
MIN_CLASSIFIER_ACCURACY on the held-out test split.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import nn
from .autodiff import Tensor, backward, cross_entropy, relu
from .data import Dataset
from .seeding import stream

FEATURE_DIM = 256
MIN_CLASSIFIER_ACCURACY = 0.95

# A generator, as far as metrics are concerned: labels + stream -> flat images.
GenerateFn = Callable[[np.ndarray, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class GaussianSummary:
    """Sufficient statistics (mean, covariance) of a feature batch."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise ValueError(f"covariance shape {self.cov.shape} != ({d}, {d})")
        if np.abs(self.cov - self.cov.T).max() > 1e-10:
            raise ValueError("covariance is not symmetric within 1e-10")


def summarize_features(features: np.ndarray) -> GaussianSummary:
    if len(features) < 2:
        raise ValueError("need at least two feature rows for a covariance")
    cov = np.cov(features, rowvar=False)
    cov = (cov + cov.T) / 2.0
    return GaussianSummary(features.mean(axis=0), cov)


def _psd_sqrtm(matrix: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(matrix)
    w = np.where(w < 0.0, 0.0, w)
    return (v * np.sqrt(w)) @ v.T


def frechet_distance(a: GaussianSummary, b: GaussianSummary, eps: float = 1e-6) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    Both covariances get eps*I added first; the matrix square root goes through
    the symmetric eigendecomposition of S_a^(1/2) S_b S_a^(1/2), with residual
    negative eigenvalues clamped to zero.
    """
    if a.mean.shape != b.mean.shape:
        raise ValueError(f"dimension mismatch: {a.mean.shape} vs {b.mean.shape}")
    d = a.mean.shape[0]
    s_a = a.cov + eps * np.eye(d)
    s_b = b.cov + eps * np.eye(d)
    root_a = _psd_sqrtm(s_a)
    inner = root_a @ s_b @ root_a
    inner = (inner + inner.T) / 2.0
    w = np.linalg.eigvalsh(inner)
    w = np.where(w < 0.0, 0.0, w)
    diff = a.mean - b.mean
    fid = float(diff @ diff + np.trace(s_a) + np.trace(s_b) - 2.0 * np.sum(np.sqrt(w)))
    return max(fid, 0.0)


class FeatureClassifier:
    """Frozen dense classifier: pixels -> 256 relu features -> class logits."""

    def __init__(
        self,
        w1: np.ndarray,
        b1: np.ndarray,
        w2: np.ndarray,
        b2: np.ndarray,
        test_accuracy: float,
        n_classes: int,
    ):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        self.test_accuracy = float(test_accuracy)
        self.n_classes = n_classes
        self.input_dim = w1.shape[0]
        self.frozen = True

    @staticmethod
    def _flat(images: np.ndarray) -> np.ndarray:
        return images.reshape(len(images), -1)

    def features(self, images: np.ndarray) -> np.ndarray:
        return np.maximum(self._flat(images) @ self.w1 + self.b1, 0.0)

    def logits(self, images: np.ndarray) -> np.ndarray:
        return self.features(images) @ self.w2 + self.b2

    def posteriors(self, images: np.ndarray) -> np.ndarray:
        logits = self.logits(images)
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, images: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(images), axis=1)

    def save(self, path: str | Path) -> None:
        nn.save_checkpoint(
            path,
            {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2},
            extra={"test_accuracy": self.test_accuracy, "n_classes": self.n_classes},
        )

    @classmethod
    def load(cls, path: str | Path) -> "FeatureClassifier":
        params, extra = nn.load_checkpoint(path)
        return cls(
            params["w1"], params["b1"], params["w2"], params["b2"],
            extra["test_accuracy"], int(extra["n_classes"]),
        )


def train_feature_classifier(
    train: Dataset,
    test: Dataset,
    seed: int,
    epochs: int = 6,
    batch_size: int = 128,
    learning_rate: float = 1e-3,
) -> FeatureClassifier:
    """Train the metric classifier on the desk dataset, then freeze it."""
    rng = stream(seed, "classifier")
    flat_train = train.images.reshape(len(train), -1)
    flat_test = test.images.reshape(len(test), -1)
    input_dim = flat_train.shape[1]

    hidden = nn.Dense(rng, input_dim, FEATURE_DIM, "clf.hidden")
    head = nn.Dense(rng, FEATURE_DIM, train.n_classes, "clf.head")
    params = {**hidden.parameters(), **head.parameters()}
    opt = nn.AdamState(learning_rate=learning_rate, beta1=0.9, beta2=0.999)

    for _ in range(epochs):
        order = rng.permutation(len(train))
        for start in range(0, len(train) - batch_size + 1, batch_size):
            idx = order[start : start + batch_size]
            x = Tensor(flat_train[idx])
            logits = head(relu(hidden(x)))
            loss = cross_entropy(logits, train.labels[idx])
            nn.zero_grads(params)
            backward(loss)
            nn.adam_step(opt, params)

    w1, b1 = hidden.weight.values, hidden.bias.values
    w2, b2 = head.weight.values, head.bias.values
    preds = np.argmax(np.maximum(flat_test @ w1 + b1, 0.0) @ w2 + b2, axis=1)
    accuracy = float(np.mean(preds == test.labels))
    return FeatureClassifier(w1, b1, w2, b2, accuracy, train.n_classes)


def classifier_accuracy(
    classifier: FeatureClassifier,
    generate: GenerateFn,
    rng: np.random.Generator,
    n_samples: int = 500,
) -> float:
    """Fraction of generated samples whose argmax posterior matches the label."""
    if n_samples == 0:
        warnings.warn("classifier_accuracy over zero samples is defined as 0")
        return 0.0
    labels = rng.integers(0, classifier.n_classes, n_samples)
    images = generate(labels, rng)
    return float(np.mean(classifier.predict(images) == labels))


def inception_score_analog(
    classifier: FeatureClassifier,
    generate: GenerateFn,
    rng: np.random.Generator,
    n_samples: int = 1000,
    splits: int = 10,
) -> float:
    """Mean over splits of exp(mean_x KL(p(y|x) || mean_x p(y|x)))."""
    labels = rng.integers(0, classifier.n_classes, n_samples)
    posteriors = classifier.posteriors(generate(labels, rng))
    scores = []
    for chunk in np.array_split(posteriors, splits):
        marginal = chunk.mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            # 0 log 0 = 0: fully saturated posteriors underflow to exact zeros
            terms = np.where(chunk > 0.0, chunk * (np.log(chunk) - np.log(marginal)), 0.0)
        kl = np.sum(terms, axis=1)
        scores.append(np.exp(np.mean(kl)))
    return float(np.mean(scores))


def intra_class_diversity(
    classifier: FeatureClassifier,
    generate: GenerateFn,
    rng: np.random.Generator,
    per_class: int = 100,
) -> float:
    """Mean pairwise distance of unit-normalized features within each class,
    scaled by 1/sqrt(dim) and averaged across classes."""
    if per_class < 2:
        raise ValueError("per_class must be at least 2 for pairwise distances")
    per_class_means = []
    for c in range(classifier.n_classes):
        labels = np.full(per_class, c, dtype=np.int64)
        feats = classifier.features(generate(labels, rng))
        norms = np.linalg.norm(feats, axis=1, keepdims=True)
        feats = feats / np.maximum(norms, 1e-12)
        diffs = feats[:, None, :] - feats[None, :, :]
        dists = np.sqrt(np.sum(diffs * diffs, axis=2))
        iu = np.triu_indices(per_class, k=1)
        per_class_means.append(np.mean(dists[iu]) / np.sqrt(feats.shape[1]))
    return float(np.mean(per_class_means))


class MetricEvaluator:
    """Bundles the frozen classifier and the real-data reference summary."""

    def __init__(
        self,
        classifier: FeatureClassifier,
        reference: Dataset,
        n_accuracy: int = 500,
        n_fid: int = 1000,
        n_is: int = 1000,
        is_splits: int = 10,
        diversity_per_class: int = 100,
        min_accuracy: float = MIN_CLASSIFIER_ACCURACY,
    ):
        if classifier.test_accuracy < min_accuracy:
            raise ValueError(
                f"classifier test accuracy {classifier.test_accuracy:.4f} is below "
                f"the {min_accuracy} floor; metrics would not be trustworthy"
            )
        self.classifier = classifier
        self.reference_summary = summarize_features(classifier.features(reference.images))
        self.n_accuracy = n_accuracy
        self.n_fid = n_fid
        self.n_is = n_is
        self.is_splits = is_splits
        self.diversity_per_class = diversity_per_class

    def evaluate(self, generate: GenerateFn, rng: np.random.Generator) -> dict[str, float]:
        accuracy = classifier_accuracy(self.classifier, generate, rng, self.n_accuracy)
        fid_labels = rng.integers(0, self.classifier.n_classes, self.n_fid)
        fid_feats = self.classifier.features(generate(fid_labels, rng))
        fid = frechet_distance(summarize_features(fid_feats), self.reference_summary)
        score = inception_score_analog(
            self.classifier, generate, rng, self.n_is, self.is_splits
        )
        diversity = intra_class_diversity(
            self.classifier, generate, rng, self.diversity_per_class
        )
        return {
            "accuracy": accuracy,
            "fid": fid,
            "inception_score": score,
            "diversity": diversity,
        }
