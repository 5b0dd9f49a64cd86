"""
Prototype math: class means of support features, softmax over negative squared distances, episode loss and
its gradients with respect to query and support features.
"""
from dataclasses import dataclass
from typing import List, Mapping, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from ..exceptions import InputError, NumericalError, ShapeError
from .encoder import FeatureVector


@dataclass(frozen=True)
class Prototypes:
    classes: Tuple[str, ...]
    vectors: np.ndarray  # (n_classes, D)

    def __post_init__(self):
        object.__setattr__(self, 'classes', tuple(self.classes))
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(self.classes):
            raise ShapeError(f'Prototype matrix {vectors.shape} does not match {len(self.classes)} classes')
        if not np.all(np.isfinite(vectors)):
            raise NumericalError('Prototypes contain non finite values')
        object.__setattr__(self, 'vectors', vectors)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def feature_dim(self) -> int:
        return self.vectors.shape[1]

    def index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError as e:
            raise InputError(f'Label={label} is not one of the classes {list(self.classes)}') from e

    def __getitem__(self, label: str) -> np.ndarray:
        return self.vectors[self.index(label)]

    def __eq__(self, other) -> bool:
        return (isinstance(other, Prototypes) and self.classes == other.classes
                and np.array_equal(self.vectors, other.vectors))


@dataclass
class EpisodeResult:
    loss: float
    probabilities: np.ndarray  # (|Q|, n_classes)
    correct_count: int
    label_indexes: np.ndarray

    @property
    def accuracy(self) -> float:
        return self.correct_count / len(self.label_indexes)


def compute_prototypes(features: Mapping[str, Sequence[FeatureVector]]) -> Prototypes:
    """
    :param features: Feature vectors per class, mapping order is the class order
    :return: Arithmetic mean per class
    """
    vectors = []
    feature_dim = None
    for label, class_features in features.items():
        class_features = np.asarray(class_features, dtype=np.float64)
        if class_features.size == 0:
            raise InputError(f'Class={label} has no support features')
        if class_features.ndim != 2:
            raise ShapeError(f'Class={label} features must be a (k, D) matrix, got {class_features.shape}')
        if feature_dim is not None and class_features.shape[1] != feature_dim:
            raise ShapeError(f'Class={label} has D={class_features.shape[1]}, expected D={feature_dim}')
        feature_dim = class_features.shape[1]
        vectors.append(class_features.mean(axis=0))
    if not vectors:
        raise InputError('Cannot compute prototypes without classes')
    return Prototypes(tuple(features.keys()), np.stack(vectors))


def squared_distances(features: np.ndarray, prototypes: Prototypes) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != prototypes.feature_dim:
        raise ShapeError(f'Feature length {features.shape[-1]} does not match prototypes D={prototypes.feature_dim}')
    differences = features[..., np.newaxis, :] - prototypes.vectors
    return np.sum(differences * differences, axis=-1)


def class_log_scores(features: np.ndarray, prototypes: Prototypes) -> np.ndarray:
    logits = -squared_distances(features, prototypes)
    return logits - logsumexp(logits, axis=-1, keepdims=True)


def class_scores(features: np.ndarray, prototypes: Prototypes) -> np.ndarray:
    """
    Softmax over the negative squared euclidean distances to every prototype
    :param features: One feature vector or a `(n, D)` batch
    :return: Probability per class (`(n, n_classes)` for a batch)
    """
    logits = -squared_distances(features, prototypes)
    logits = logits - logits.max(axis=-1, keepdims=True)
    exponentials = np.exp(logits)
    return exponentials / exponentials.sum(axis=-1, keepdims=True)


def predict(probabilities: np.ndarray) -> np.ndarray:
    # `np.argmax` returns the first maximum, so ties go to the lowest class index
    return np.argmax(probabilities, axis=-1)


def label_indexes(labels: Sequence[str], prototypes: Prototypes) -> np.ndarray:
    return np.array([prototypes.index(label) for label in labels], dtype=np.int64)


def episode_loss(query_features: np.ndarray, query_labels: Sequence[str], prototypes: Prototypes) -> EpisodeResult:
    """
    Mean negative log probability of the true class over the query set
    """
    query_features = np.atleast_2d(np.asarray(query_features, dtype=np.float64))
    if len(query_labels) == 0:
        raise InputError('Query set is empty')
    if len(query_labels) != query_features.shape[0]:
        raise ShapeError(f'{len(query_labels)} labels for {query_features.shape[0]} query features')
    indexes = label_indexes(query_labels, prototypes)
    log_probabilities = class_log_scores(query_features, prototypes)
    rows = np.arange(len(indexes))
    loss = float(-log_probabilities[rows, indexes].mean())
    probabilities = class_scores(query_features, prototypes)
    correct_count = int(np.count_nonzero(predict(probabilities) == indexes))
    return EpisodeResult(loss, probabilities, correct_count, indexes)


def episode_loss_gradients(query_features: np.ndarray, result: EpisodeResult, prototypes: Prototypes,
                           support_counts: Sequence[int]) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Gradients of the episode loss with respect to the query features and, through the class means, to every
    support feature
    :param support_counts: Number of support features per class, in class order
    :return: dL/dquery `(|Q|, D)` and one `(D,)` gradient per class shared by every support feature of the class
    """
    query_features = np.atleast_2d(np.asarray(query_features, dtype=np.float64))
    n_query = query_features.shape[0]
    one_hot = np.zeros_like(result.probabilities)
    one_hot[np.arange(n_query), result.label_indexes] = 1.
    logit_grads = (result.probabilities - one_hot) / n_query  # dL/d(-distance)

    centers = prototypes.vectors
    # d(-|q - c|^2)/dq = -2(q - c) and d(-|q - c|^2)/dc = 2(q - c)
    query_grads = -2. * (query_features * logit_grads.sum(axis=1, keepdims=True) - logit_grads @ centers)
    prototype_grads = 2. * (logit_grads.T @ query_features - centers * logit_grads.sum(axis=0)[:, np.newaxis])
    support_grads = [prototype_grads[n] / count for n, count in enumerate(support_counts)]
    return query_grads, support_grads
