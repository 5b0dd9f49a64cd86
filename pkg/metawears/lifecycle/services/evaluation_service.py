import csv
import logging
import math
from dataclasses import dataclass, field
from typing import (Any, Callable, Dict, Iterable, List, Optional, Sequence,
                    Tuple)

import numpy as np
from scipy.special import betainc
from scipy.stats import rankdata

from ..engine.encoder import EncoderParams
from ..engine.prototypes import Prototypes, class_scores
from ..exceptions import (DegenerateInputError, InputError, NumericalError,
                          ProtocolError, ShapeError)
from ..models import Dataset, Role
from ..utils import derive_seed
from .dataset_service import EpisodeSpec, build_episode
from .meta_training_service import MetaTrainingService

logger = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = .05
JACOBI_MAX_SWEEPS = 100
JACOBI_TOLERANCE = 1e-13

PrototypeBuilder = Callable[[int], Prototypes]  # Iteration seed -> prototypes


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Mann-Whitney statistic, ties count half
    :param scores: Higher means more likely positive
    :param labels: 1 for positive, 0 for negative
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ShapeError(f'{scores.size} scores for {labels.size} labels')
    n_positive = int(labels.sum())
    n_negative = labels.size - n_positive
    if n_positive == 0 or n_negative == 0:
        raise InputError(f'AUC needs both classes, got positives={n_positive} negatives={n_negative}')
    ranks = rankdata(scores)  # Average ranks for ties
    rank_sum = ranks[labels].sum()
    return float((rank_sum - n_positive * (n_positive + 1) / 2) / (n_positive * n_negative))


@dataclass
class TTestResult:
    t_statistic: float
    p_value: float
    degrees_of_freedom: int
    mean: float

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVEL

    def to_dict(self) -> Dict[str, Any]:
        return {'t_statistic': self.t_statistic, 'p_value': self.p_value,
                'degrees_of_freedom': self.degrees_of_freedom, 'mean': self.mean, 'significant': self.significant}


def student_t_sf(t: float, df: int) -> float:
    """
    P(T > t) for a Student t distribution, through the regularized incomplete beta function
    """
    tail = .5 * betainc(df / 2., .5, df / (df + t * t))
    return float(tail if t > 0 else 1. - tail)


def one_sample_ttest_greater(deltas: Sequence[float]) -> TTestResult:
    """
    One sided test of H0: mean <= 0
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    n = deltas.size
    if n < 2:
        raise DegenerateInputError(f't-test needs at least 2 values, got {n}')
    std = deltas.std(ddof=1)
    if std == 0:
        raise DegenerateInputError('t-test values have zero variance')
    mean = float(deltas.mean())
    t = mean / (std / math.sqrt(n))
    return TTestResult(float(t), student_t_sf(t, n - 1), n - 1, mean)


@dataclass
class MetricsReport:
    aucs: List[float]
    seeds: List[int]
    config_fingerprint: str = ''
    baseline_aucs: Optional[List[float]] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if any(not 0 <= value <= 1 for value in self.aucs):
            raise NumericalError(f'AUC values out of [0, 1]: {self.aucs}')

    @property
    def mean(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def std(self) -> float:
        return float(np.std(self.aucs, ddof=1)) if len(self.aucs) > 1 else 0.

    @property
    def median(self) -> float:
        return float(np.median(self.aucs))

    @property
    def deltas(self) -> Optional[List[float]]:
        if self.baseline_aucs is None:
            return None
        return [value - baseline for value, baseline in zip(self.aucs, self.baseline_aucs)]

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'aucs': self.aucs,
            'seeds': self.seeds,
            'mean_auc': self.mean,
            'std_auc': self.std,
            'median_auc': self.median,
            'config_fingerprint': self.config_fingerprint,
        }
        if self.baseline_aucs is not None:
            data['baseline_aucs'] = self.baseline_aucs
            data['deltas'] = self.deltas
        data.update(self.extra)
        return data

    def write_csv(self, path: str):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['seed', 'auc'])
            for seed, value in zip(self.seeds, self.aucs):
                writer.writerow([seed, repr(value)])
            writer.writerow(['mean', repr(self.mean)])
            writer.writerow(['std', repr(self.std)])


# PCA
# ------------------------------------------------------------------------------
def jacobi_eigh(matrix: np.ndarray, tolerance: float = JACOBI_TOLERANCE,
                max_sweeps: int = JACOBI_MAX_SWEEPS) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cyclic Jacobi eigendecomposition of a symmetric matrix
    :return: eigenvalues (unsorted) and eigenvectors as columns
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ShapeError(f'Jacobi needs a square matrix, got {a.shape}')
    vectors = np.eye(n)
    scale = max(np.linalg.norm(a), np.finfo(np.float64).tiny)
    for _ in range(max_sweeps):
        off_diagonal = np.linalg.norm(a - np.diag(np.diag(a)))
        if off_diagonal <= tolerance * scale:
            return np.diag(a).copy(), vectors
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.:
                    continue
                theta = (a[q, q] - a[p, p]) / (2. * a[p, q])
                t = (1. if theta >= 0 else -1.) / (abs(theta) + math.sqrt(theta * theta + 1.))
                c = 1. / math.sqrt(t * t + 1.)
                s = t * c
                column_p, column_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * column_p - s * column_q
                a[:, q] = s * column_p + c * column_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vector_p, vector_q = vectors[:, p].copy(), vectors[:, q].copy()
                vectors[:, p] = c * vector_p - s * vector_q
                vectors[:, q] = s * vector_p + c * vector_q
    raise NumericalError(f'Jacobi eigendecomposition did not converge in {max_sweeps} sweeps')


@dataclass
class ProjectionRow:
    x: float
    y: float
    kind: str  # support, query, test or prototype
    label: str
    k: Optional[int] = None


@dataclass
class PcaProjection:
    components: np.ndarray  # (2, D), orthonormal rows
    mean: np.ndarray
    explained_variance: np.ndarray  # (2,), non increasing
    points: np.ndarray  # Projection of the fitted points, (n, 2)
    rows: List[ProjectionRow] = field(default_factory=list)

    def transform(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.mean) @ self.components.T

    def add_rows(self, points: np.ndarray, kind: str, labels: Sequence[str], k: Optional[int] = None):
        for (x, y), label in zip(self.transform(points), labels):
            self.rows.append(ProjectionRow(float(x), float(y), kind, label, k))

    def trajectory(self, label: str) -> List[ProjectionRow]:
        return [row for row in self.rows if row.kind == 'prototype' and row.label == label]

    def write_csv(self, path: str):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['x', 'y', 'kind', 'class', 'k'])
            for row in self.rows:
                writer.writerow([repr(row.x), repr(row.y), row.kind, row.label, '' if row.k is None else row.k])


def pca2(points: np.ndarray) -> PcaProjection:
    """
    Top two principal components of the sample covariance. Each component is signed so its largest magnitude
    entry is positive
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 3 or points.shape[1] < 2:
        raise InputError(f'PCA needs at least 3 points of dimension >= 2, got shape {points.shape}')
    mean = points.mean(axis=0)
    centered = points - mean
    covariance = centered.T @ centered / (points.shape[0] - 1)
    if not np.any(covariance):
        raise DegenerateInputError('PCA input has rank 0, every point is identical')
    eigenvalues, eigenvectors = jacobi_eigh(covariance)
    order = np.argsort(-eigenvalues, kind='stable')[:2]
    components = eigenvectors[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.
    explained = np.maximum(eigenvalues[order], 0.)
    return PcaProjection(components, mean, explained, centered @ components.T)


def binary_targets(dataset: Dataset, positive_class: str) -> np.ndarray:
    return np.array([1 if record.label == positive_class else 0 for record in dataset.records])


class EvaluationService:
    def __init__(self, meta_training_service: MetaTrainingService):
        self.meta_training_service = meta_training_service

    @property
    def episode_spec(self) -> EpisodeSpec:
        return self.meta_training_service.episode_spec

    @staticmethod
    def check_protocol(test_dataset: Dataset, training_patients: Iterable[str]):
        overlap = sorted(set(test_dataset.patients()) & set(training_patients))
        if overlap:
            raise ProtocolError(f'Test patients {overlap} were also used for training')
        wrong_role = sorted({record.record_id for record in test_dataset.records if record.role != Role.TEST})
        if wrong_role:
            raise ProtocolError(f'{len(wrong_role)} records are not tagged as test, e.g. {wrong_role[0]}')

    def score_dataset(self, test_features: np.ndarray, test_dataset: Dataset, prototypes: Prototypes) -> float:
        """
        AUC of the positive class (last class) probability
        """
        positive_class = prototypes.classes[-1]
        probabilities = class_scores(test_features, prototypes)
        return auc(probabilities[:, -1], binary_targets(test_dataset, positive_class))

    def meta_test(self, params: EncoderParams, build_prototypes: PrototypeBuilder, test_dataset: Dataset,
                  iterations: int = 10, seed: int = 0, training_patients: Iterable[str] = (),
                  config_fingerprint: str = '') -> MetricsReport:
        """
        :param build_prototypes: Fresh prototypes for an iteration seed, e.g. deployment support sampling
        :return: One AUC per iteration over every test record
        """
        if iterations < 1:
            raise InputError(f'iterations={iterations} must be positive')
        self.check_protocol(test_dataset, training_patients)
        test_features = self.meta_training_service.encode_records(params, test_dataset.records)
        seeds = [derive_seed(seed, 'meta-test', iteration) for iteration in range(iterations)]
        aucs = [self.score_dataset(test_features, test_dataset, build_prototypes(iteration_seed))
                for iteration_seed in seeds]
        report = MetricsReport(aucs, seeds, config_fingerprint)
        logger.info('Meta-test iterations=%d mean-auc=%.4f std=%.4f', iterations, report.mean, report.std)
        return report

    def prototype_trajectory(self, params: EncoderParams, dataset: Dataset, test_dataset: Dataset,
                             k_values: Sequence[int], seed: int, deploy_k: Optional[int] = None) -> PcaProjection:
        """
        Prototypes per number of new shots `k` (`k=0` are the deployment prototypes) projected on a PCA basis fit
        on train and test features
        """
        service = self.meta_training_service
        train_records = [record for record in dataset.records if record.role in (Role.TRAIN, Role.NEW)]
        train_features = service.encode_records(params, train_records)
        test_features = service.encode_records(params, test_dataset.records)
        projection = pca2(np.vstack([train_features, test_features]))
        projection.add_rows(train_features, 'support', [record.label for record in train_records])
        projection.add_rows(test_features, 'test', [record.label for record in test_dataset.records])
        for k in k_values:
            if k == 0:
                prototypes = service.build_prototypes_for_deployment(params, dataset, deploy_k or self.episode_spec.k,
                                                                     seed)
            else:
                prototypes = service.update_prototypes(params, dataset, k, seed)
            projection.add_rows(prototypes.vectors, 'prototype', prototypes.classes, k)
        return projection

    def episode_projection(self, params: EncoderParams, dataset: Dataset, spec: EpisodeSpec,
                           seed: int) -> PcaProjection:
        episode = build_episode(dataset, spec, np.random.default_rng(seed))
        service = self.meta_training_service
        support_records, query_records = episode.support_records(), episode.query_records()
        support_features = service.encode_records(params, support_records)
        query_features = service.encode_records(params, query_records)
        prototypes = service.prototypes_from_support(params, episode.support_set)
        projection = pca2(np.vstack([support_features, query_features]))
        projection.add_rows(support_features, 'support', [record.label for record in support_records])
        projection.add_rows(query_features, 'query', [record.label for record in query_records])
        projection.add_rows(prototypes.vectors, 'prototype', prototypes.classes, spec.k)
        return projection
