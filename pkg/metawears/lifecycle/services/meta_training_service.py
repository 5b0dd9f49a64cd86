import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import (Any, Callable, Dict, List, Mapping, Optional, Sequence,
                    Tuple)

import numpy as np

from ..engine.encoder import (EncoderParams, ParamGrads, backward, encode,
                              sgd_step)
from ..engine.prototypes import (EpisodeResult, Prototypes, class_scores,
                                 compute_prototypes, episode_loss,
                                 episode_loss_gradients, predict)
from ..exceptions import ConfigurationError, SamplingError
from ..models import Dataset, Record, Signal
from ..utils import get_rng
from .dataset_service import (Episode, EpisodeSpec, SupportSet, build_episode,
                              reconstruct_support_with_new, sample_support,
                              split_validation)
from .preprocess_service import PreprocessService

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    episodes_per_epoch: int = 100
    max_epochs: int = 30
    patience: int = 5
    lr: float = 1e-2
    momentum: float = .9
    seed: int = 0
    validation_fraction: float = .2
    validation_episodes: int = 20

    def __post_init__(self):
        for name in ('episodes_per_epoch', 'max_epochs', 'patience', 'validation_episodes'):
            if getattr(self, name) < 1:
                raise ConfigurationError(f'Train {name}={getattr(self, name)} must be positive')
        if self.lr < 0:
            raise ConfigurationError(f'Learning rate={self.lr} cannot be negative')
        if not 0 <= self.momentum < 1:
            raise ConfigurationError(f'Momentum={self.momentum} must be in [0, 1)')
        if not 0 < self.validation_fraction < 1:
            raise ConfigurationError(f'Validation fraction={self.validation_fraction} must be in (0, 1)')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainingHistory:
    epoch_losses: List[float] = field(default_factory=list)
    validation_losses: List[float] = field(default_factory=list)
    best_epoch: Optional[int] = None  # 1-based
    stopped_early: bool = False

    def write_csv(self, path: str):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['epoch', 'train_loss', 'validation_loss'])
            for epoch, loss in enumerate(self.epoch_losses, start=1):
                validation = self.validation_losses[epoch - 1] if epoch <= len(self.validation_losses) else None
                writer.writerow([epoch, repr(loss), '' if validation is None else repr(validation)])


@dataclass
class FineTuneResult:
    params: EncoderParams
    best_epoch: int
    history: TrainingHistory


@dataclass
class InferenceResult:
    probabilities: np.ndarray
    predicted_index: int
    predicted_class: str

    def to_dict(self, classes: Sequence[str]) -> Dict[str, Any]:
        return {
            'probabilities': {label: float(p) for label, p in zip(classes, self.probabilities)},
            'predicted_class': self.predicted_class,
            'predicted_index': self.predicted_index,
        }


class EarlyStopping:
    """
    Tracks the best validation loss, `should_stop` once it has not improved for `patience` consecutive epochs
    """
    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = 0
        self.epochs_without_improvement = 0

    def update(self, epoch: int, loss: float) -> bool:
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.epochs_without_improvement = 0
            return True
        self.epochs_without_improvement += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.epochs_without_improvement >= self.patience


def episode_objective(params: EncoderParams, support_inputs: Mapping[str, np.ndarray], query_inputs: np.ndarray,
                      query_labels: Sequence[str]) -> Tuple[EpisodeResult, ParamGrads]:
    """
    Loss of one episode and its exact gradient. Prototypes are means of encoded support inputs, so the gradient
    flows through them back to every support input as well as through the query features
    """
    classes = list(support_inputs.keys())
    counts = [len(support_inputs[label]) for label in classes]
    stacked = np.vstack([np.asarray(support_inputs[label], dtype=np.float64) for label in classes]
                        + [np.asarray(query_inputs, dtype=np.float64)])
    features = encode(params, stacked)
    n_support = sum(counts)
    offsets = np.cumsum([0] + counts)
    support_features = {label: features[offsets[i]:offsets[i + 1]] for i, label in enumerate(classes)}
    query_features = features[n_support:]

    prototypes = compute_prototypes(support_features)
    result = episode_loss(query_features, query_labels, prototypes)
    query_grads, support_grads = episode_loss_gradients(query_features, result, prototypes, counts)
    upstream = np.vstack([np.tile(grad, (count, 1)) for grad, count in zip(support_grads, counts)] + [query_grads])
    return result, backward(params, stacked, upstream)


class MetaTrainingService:
    def __init__(self, preprocess_service: PreprocessService, episode_spec: EpisodeSpec):
        self.preprocess_service = preprocess_service
        self.episode_spec = episode_spec

    def encode_records(self, params: EncoderParams, records: Sequence[Record]) -> np.ndarray:
        return encode(params, self.preprocess_service.get_inputs(records))

    def support_inputs(self, support: Mapping[str, Sequence[Record]]) -> Dict[str, np.ndarray]:
        return {label: self.preprocess_service.get_inputs(records) for label, records in support.items()}

    def run_meta_train_episode(self, params: EncoderParams, dataset: Dataset, spec: Optional[EpisodeSpec] = None,
                               rng: Optional[np.random.Generator] = None) -> Tuple[EpisodeResult, ParamGrads]:
        episode = build_episode(dataset, spec or self.episode_spec, rng)
        return self.run_episode(params, episode)

    def run_episode(self, params: EncoderParams, episode: Episode) -> Tuple[EpisodeResult, ParamGrads]:
        query_records = episode.query_records()
        return episode_objective(params, self.support_inputs(episode.support),
                                 self.preprocess_service.get_inputs(query_records),
                                 [record.label for record in query_records])

    def episode_result(self, params: EncoderParams, episode: Episode) -> EpisodeResult:
        support_features = {label: self.encode_records(params, records) for label, records in episode.support.items()}
        query_records = episode.query_records()
        return episode_loss(self.encode_records(params, query_records), [record.label for record in query_records],
                            compute_prototypes(support_features))

    def train_epoch(self, params: EncoderParams, velocity: ParamGrads, dataset: Dataset, config: TrainConfig,
                    epoch: int, stream: str) -> Tuple[EncoderParams, ParamGrads, float]:
        rng = get_rng(config.seed, stream, epoch)
        losses = []
        for _ in range(config.episodes_per_epoch):
            result, grads = self.run_meta_train_episode(params, dataset, rng=rng)
            params, velocity = sgd_step(params, grads, config.lr, config.momentum, velocity)
            losses.append(result.loss)
        return params, velocity, float(np.mean(losses))

    def meta_train(self, params: EncoderParams, dataset: Dataset,
                   config: TrainConfig) -> Tuple[EncoderParams, TrainingHistory]:
        """
        Episodic training for `max_epochs` epochs, one SGD step per episode
        """
        history = TrainingHistory()
        velocity = ParamGrads.zeros_like(params)
        for epoch in range(1, config.max_epochs + 1):
            params, velocity, loss = self.train_epoch(params, velocity, dataset, config, epoch, 'meta-train')
            history.epoch_losses.append(loss)
            logger.info('Meta-train epoch=%d mean-loss=%.5f', epoch, loss)
        return params, history

    def validation_set(self, validation_part: Dataset, config: TrainConfig) -> List[Episode]:
        episodes = []
        for index in range(config.validation_episodes):
            try:
                episodes.append(build_episode(validation_part, self.episode_spec,
                                              get_rng(config.seed, 'validation-episode', index)))
            except SamplingError as e:
                logger.warning('Cannot sample validation episode=%d: %s', index, e)
        if not episodes:
            raise SamplingError(f'No validation episode could be sampled from patients={validation_part.patients()}')
        return episodes

    def validation_loss(self, params: EncoderParams, episodes: Sequence[Episode]) -> float:
        return float(np.mean([self.episode_result(params, episode).loss for episode in episodes]))

    def fine_tune(self, params: EncoderParams, dataset: Dataset, config: TrainConfig,
                  augment: Optional[Callable[[Dataset], Dataset]] = None) -> FineTuneResult:
        """
        Train on the train part of a patient-disjoint split and early stop on the mean loss of a fixed set of
        validation episodes
        :param augment: Applied to the train part only, validation patients never see synthetic records
        :return: Parameters of the best validation epoch
        """
        train_part, validation_part = split_validation(dataset, config.validation_fraction, config.seed)
        if augment is not None:
            train_part = augment(train_part)
        validation_episodes = self.validation_set(validation_part, config)
        history = TrainingHistory()
        early_stopping = EarlyStopping(config.patience)
        velocity = ParamGrads.zeros_like(params)
        best_params = params.copy()
        for epoch in range(1, config.max_epochs + 1):
            params, velocity, loss = self.train_epoch(params, velocity, train_part, config, epoch, 'fine-tune')
            validation_loss = self.validation_loss(params, validation_episodes)
            history.epoch_losses.append(loss)
            history.validation_losses.append(validation_loss)
            logger.info('Fine-tune epoch=%d mean-loss=%.5f validation-loss=%.5f', epoch, loss, validation_loss)
            if early_stopping.update(epoch, validation_loss):
                best_params = params.copy()
            if early_stopping.should_stop:
                history.stopped_early = True
                logger.warning('Early stopping at epoch=%d, validation loss did not improve for %d epochs, '
                               'best-epoch=%d', epoch, config.patience, early_stopping.best_epoch)
                break
        history.best_epoch = early_stopping.best_epoch
        return FineTuneResult(best_params, early_stopping.best_epoch, history)

    def infer(self, params: EncoderParams, prototypes: Prototypes, signal: Signal) -> InferenceResult:
        features = encode(params, self.preprocess_service.pipeline(signal))
        probabilities = class_scores(features, prototypes)
        index = int(predict(probabilities))
        return InferenceResult(probabilities, index, prototypes.classes[index])

    def prototypes_from_support(self, params: EncoderParams, support: SupportSet) -> Prototypes:
        return compute_prototypes({label: self.encode_records(params, records)
                                   for label, records in support.records.items()})

    def build_prototypes_for_deployment(self, params: EncoderParams, dataset: Dataset, k: int, seed: int,
                                        n_support_patients: Optional[int] = None) -> Prototypes:
        support = sample_support(dataset, k, seed, n_support_patients or self.episode_spec.n_support_patients)
        return self.prototypes_from_support(params, support)

    def update_prototypes(self, params: EncoderParams, dataset: Dataset, k: int, seed: int,
                          n_support_patients: Optional[int] = None) -> Prototypes:
        """
        Prototypes over the support reconstructed with `k` new shots per class. Encoder parameters are not touched
        """
        support = reconstruct_support_with_new(dataset, k, seed,
                                               n_support_patients or self.episode_spec.n_support_patients)
        return self.prototypes_from_support(params, support)
