"""
End-to-end pipeline variants (full pipeline, without fine-tuning, without base pretraining, source only) and
their paired comparison over seeds.
"""
import csv
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from ..engine.encoder import EncoderConfig, EncoderParams, init_params
from ..exceptions import DegenerateInputError
from ..models import Dataset
from ..utils import derive_seed
from .evaluation_service import EvaluationService, one_sample_ttest_greater
from .meta_training_service import MetaTrainingService, TrainConfig

logger = logging.getLogger(__name__)


class Variant(Enum):
    METAWEARS = 'metawears'
    WITHOUT_FINETUNE = 'without_finetune'
    WITHOUT_BASE = 'without_base'
    SOURCE_ONLY = 'source_only'


@dataclass(frozen=True)
class LifecycleDatasets:
    base: Dataset
    target: Dataset
    test: Dataset
    new: Optional[Dataset] = None

    @property
    def training_patients(self) -> List[str]:
        return self.base.patients() + self.target.patients()


@dataclass(frozen=True)
class ExperimentConfig:
    encoder: EncoderConfig
    pretrain: TrainConfig
    finetune: TrainConfig
    iterations: int = 10
    deploy_k: int = 5
    augment: Optional[Callable[[Dataset], Dataset]] = None  # Fine-tuning train part only


@dataclass
class ComparisonReport:
    seeds: List[int]
    aucs: Dict[str, List[float]] = field(default_factory=dict)

    def deltas(self, variant: Variant) -> List[float]:
        reference = self.aucs[Variant.METAWEARS.value]
        return [value - other for value, other in zip(reference, self.aucs[variant.value])]

    def to_dict(self) -> Dict[str, Any]:
        comparisons = {}
        for variant in Variant:
            if (variant == Variant.METAWEARS or variant.value not in self.aucs
                    or Variant.METAWEARS.value not in self.aucs):
                continue
            deltas = self.deltas(variant)
            try:
                t_test = one_sample_ttest_greater(deltas).to_dict()
            except DegenerateInputError as e:
                logger.warning('Cannot test deltas against variant=%s: %s', variant.value, e)
                t_test = None
            comparisons[variant.value] = {
                'deltas': deltas,
                'mean_delta': float(np.mean(deltas)),
                'median_delta': float(np.median(deltas)),
                't_test': t_test,
            }
        return {
            'seeds': self.seeds,
            'aucs': self.aucs,
            'mean_aucs': {variant: float(np.mean(values)) for variant, values in self.aucs.items()},
            'comparisons': comparisons,
        }

    def write_csv(self, path: str):
        variants = list(self.aucs.keys())
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['seed'] + variants)
            for i, seed in enumerate(self.seeds):
                writer.writerow([seed] + [repr(self.aucs[variant][i]) for variant in variants])


class LifecycleService:
    def __init__(self, meta_training_service: MetaTrainingService, evaluation_service: EvaluationService):
        self.meta_training_service = meta_training_service
        self.evaluation_service = evaluation_service

    def _initial_params(self, config: ExperimentConfig, seed: int) -> EncoderParams:
        return init_params(replace(config.encoder, seed=derive_seed(seed, 'encoder')))

    def pretrain(self, config: ExperimentConfig, base: Dataset, seed: int) -> EncoderParams:
        params, _ = self.meta_training_service.meta_train(self._initial_params(config, seed), base,
                                                          replace(config.pretrain, seed=derive_seed(seed, 'pretrain')))
        return params

    def fine_tune(self, config: ExperimentConfig, params: EncoderParams, target: Dataset, seed: int) -> EncoderParams:
        return self.meta_training_service.fine_tune(params, target,
                                                    replace(config.finetune, seed=derive_seed(seed, 'finetune')),
                                                    config.augment).params

    def evaluate_on_target(self, params: EncoderParams, support_dataset: Dataset, datasets: LifecycleDatasets,
                           config: ExperimentConfig, seed: int) -> float:
        service = self.meta_training_service
        report = self.evaluation_service.meta_test(
            params,
            lambda iteration_seed: service.build_prototypes_for_deployment(params, support_dataset, config.deploy_k,
                                                                           iteration_seed),
            datasets.test, config.iterations, derive_seed(seed, 'eval'), datasets.training_patients)
        return report.mean

    def evaluate_source_only(self, params: EncoderParams, datasets: LifecycleDatasets, config: ExperimentConfig,
                             seed: int) -> float:
        """
        Prototypes from the base dataset only, scored on the target-domain test set
        """
        return self.evaluate_on_target(params, datasets.base, datasets, config, seed)

    def run_lifecycle_variant(self, variant: Variant, datasets: LifecycleDatasets, config: ExperimentConfig,
                              seed: int, pretrained: Optional[EncoderParams] = None) -> float:
        """
        :param pretrained: Parameters already pretrained on the base dataset with `seed`, to be reused
        :return: Mean test AUC
        """
        variant = Variant(variant)
        if variant == Variant.WITHOUT_BASE:
            params = self.fine_tune(config, self._initial_params(config, seed), datasets.target, seed)
            return self.evaluate_on_target(params, datasets.target, datasets, config, seed)

        params = pretrained if pretrained is not None else self.pretrain(config, datasets.base, seed)
        if variant == Variant.SOURCE_ONLY:
            return self.evaluate_source_only(params, datasets, config, seed)
        if variant == Variant.METAWEARS:
            params = self.fine_tune(config, params, datasets.target, seed)
        return self.evaluate_on_target(params, datasets.target, datasets, config, seed)

    def compare_variants(self, datasets: LifecycleDatasets, config: ExperimentConfig, seeds: Sequence[int],
                         variants: Sequence[Variant] = tuple(Variant)) -> ComparisonReport:
        report = ComparisonReport(list(seeds), {Variant(variant).value: [] for variant in variants})
        for seed in seeds:
            pretrained = None
            if any(Variant(variant) != Variant.WITHOUT_BASE for variant in variants):
                pretrained = self.pretrain(config, datasets.base, seed)
            for variant in variants:
                value = self.run_lifecycle_variant(variant, datasets, config, seed, pretrained=pretrained)
                report.aucs[Variant(variant).value].append(value)
                logger.info('Variant=%s seed=%d mean-auc=%.4f', Variant(variant).value, seed, value)
        return report
