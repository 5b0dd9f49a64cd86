"""
Run configuration: a JSON document validated by `RunConfigSerializer` and turned into a frozen dataclass tree.
Every missing section takes the desk-scale defaults, so `{}` is a valid config.
"""
import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Type

from django.conf import settings

from .biosignal.generator import DomainSpec, default_domain_spec
from .biosignal.preprocess import FilterSpec, PreprocessPipeline, StftSpec
from .engine.encoder import Activation, EncoderConfig
from .engine.quantization import ElementType, FixedSpec, PayloadKind
from .exceptions import ConfigurationError, MetaWearsException
from .models import DEFAULT_CLASSES, Domain
from .serializers import RunConfigSerializer, ScenarioSerializer
from .services.dataset_service import EpisodeSpec
from .services.meta_training_service import TrainConfig
from .services.update_simulation_service import (HardwareProfile, LinkSpec,
                                                 MemoryBudget, MemoryRegion,
                                                 Scenario, UpdatePayload,
                                                 get_preset)
from .utils import config_hash, derive_seed

logger = logging.getLogger(__name__)

DEFAULT_PATIENTS = {
    Domain.BASE: 12,
    Domain.TARGET: 10,
    Domain.NEW: 3,
    Domain.TEST: 4,
}


def _flatten_errors(detail: Any, prefix: str = '') -> Sequence[str]:
    if isinstance(detail, Mapping):
        return [message for key, value in detail.items()
                for message in _flatten_errors(value, f'{prefix}.{key}' if prefix else str(key))]
    if isinstance(detail, list):
        if all(isinstance(value, str) for value in detail):
            return [f'{prefix or "config"}: {value}' for value in detail]
        return [message for index, value in enumerate(detail)
                for message in _flatten_errors(value, f'{prefix}[{index}]')]
    return [f'{prefix or "config"}: {detail}']


def validate_document(serializer_class, data: Any, name: str,
                      exception_class: Type[MetaWearsException] = ConfigurationError) -> Dict[str, Any]:
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise exception_class(f'Invalid {name}: ' + '; '.join(_flatten_errors(serializer.errors)))
    return serializer.validated_data


def read_json(path: str, exception_class: Type[MetaWearsException] = ConfigurationError) -> Any:
    try:
        with open(path, encoding='utf-8') as f:
            return json.load(f)
    except OSError as e:
        raise exception_class(f'Cannot read {path}: {e}') from e
    except json.JSONDecodeError as e:
        raise exception_class(f'{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}') from e


# Scenario
# ------------------------------------------------------------------------------
def _payload(data: Mapping[str, Any]) -> UpdatePayload:
    kind = PayloadKind(data['kind'])
    if 'bytes' in data:
        return UpdatePayload(data['bytes'], kind)
    shapes = [tuple(shape) for shape in data['shapes']]
    return UpdatePayload.from_shapes(kind, shapes[0] if kind == PayloadKind.PROTOTYPES else shapes,
                                     ElementType.from_label(data['element_type']))


def build_scenario(data: Mapping[str, Any]) -> Scenario:
    """
    :param data: Validated `ScenarioSerializer` data. Sections present override the preset ones
    """
    base = get_preset(data['preset']) if 'preset' in data else None
    profiles = base.profiles if base else ()
    if 'hardware' in data:
        profiles = tuple(HardwareProfile(**{'name': f'profile-{i}', **profile})
                         for i, profile in enumerate(data['hardware']))
    if 'link' in data:
        link = LinkSpec(**{'throughput_bps': settings.METAWEARS_LINK_THROUGHPUT_BPS, **data['link']})
    else:
        link = base.link if base else LinkSpec(settings.METAWEARS_LINK_THROUGHPUT_BPS)
    memory = base.memory if base else MemoryBudget()
    if 'memory' in data:
        memory_data = dict(data['memory'])
        regions = memory_data.pop('regions', None)
        memory = replace(memory, **memory_data)
        if regions is not None:
            memory = replace(memory, regions=tuple(MemoryRegion(**region) for region in regions))
    payloads = base.payloads if base else ()
    if 'payloads' in data:
        payloads = tuple(_payload(payload) for payload in data['payloads'])
    return Scenario(
        name=data.get('name') or (base.name if base else 'custom'),
        profiles=profiles,
        link=link,
        memory=memory,
        payloads=payloads,
        updates_per_day=data.get('updates_per_day', base.updates_per_day if base else Scenario.updates_per_day),
    )


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    return {
        'name': scenario.name,
        'hardware': [{key: value for key, value in profile.to_dict().items()
                      if not (key == 'idle_power_mw' and value is None)}
                     for profile in scenario.profiles],
        'link': {
            'throughput_bps': scenario.link.throughput_bps,
            'protocol_efficiency': scenario.link.protocol_efficiency,
        },
        'memory': {
            'total_kb': scenario.memory.total_kb,
            'banks': scenario.memory.banks,
            'regions': [{'name': region.name, 'bytes': region.bytes, 'overwritable': region.overwritable}
                        for region in scenario.memory.regions],
        },
        'payloads': [{'kind': payload.kind.value, 'bytes': payload.bytes} for payload in scenario.payloads],
        'updates_per_day': scenario.updates_per_day,
    }


def load_scenario(path: Optional[str] = None, preset: Optional[str] = None) -> Scenario:
    if path:
        return build_scenario(validate_document(ScenarioSerializer, read_json(path), f'scenario {path}'))
    return get_preset(preset or settings.METAWEARS_DEFAULT_PRESET)


# Run config
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class GenerationConfig:
    duration_s: float = 4.
    records_per_patient_per_class: int = 24
    patients: Mapping[Domain, int] = field(default_factory=lambda: dict(DEFAULT_PATIENTS))
    domains: Mapping[Domain, DomainSpec] = field(
        default_factory=lambda: {domain: default_domain_spec(domain) for domain in Domain})

    def to_dict(self) -> Dict[str, Any]:
        return {
            'duration_s': self.duration_s,
            'records_per_patient_per_class': self.records_per_patient_per_class,
            'patients': {domain.value: self.patients[domain] for domain in Domain},
            'domains': {domain.value: {key: value for key, value in self.domains[domain].to_dict().items()
                                       if key != 'name'}
                        for domain in Domain},
        }


@dataclass(frozen=True)
class AugmentationConfig:
    enabled: bool = True
    noise_fraction: float = .5
    noise_scale: float = .1


@dataclass(frozen=True)
class EncoderSection:
    hidden_layers: Tuple[int, ...] = (64, 32)
    feature_dim: int = 16
    activation: Activation = Activation.RELU

    def to_dict(self) -> Dict[str, Any]:
        return {
            'hidden_layers': list(self.hidden_layers),
            'feature_dim': self.feature_dim,
            'activation': self.activation.value,
        }


@dataclass(frozen=True)
class EvaluationConfig:
    iterations: int = 10
    deploy_k: int = 5
    k_values: Tuple[int, ...] = (1, 3, 5, 10, 20)
    ablation_runs: int = 5


@dataclass(frozen=True)
class DatasetPaths:
    base: str
    target: str
    new: str
    test: str

    def path(self, domain: Domain) -> str:
        return getattr(self, Domain(domain).value)


def _train_to_dict(config: TrainConfig) -> Dict[str, Any]:
    # Seeds come from substreams of the global seed
    return {key: value for key, value in config.to_dict().items() if key != 'seed'}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    out: str
    datasets: DatasetPaths
    classes: Tuple[str, ...] = DEFAULT_CLASSES
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    preprocess: PreprocessPipeline = field(default_factory=PreprocessPipeline)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    episode: EpisodeSpec = field(default_factory=EpisodeSpec)
    pretrain: TrainConfig = field(default_factory=TrainConfig)
    finetune: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    quantization: FixedSpec = field(default_factory=FixedSpec)
    prototype_element_type: ElementType = ElementType.FLOAT32
    scenario: Scenario = field(default_factory=lambda: get_preset(settings.METAWEARS_DEFAULT_PRESET))

    def substream_seed(self, *names: Any) -> int:
        """
        Named substream of the global seed: `dataset`, `pretrain`, `finetune`, `deploy`, `eval`...
        """
        return derive_seed(self.seed, *names)

    def episode_spec(self) -> EpisodeSpec:
        return replace(self.episode, seed=self.substream_seed('episode'))

    def pretrain_config(self) -> TrainConfig:
        return replace(self.pretrain, seed=self.substream_seed('pretrain'))

    def finetune_config(self) -> TrainConfig:
        return replace(self.finetune, seed=self.substream_seed('finetune'))

    def encoder_config(self, input_dim: int) -> EncoderConfig:
        return EncoderConfig(input_dim, self.encoder.hidden_layers, self.encoder.feature_dim, self.encoder.activation,
                             seed=self.substream_seed('encoder'))

    def to_dict(self) -> Dict[str, Any]:
        """
        :return: Resolved document, valid input for `RunConfigSerializer`
        """
        preprocess = self.preprocess
        return {
            'seed': self.seed,
            'out': self.out,
            'classes': list(self.classes),
            'datasets': {domain.value: self.datasets.path(domain) for domain in Domain},
            'generation': self.generation.to_dict(),
            'preprocess': {
                'target_fs': preprocess.target_fs,
                'bandpass': {
                    'low_hz': preprocess.bandpass_spec.low_hz,
                    'high_hz': preprocess.bandpass_spec.high_hz,
                    'order': preprocess.bandpass_spec.order,
                } if preprocess.bandpass_spec else None,
                'notch': {
                    'center_hz': preprocess.notch_spec.center_hz,
                    'quality_q': preprocess.notch_spec.quality_q,
                } if preprocess.notch_spec else None,
                'stft': {
                    'window_s': preprocess.stft_spec.window_s,
                    'overlap_samples': preprocess.stft_spec.overlap_samples,
                    'freq_res_hz': preprocess.stft_spec.freq_res_hz,
                },
                'normalize': preprocess.normalize,
            },
            'augmentation': {
                'enabled': self.augmentation.enabled,
                'noise_fraction': self.augmentation.noise_fraction,
                'noise_scale': self.augmentation.noise_scale,
            },
            'encoder': self.encoder.to_dict(),
            'episode': {key: value for key, value in self.episode.to_dict().items() if key != 'seed'},
            'pretrain': _train_to_dict(self.pretrain),
            'finetune': _train_to_dict(self.finetune),
            'evaluation': {
                'iterations': self.evaluation.iterations,
                'deploy_k': self.evaluation.deploy_k,
                'k_values': list(self.evaluation.k_values),
                'ablation_runs': self.evaluation.ablation_runs,
            },
            'quantization': {'frac_bits': self.quantization.frac_bits},
            'prototypes': {'element_type': self.prototype_element_type.label},
            'hardware': scenario_to_dict(self.scenario),
        }

    def config_hash(self) -> str:
        return config_hash(self.to_dict())


def _generation(data: Mapping[str, Any]) -> GenerationConfig:
    default = GenerationConfig()
    patients = {domain: data.get('patients', {}).get(domain.value, default.patients[domain]) for domain in Domain}
    domains = {}
    for domain in Domain:
        overrides = data.get('domains', {}).get(domain.value)
        domains[domain] = replace(default.domains[domain], **overrides) if overrides else default.domains[domain]
    return GenerationConfig(
        duration_s=data.get('duration_s', default.duration_s),
        records_per_patient_per_class=data.get('records_per_patient_per_class',
                                               default.records_per_patient_per_class),
        patients=patients,
        domains=domains,
    )


def _preprocess(data: Mapping[str, Any]) -> PreprocessPipeline:
    default = PreprocessPipeline()
    bandpass_spec = default.bandpass_spec
    if 'bandpass' in data:
        bandpass = data['bandpass']
        bandpass_spec = FilterSpec.butterworth_bandpass(bandpass['low_hz'], bandpass['high_hz'],
                                                        bandpass.get('order', 4)) if bandpass else None
    notch_spec = default.notch_spec
    if 'notch' in data:
        notch = data['notch']
        notch_spec = FilterSpec.notch(notch['center_hz'], notch.get('quality_q', 30.)) if notch else None
    return PreprocessPipeline(
        target_fs=data.get('target_fs', default.target_fs),
        bandpass_spec=bandpass_spec,
        notch_spec=notch_spec,
        stft_spec=StftSpec(**data.get('stft', {})),
        normalize=data.get('normalize', default.normalize),
    )


def build_run_config(data: Mapping[str, Any], seed: Optional[int] = None, out: Optional[str] = None) -> RunConfig:
    """
    :param data: Validated `RunConfigSerializer` data
    :param seed: Overrides the config seed
    :param out: Overrides the output directory
    """
    seed = seed if seed is not None else data.get('seed', 0)
    out = out or data.get('out') or settings.METAWEARS_DEFAULT_OUT
    dataset_paths = {domain.value: os.path.join(out, 'datasets', domain.value) for domain in Domain}
    dataset_paths.update(data.get('datasets', {}))
    evaluation = data.get('evaluation', {})
    encoder = data.get('encoder', {})
    return RunConfig(
        seed=seed,
        out=out,
        datasets=DatasetPaths(**dataset_paths),
        classes=tuple(data.get('classes', DEFAULT_CLASSES)),
        generation=_generation(data.get('generation', {})),
        preprocess=_preprocess(data.get('preprocess', {})),
        augmentation=AugmentationConfig(**data.get('augmentation', {})),
        encoder=EncoderSection(
            hidden_layers=tuple(encoder.get('hidden_layers', EncoderSection.hidden_layers)),
            feature_dim=encoder.get('feature_dim', EncoderSection.feature_dim),
            activation=Activation(encoder.get('activation', EncoderSection.activation.value)),
        ),
        episode=EpisodeSpec(**data.get('episode', {})),
        pretrain=TrainConfig(**data.get('pretrain', {})),
        finetune=TrainConfig(**data.get('finetune', {})),
        evaluation=EvaluationConfig(**{**evaluation, **({'k_values': tuple(evaluation['k_values'])}
                                                        if 'k_values' in evaluation else {})}),
        quantization=FixedSpec(**data.get('quantization', {})),
        prototype_element_type=ElementType.from_label(data.get('prototypes', {}).get('element_type', 'float32')),
        scenario=build_scenario(data['hardware']) if 'hardware' in data else get_preset(
            settings.METAWEARS_DEFAULT_PRESET),
    )


def load_run_config(path: Optional[str] = None, seed: Optional[int] = None, out: Optional[str] = None) -> RunConfig:
    """
    :param path: JSON config file, defaults for every section when missing
    """
    document = read_json(path) if path else {}
    data = validate_document(RunConfigSerializer, document, f'config {path}' if path else 'config')
    if seed is not None and not 0 <= seed < 2 ** 64:
        raise ConfigurationError(f'seed={seed} is not an unsigned 64-bit integer')
    config = build_run_config(data, seed, out)
    logger.info('Loaded run config path=%s seed=%d config-hash=%s', path, config.seed, config.config_hash())
    return config
