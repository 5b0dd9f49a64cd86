"""
Patient-disjoint episode sampling, support reconstruction with new shots, validation split and the on-disk
dataset format (`manifest.json` plus one little-endian float32 file per record).
"""
import json
import logging
import os
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import (ConfigurationError, DataFormatError, InputError,
                          SamplingError, UnsupportedVersionError)
from ..models import Dataset, Domain, Record, Role, Signal
from ..utils import get_rng, write_json

logger = logging.getLogger(__name__)

MANIFEST_FILE = 'manifest.json'
DATASET_FORMAT_VERSION = 1
RECORD_FIELDS = ('id', 'patient_id', 'label', 'role', 'domain', 'fs', 'sample_file', 'n_samples', 'provenance')


@dataclass(frozen=True)
class EpisodeSpec:
    n_support_patients: int = 1
    n_query_patients: int = 1
    k: int = 5
    m: int = 15
    seed: int = 0

    def __post_init__(self):
        for name in ('n_support_patients', 'n_query_patients', 'k', 'm'):
            if getattr(self, name) < 1:
                raise ConfigurationError(f'Episode {name}={getattr(self, name)} must be positive')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SupportSet:
    records: Dict[str, List[Record]]  # Per class, class order
    patients: List[str]

    @property
    def counts(self) -> List[int]:
        return [len(records) for records in self.records.values()]

    def all_records(self) -> List[Record]:
        return [record for records in self.records.values() for record in records]


@dataclass
class Episode:
    support: Dict[str, List[Record]]
    query: Dict[str, List[Record]]
    support_patients: List[str]
    query_patients: List[str]

    @property
    def support_set(self) -> SupportSet:
        return SupportSet(self.support, self.support_patients)

    def support_records(self) -> List[Record]:
        return [record for records in self.support.values() for record in records]

    def query_records(self) -> List[Record]:
        return [record for records in self.query.values() for record in records]

    def query_labels(self) -> List[str]:
        return [record.label for record in self.query_records()]


def _rng(rng: Optional[np.random.Generator], seed: int) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(seed)


def _choose(rng: np.random.Generator, elements: Sequence[Any], size: int) -> List[Any]:
    return [elements[i] for i in rng.choice(len(elements), size=size, replace=False)]


def sample_patients(dataset: Dataset, spec: EpisodeSpec, rng: Optional[np.random.Generator] = None,
                    role: Role = Role.TRAIN) -> Tuple[List[str], List[str]]:
    """
    :return: Support patients drawn uniformly without replacement, query patients drawn from the rest
    """
    patients = dataset.patients(role)
    required = spec.n_support_patients + spec.n_query_patients
    if len(patients) < required:
        raise SamplingError(f'{len(patients)} {role.value} patients available, N_S + N_Q = {required} required '
                            f'(short by {required - len(patients)})')
    rng = _rng(rng, spec.seed)
    support_patients = sorted(_choose(rng, patients, spec.n_support_patients))
    remaining = [patient for patient in patients if patient not in support_patients]
    query_patients = sorted(_choose(rng, remaining, spec.n_query_patients))
    return support_patients, query_patients


def _sample_class_records(dataset: Dataset, patients: List[str], label: str, count: int,
                          rng: np.random.Generator, role: Role, side: str) -> List[Record]:
    pool = dataset.records_for(patients, label, role)
    if len(pool) < count:
        raise SamplingError(f'{side} needs {count} records of class={label} from patients={patients}, '
                            f'only {len(pool)} available')
    return _choose(rng, pool, count)


def build_episode(dataset: Dataset, spec: EpisodeSpec, rng: Optional[np.random.Generator] = None,
                  role: Role = Role.TRAIN) -> Episode:
    rng = _rng(rng, spec.seed)
    support_patients, query_patients = sample_patients(dataset, spec, rng, role)
    support, query = {}, {}
    for label in dataset.classes:
        support[label] = _sample_class_records(dataset, support_patients, label, spec.k, rng, role, 'Support')
        query[label] = _sample_class_records(dataset, query_patients, label, spec.m, rng, role, 'Query')
    return Episode(support, query, support_patients, query_patients)


def sample_support(dataset: Dataset, k: int, seed: int, n_support_patients: int = 1,
                   role: Role = Role.TRAIN, rng: Optional[np.random.Generator] = None) -> SupportSet:
    """
    Support sampling for deployment: `n_support_patients` patients, then `k` records per class from them
    """
    if k < 1:
        raise ConfigurationError(f'k={k} must be positive')
    rng = _rng(rng, seed)
    patients = dataset.patients(role)
    if len(patients) < n_support_patients:
        raise SamplingError(f'{len(patients)} {role.value} patients available, N_S = {n_support_patients} required '
                            f'(short by {n_support_patients - len(patients)})')
    support_patients = sorted(_choose(rng, patients, n_support_patients))
    records = {label: _sample_class_records(dataset, support_patients, label, k, rng, role, 'Support')
               for label in dataset.classes}
    return SupportSet(records, support_patients)


def reconstruct_support_with_new(dataset: Dataset, k: int, seed: int, n_support_patients: int = 1) -> SupportSet:
    """
    Per class, `k` train records from the support patients plus `k` records of the new subjects
    """
    rng = np.random.default_rng(seed)
    support = sample_support(dataset, k, seed, n_support_patients, rng=rng)
    new_patients = dataset.patients(Role.NEW)
    records = {}
    for label in dataset.classes:
        new_pool = dataset.records_for(new_patients, label, Role.NEW)
        if len(new_pool) < k:
            raise SamplingError(f'k={k} new shots of class={label} requested, only {len(new_pool)} new records '
                                f'available from patients={new_patients}')
        records[label] = support.records[label] + _choose(rng, new_pool, k)
    return SupportSet(records, support.patients + new_patients)


def split_validation(dataset: Dataset, fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Patient-disjoint split, `round(fraction x patients)` validation patients (at least 1, at most all but one)
    """
    if not 0 < fraction < 1:
        raise ConfigurationError(f'Validation fraction={fraction} must be in (0, 1)')
    patients = dataset.patients()
    if len(patients) < 2:
        raise SamplingError(f'Validation split needs at least 2 patients, dataset has {len(patients)}')
    n_validation = min(max(1, int(round(fraction * len(patients)))), len(patients) - 1)
    validation_patients = set(_choose(get_rng(seed, 'validation-split'), patients, n_validation))
    train_part = dataset.filter(lambda record: record.patient_id not in validation_patients)
    validation_part = dataset.filter(lambda record: record.patient_id in validation_patients)
    logger.info('Validation split train-patients=%d validation-patients=%d', len(patients) - n_validation,
                n_validation)
    return train_part, validation_part


# Persistence
# ------------------------------------------------------------------------------
def save_dataset(path: str, dataset: Dataset, config_hash: Optional[str] = None):
    os.makedirs(path, exist_ok=True)
    entries = []
    for record in dataset.records:
        sample_file = f'{record.record_id}.f32'
        samples = np.asarray(record.signal.samples, dtype='<f4')
        samples.tofile(os.path.join(path, sample_file))
        entries.append({
            'id': record.record_id,
            'patient_id': record.patient_id,
            'label': record.label,
            'role': record.role.value,
            'domain': record.signal.domain.value,
            'fs': record.signal.fs,
            'sample_file': sample_file,
            'n_samples': int(samples.size),
            'provenance': record.provenance,
            'noisy': record.noisy,
        })
    write_json(os.path.join(path, MANIFEST_FILE), {
        'format_version': DATASET_FORMAT_VERSION,
        'classes': list(dataset.classes),
        'records': entries,
        'generation': dataset.generation,
        'config_hash': config_hash,
    })
    logger.info('Stored dataset path=%s records=%d', path, len(dataset))


def _read_manifest(path: str) -> Dict[str, Any]:
    manifest_path = os.path.join(path, MANIFEST_FILE)
    try:
        with open(manifest_path, encoding='utf-8') as f:
            manifest = json.load(f)
    except OSError as e:
        raise DataFormatError(f'Cannot read manifest {manifest_path}: {e}') from e
    except json.JSONDecodeError as e:
        raise DataFormatError(f'{manifest_path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}') from e
    if not isinstance(manifest, dict):
        raise DataFormatError(f'{manifest_path}: top level must be an object')
    version = manifest.get('format_version')
    if version != DATASET_FORMAT_VERSION:
        raise UnsupportedVersionError(f'{manifest_path}: format_version={version} is not supported, '
                                      f'expected {DATASET_FORMAT_VERSION}')
    for key in ('classes', 'records'):
        if not isinstance(manifest.get(key), list):
            raise DataFormatError(f'{manifest_path}: field "{key}" missing or not a list')
    return manifest


def _read_record(path: str, index: int, entry: Dict[str, Any]) -> Record:
    context = f'{os.path.join(path, MANIFEST_FILE)}: records[{index}]'
    if not isinstance(entry, dict):
        raise DataFormatError(f'{context} must be an object')
    missing = [key for key in RECORD_FIELDS if key not in entry]
    if missing:
        raise DataFormatError(f'{context} missing fields {missing}')
    try:
        role = Role(entry['role'])
        domain = Domain(entry['domain'])
    except ValueError as e:
        raise DataFormatError(f'{context}: {e}') from e

    sample_path = os.path.join(path, entry['sample_file'])
    if not os.path.isfile(sample_path):
        raise DataFormatError(f'{context}.sample_file: {sample_path} does not exist')
    samples = np.fromfile(sample_path, dtype='<f4').astype(np.float32)
    if samples.size != entry['n_samples']:
        raise DataFormatError(f'{context}.n_samples: manifest says {entry["n_samples"]}, '
                              f'{sample_path} has {samples.size}')
    try:
        signal = Signal(samples, float(entry['fs']), entry['patient_id'], entry['label'], domain)
    except (ConfigurationError, InputError, TypeError, ValueError) as e:
        raise DataFormatError(f'{context}: {e}') from e
    return Record(entry['id'], signal, role, entry['provenance'], bool(entry.get('noisy', False)))


def load_dataset(path: str) -> Dataset:
    manifest = _read_manifest(path)
    records = tuple(_read_record(path, index, entry) for index, entry in enumerate(manifest['records']))
    try:
        return Dataset(tuple(manifest['classes']), records, manifest.get('generation') or {})
    except InputError as e:
        raise DataFormatError(f'{os.path.join(path, MANIFEST_FILE)}: {e}') from e
