from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ConfigurationError, InputError

NORMAL_LABEL = 'normal'
ABNORMAL_LABEL = 'abnormal'
DEFAULT_CLASSES = (NORMAL_LABEL, ABNORMAL_LABEL)


class Domain(Enum):
    BASE = 'base'
    TARGET = 'target'
    NEW = 'new'
    TEST = 'test'


class Role(Enum):
    TRAIN = 'train'
    NEW = 'new'
    TEST = 'test'


ROLE_BY_DOMAIN = {
    Domain.BASE: Role.TRAIN,
    Domain.TARGET: Role.TRAIN,
    Domain.NEW: Role.NEW,
    Domain.TEST: Role.TEST,
}


@dataclass(frozen=True, eq=False)
class Signal:
    samples: np.ndarray
    fs: float
    patient_id: str
    label: str
    domain: Domain

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1 or samples.size == 0:
            raise InputError(f'Signal of patient={self.patient_id} needs a non empty 1-D sample sequence, '
                             f'got shape {samples.shape}')
        if not self.fs > 0:
            raise ConfigurationError(f'Sampling rate fs={self.fs} must be positive')
        object.__setattr__(self, 'samples', samples)

    @property
    def n_samples(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.fs

    def with_samples(self, samples: np.ndarray, fs: Optional[float] = None) -> 'Signal':
        return replace(self, samples=samples, fs=self.fs if fs is None else fs)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Signal) and self.fs == other.fs and self.patient_id == other.patient_id
                and self.label == other.label and self.domain == other.domain
                and self.samples.dtype == other.samples.dtype and np.array_equal(self.samples, other.samples))


@dataclass(frozen=True)
class Record:
    record_id: str
    signal: Signal
    role: Role
    provenance: Dict[str, Any] = field(default_factory=dict)
    noisy: bool = False

    @property
    def patient_id(self) -> str:
        return self.signal.patient_id

    @property
    def label(self) -> str:
        return self.signal.label


@dataclass(frozen=True)
class Dataset:
    """
    Immutable set of labeled records. Every record belongs to one patient and carries one role tag
    """
    classes: Tuple[str, ...]
    records: Tuple[Record, ...]
    generation: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'classes', tuple(self.classes))
        object.__setattr__(self, 'records', tuple(self.records))
        record_ids = set()
        for record in self.records:
            if record.label not in self.classes:
                raise InputError(f'Record={record.record_id} label={record.label} is not one of {list(self.classes)}')
            if record.record_id in record_ids:
                raise InputError(f'Record id={record.record_id} is duplicated')
            record_ids.add(record.record_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def record_ids(self) -> List[str]:
        return [record.record_id for record in self.records]

    def patients(self, role: Optional[Role] = None) -> List[str]:
        return sorted({record.patient_id for record in self.records if role is None or record.role == role})

    def with_role(self, role: Role) -> 'Dataset':
        return self.filter(lambda record: record.role == role)

    def with_patients(self, patient_ids: Iterable[str]) -> 'Dataset':
        patient_ids = set(patient_ids)
        return self.filter(lambda record: record.patient_id in patient_ids)

    def filter(self, predicate) -> 'Dataset':
        return replace(self, records=tuple(record for record in self.records if predicate(record)))

    def records_for(self, patient_ids: Iterable[str], label: str, role: Optional[Role] = None) -> List[Record]:
        patient_ids = set(patient_ids)
        return [record for record in self.records
                if record.patient_id in patient_ids and record.label == label and (role is None or record.role == role)]

    def class_counts(self, role: Optional[Role] = None) -> Dict[str, int]:
        counter = Counter(record.label for record in self.records if role is None or record.role == role)
        return {label: counter.get(label, 0) for label in self.classes}

    def merge(self, other: 'Dataset') -> 'Dataset':
        if self.classes != other.classes:
            raise InputError(f'Cannot merge datasets with classes {list(self.classes)} and {list(other.classes)}')
        return Dataset(self.classes, self.records + other.records, {**self.generation, **other.generation})

    @classmethod
    def from_records(cls, classes: Sequence[str], records: Iterable[Record],
                     generation: Optional[Dict[str, Any]] = None) -> 'Dataset':
        return cls(tuple(classes), tuple(records), generation or {})
