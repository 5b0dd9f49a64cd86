"""
Deterministic synthetic recordings. Background is 1/f (pink) noise; every class but the first adds amplitude
modulated oscillatory bursts at a class specific frequency, shifted per domain.
"""
import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from ..exceptions import ConfigurationError
from ..models import (DEFAULT_CLASSES, ROLE_BY_DOMAIN, Dataset, Domain,
                      Record, Signal)
from ..utils import derive_seed, get_rng

logger = logging.getLogger(__name__)

MIN_SAMPLES = 64
BURST_BASE_FREQ_HZ = 8.
BURST_CLASS_SPACING_HZ = 4.  # Extra classes burst at 12 Hz, 16 Hz...
BURST_AMPLITUDE = 1.5
BURST_ENVELOPE_HZ = .5
AMP_FACTOR_RANGE = (.8, 1.2)


@dataclass(frozen=True)
class DomainSpec:
    name: Domain
    fs: float
    noise_std: float = 1.
    gain: float = 1.
    burst_freq_shift: float = 0.

    def __post_init__(self):
        object.__setattr__(self, 'name', Domain(self.name))
        if not self.fs > 0:
            raise ConfigurationError(f'Domain={self.name.value} fs={self.fs} must be positive')
        if self.noise_std < 0:
            raise ConfigurationError(f'Domain={self.name.value} noise-std={self.noise_std} cannot be negative')
        if not self.gain > 0:
            raise ConfigurationError(f'Domain={self.name.value} gain={self.gain} must be positive')

    def to_dict(self) -> Dict[str, Any]:
        return {**asdict(self), 'name': self.name.value}

    def is_shifted_from(self, other: 'DomainSpec') -> bool:
        return (self.fs, self.noise_std, self.gain, self.burst_freq_shift) != (
            other.fs, other.noise_std, other.gain, other.burst_freq_shift)


def default_domain_spec(domain: Domain) -> DomainSpec:
    """
    Hospital-like base recordings at 256 Hz. Wearable-like target/new/test recordings at 200 Hz, noisier and
    with the bursts shifted by 2 Hz
    """
    domain = Domain(domain)
    if domain == Domain.BASE:
        return DomainSpec(domain, fs=256., noise_std=1.)
    return DomainSpec(domain, fs=200., noise_std=1.5, burst_freq_shift=2.)


@dataclass(frozen=True)
class PatientSpec:
    patient_id: str
    amp_factor: float = 1.
    phase_offset: float = 0.
    seed: int = 0

    def __post_init__(self):
        if not self.amp_factor > 0:
            raise ConfigurationError(f'Patient={self.patient_id} amp-factor={self.amp_factor} must be positive')
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError(f'Patient={self.patient_id} seed={self.seed} is not an unsigned 64-bit integer')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def pink_noise(n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """
    White gaussian noise shaped in frequency by 1/sqrt(f), no DC, unit standard deviation
    """
    spectrum = np.fft.rfft(rng.standard_normal(n_samples))
    frequencies = np.fft.rfftfreq(n_samples)
    shaping = np.zeros_like(frequencies)
    shaping[1:] = 1. / np.sqrt(frequencies[1:])
    noise = np.fft.irfft(spectrum * shaping, n_samples)
    std = noise.std()
    return noise / std if std > 0 else noise


def burst_frequency(domain: DomainSpec, class_index: int) -> float:
    return BURST_BASE_FREQ_HZ + BURST_CLASS_SPACING_HZ * (class_index - 1) + domain.burst_freq_shift


def gen_signal(domain: DomainSpec, patient: PatientSpec, label: str, duration_s: float,
               seed: Optional[int] = None, classes: Sequence[str] = DEFAULT_CLASSES) -> Signal:
    """
    :param domain:
    :param patient:
    :param label: One of `classes`. The first class is the background-only class
    :param duration_s:
    :param seed: Record seed, derived from the patient seed and the label if not provided
    :param classes:
    :return: Signal with float32 samples
    """
    n_samples = int(round(duration_s * domain.fs))
    if n_samples < MIN_SAMPLES:
        raise ConfigurationError(f'duration={duration_s}s at fs={domain.fs} gives {n_samples} samples, '
                                 f'at least {MIN_SAMPLES} are required')
    if label not in classes:
        raise ConfigurationError(f'Label={label} is not one of {list(classes)}')

    rng = np.random.default_rng(derive_seed(patient.seed, label) if seed is None else seed)
    t = np.arange(n_samples) / domain.fs
    samples = domain.gain * domain.noise_std * pink_noise(n_samples, rng)
    class_index = list(classes).index(label)
    if class_index > 0:
        frequency = burst_frequency(domain, class_index)
        phase = patient.phase_offset
        envelope = .5 * (1. + np.sin(2 * np.pi * BURST_ENVELOPE_HZ * t + phase))
        samples = samples + (BURST_AMPLITUDE * domain.gain * patient.amp_factor
                             * envelope * np.sin(2 * np.pi * frequency * t + phase))
    return Signal(samples.astype(np.float32), domain.fs, patient.patient_id, label, domain.name)


def patient_id_for(domain: Domain, index: int) -> str:
    return f'{domain.value}-p{index:03d}'


def gen_patient(domain: DomainSpec, index: int, seed: int) -> PatientSpec:
    patient_id = patient_id_for(domain.name, index)
    rng = get_rng(seed, 'patient', patient_id)
    return PatientSpec(patient_id, amp_factor=float(rng.uniform(*AMP_FACTOR_RANGE)),
                       phase_offset=float(rng.uniform(0., 2 * np.pi)), seed=derive_seed(seed, patient_id))


def gen_dataset(domains: Sequence[DomainSpec], patients_per_domain: int, records_per_patient_per_class: int,
                duration_s: float, seed: int, classes: Sequence[str] = DEFAULT_CLASSES) -> Dataset:
    """
    Balanced dataset, every record carries the generation parameters it was built from. Base and target records
    are tagged `train`, new records `new` and test records `test`
    """
    if patients_per_domain < 1:
        raise ConfigurationError(f'patients-per-domain={patients_per_domain} must be positive')
    if records_per_patient_per_class < 1:
        raise ConfigurationError(f'records-per-patient-per-class={records_per_patient_per_class} must be positive')

    records = []
    for domain in domains:
        for index in range(patients_per_domain):
            patient = gen_patient(domain, index, seed)
            for label in classes:
                for record_index in range(records_per_patient_per_class):
                    record_seed = derive_seed(seed, patient.patient_id, label, record_index)
                    signal = gen_signal(domain, patient, label, duration_s, seed=record_seed, classes=classes)
                    records.append(Record(
                        f'{patient.patient_id}-{label}-{record_index:03d}', signal, ROLE_BY_DOMAIN[domain.name],
                        provenance={
                            'domain': domain.to_dict(),
                            'patient': patient.to_dict(),
                            'record_index': record_index,
                            'record_seed': record_seed,
                            'duration_s': duration_s,
                        }))
        logger.info('Generated domain=%s patients=%d records-per-class=%d', domain.name.value,
                    patients_per_domain, records_per_patient_per_class)

    generation = {
        'seed': seed,
        'duration_s': duration_s,
        'patients_per_domain': patients_per_domain,
        'records_per_patient_per_class': records_per_patient_per_class,
        'domains': [domain.to_dict() for domain in domains],
    }
    return Dataset(tuple(classes), tuple(records), generation)
