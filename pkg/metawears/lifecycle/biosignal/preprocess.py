import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
from scipy.interpolate import interp1d
from scipy.signal import butter, filtfilt, get_window, iirnotch, sosfiltfilt

from ..exceptions import ConfigurationError, InputError
from ..models import Dataset, Signal
from ..utils import get_rng

logger = logging.getLogger(__name__)


class FilterKind(Enum):
    BUTTERWORTH_BANDPASS = 'butterworth_bandpass'
    NOTCH = 'notch'


@dataclass(frozen=True)
class FilterSpec:
    kind: FilterKind
    low_hz: Optional[float] = None
    high_hz: Optional[float] = None
    center_hz: Optional[float] = None
    quality_q: float = 30.
    order: int = 4

    def __post_init__(self):
        object.__setattr__(self, 'kind', FilterKind(self.kind))
        if self.order < 1 or self.order % 2:
            raise ConfigurationError(f'Filter order={self.order} must be a positive even integer')
        if not self.quality_q > 0:
            raise ConfigurationError(f'Notch quality-q={self.quality_q} must be positive')

    @classmethod
    def butterworth_bandpass(cls, low_hz: float, high_hz: float, order: int = 4) -> 'FilterSpec':
        return cls(FilterKind.BUTTERWORTH_BANDPASS, low_hz=low_hz, high_hz=high_hz, order=order)

    @classmethod
    def notch(cls, center_hz: float, quality_q: float = 30.) -> 'FilterSpec':
        return cls(FilterKind.NOTCH, center_hz=center_hz, quality_q=quality_q, order=2)

    def validate_for(self, fs: float):
        nyquist = fs / 2
        if self.kind == FilterKind.BUTTERWORTH_BANDPASS:
            if self.low_hz is None or self.high_hz is None or not 0 < self.low_hz < self.high_hz < nyquist:
                raise ConfigurationError(f'Band-pass edges [{self.low_hz}, {self.high_hz}] Hz must satisfy '
                                         f'0 < low < high < {nyquist} Hz')
        elif self.center_hz is None or not 0 < self.center_hz < nyquist:
            raise ConfigurationError(f'Notch center={self.center_hz} Hz must be in (0, {nyquist}) Hz')

    def to_dict(self) -> Dict[str, Any]:
        return {**asdict(self), 'kind': self.kind.value}


@dataclass(frozen=True)
class StftSpec:
    window_s: float = 1.
    overlap_samples: int = 50
    freq_res_hz: float = 2.

    def __post_init__(self):
        if not self.window_s > 0:
            raise ConfigurationError(f'STFT window={self.window_s}s must be positive')
        if self.overlap_samples < 0:
            raise ConfigurationError(f'STFT overlap={self.overlap_samples} cannot be negative')
        if not self.freq_res_hz > 0:
            raise ConfigurationError(f'STFT frequency resolution={self.freq_res_hz} Hz must be positive')

    def window_samples(self, fs: float) -> int:
        return int(round(self.window_s * fs))

    def hop_samples(self, fs: float) -> int:
        hop = self.window_samples(fs) - self.overlap_samples
        if hop < 1:
            raise ConfigurationError(f'Window of {self.window_samples(fs)} samples must be longer than '
                                     f'overlap={self.overlap_samples}')
        return hop

    def n_bins(self, fs: float) -> int:
        return int(math.floor((fs / 2) / self.freq_res_hz))

    def n_frames(self, n_samples: int, fs: float) -> int:
        window = self.window_samples(fs)
        if n_samples < window:
            return 0
        return (n_samples - window) // self.hop_samples(fs) + 1


@dataclass
class Spectrogram:
    magnitudes: np.ndarray  # (bins, frames)
    bin_hz: float
    frame_hop_samples: int

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[1]


def butterworth_bandpass(signal: Signal, spec: FilterSpec) -> Signal:
    """
    Zero-phase (forward-backward) Butterworth band-pass. `spec.order` is the band-pass order, so the analog
    prototype has order `spec.order // 2`
    """
    spec.validate_for(signal.fs)
    sos = butter(spec.order // 2, [spec.low_hz, spec.high_hz], btype='band', fs=signal.fs, output='sos')
    return signal.with_samples(sosfiltfilt(sos, np.asarray(signal.samples, dtype=np.float64)))


def notch(signal: Signal, center_hz: float, quality_q: float = 30.) -> Signal:
    FilterSpec.notch(center_hz, quality_q).validate_for(signal.fs)
    b, a = iirnotch(center_hz, quality_q, fs=signal.fs)
    return signal.with_samples(filtfilt(b, a, np.asarray(signal.samples, dtype=np.float64)))


def apply_filter(signal: Signal, spec: FilterSpec) -> Signal:
    if spec.kind == FilterKind.NOTCH:
        return notch(signal, spec.center_hz, spec.quality_q)
    return butterworth_bandpass(signal, spec)


def resample(signal: Signal, new_fs: float) -> Signal:
    """
    Linear interpolation on the new time grid, output length `round(len * new_fs / fs)`
    """
    if not new_fs > 0:
        raise ConfigurationError(f'Resampling rate={new_fs} must be positive')
    if new_fs == signal.fs:
        return signal
    n_out = int(round(signal.n_samples * new_fs / signal.fs))
    samples = np.asarray(signal.samples, dtype=np.float64)
    if signal.n_samples == 1:
        return signal.with_samples(np.full(n_out, samples[0]), fs=new_fs)
    t_in = np.arange(signal.n_samples) / signal.fs
    t_out = np.arange(n_out) / new_fs
    interpolator = interp1d(t_in, samples, kind='linear', fill_value='extrapolate', assume_sorted=True)
    return signal.with_samples(interpolator(t_out), fs=new_fs)


def stft(signal: Signal, spec: StftSpec) -> Spectrogram:
    """
    Hann windowed magnitude spectra with native 1 Hz bins (DFT length is `fs` rounded, or the next multiple of it
    when the window is longer), averaged in groups of `freq_res_hz`
    """
    fs = signal.fs
    window = spec.window_samples(fs)
    hop = spec.hop_samples(fs)
    if signal.n_samples < window:
        raise InputError(f'Signal of {signal.n_samples} samples is shorter than one STFT window of {window} samples')

    base_nfft = max(int(round(fs)), 1)
    nfft = base_nfft * int(math.ceil(window / base_nfft))
    native_bin_hz = fs / nfft
    group = spec.freq_res_hz / native_bin_hz
    if abs(group - round(group)) > 1e-9 or round(group) < 1:
        raise ConfigurationError(f'Frequency resolution={spec.freq_res_hz} Hz is not a whole number of native '
                                 f'{native_bin_hz:.4f} Hz bins')
    group = int(round(group))
    n_bins = spec.n_bins(fs)
    n_frames = spec.n_frames(signal.n_samples, fs)

    samples = np.asarray(signal.samples, dtype=np.float64)
    hann = get_window('hann', window)
    starts = np.arange(n_frames) * hop
    frames = np.stack([samples[start:start + window] * hann for start in starts])
    spectra = np.abs(np.fft.rfft(frames, n=nfft, axis=1))  # (frames, nfft // 2 + 1)
    magnitudes = spectra[:, :n_bins * group].reshape(n_frames, n_bins, group).mean(axis=2).T
    return Spectrogram(magnitudes, spec.freq_res_hz, hop)


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InputError('Cannot normalize an empty sequence')
    low, high = values.min(), values.max()
    if high == low:
        return np.zeros_like(values)
    return (values - low) / (high - low)


def augment_balance(dataset: Dataset, noise_fraction: float = .5, noise_scale: float = .1,
                    seed: int = 0) -> Dataset:
    """
    Upsample minority classes by random duplication up to the majority count, then add gaussian noise
    (std = `noise_scale` x signal std) to `round(noise_fraction x records)` random records, which are flagged noisy
    """
    if not 0 <= noise_fraction <= 1:
        raise ConfigurationError(f'noise-fraction={noise_fraction} must be in [0, 1]')
    if noise_scale < 0:
        raise ConfigurationError(f'noise-scale={noise_scale} cannot be negative')
    counts = dataset.class_counts()
    empty = [label for label, count in counts.items() if count == 0]
    if empty:
        raise InputError(f'Cannot balance, classes {empty} have no records')

    rng = get_rng(seed, 'augment')
    majority = max(counts.values())
    records = list(dataset.records)
    for label in dataset.classes:
        class_records = [record for record in dataset.records if record.label == label]
        deficit = majority - len(class_records)
        for duplicate_index, source_index in enumerate(rng.integers(0, len(class_records), size=deficit)):
            source = class_records[source_index]
            records.append(replace(source, record_id=f'{source.record_id}-dup{duplicate_index}',
                                   provenance={**source.provenance, 'duplicate_of': source.record_id}))

    n_noisy = int(round(noise_fraction * len(records)))
    for index in sorted(rng.choice(len(records), size=n_noisy, replace=False)):
        record = records[index]
        samples = record.signal.samples
        if noise_scale > 0:
            noise = rng.normal(0., noise_scale * float(np.std(samples)), size=samples.size)
            samples = (samples + noise).astype(samples.dtype)
        records[index] = replace(record, signal=record.signal.with_samples(samples), noisy=True)

    logger.info('Augmented dataset from %d to %d records, noisy=%d', len(dataset), len(records), n_noisy)
    return replace(dataset, records=tuple(records))


@dataclass(frozen=True)
class PreprocessPipeline:
    """
    resample -> band-pass -> notch -> STFT -> min-max -> flatten (bins major)
    """
    target_fs: float = 256.
    bandpass_spec: Optional[FilterSpec] = field(default_factory=lambda: FilterSpec.butterworth_bandpass(.5, 60.))
    notch_spec: Optional[FilterSpec] = field(default_factory=lambda: FilterSpec.notch(50., 30.))
    stft_spec: StftSpec = field(default_factory=StftSpec)
    normalize: bool = True

    def __post_init__(self):
        if not self.target_fs > 0:
            raise ConfigurationError(f'target-fs={self.target_fs} must be positive')
        for spec in (self.bandpass_spec, self.notch_spec):
            if spec is not None:
                spec.validate_for(self.target_fs)

    def condition(self, signal: Signal) -> Signal:
        signal = resample(signal, self.target_fs)
        if self.bandpass_spec is not None:
            signal = apply_filter(signal, self.bandpass_spec)
        if self.notch_spec is not None:
            signal = apply_filter(signal, self.notch_spec)
        return signal

    def spectrogram(self, signal: Signal) -> Spectrogram:
        return stft(self.condition(signal), self.stft_spec)

    def __call__(self, signal: Signal) -> np.ndarray:
        magnitudes = self.spectrogram(signal).magnitudes
        if self.normalize:
            magnitudes = minmax_normalize(magnitudes)
        return magnitudes.ravel()

    def input_dim(self, duration_s: float) -> int:
        n_samples = int(round(duration_s * self.target_fs))
        n_frames = self.stft_spec.n_frames(n_samples, self.target_fs)
        if n_frames == 0:
            raise ConfigurationError(f'Recordings of {duration_s}s are shorter than one STFT window')
        return self.stft_spec.n_bins(self.target_fs) * n_frames

    def to_dict(self) -> Dict[str, Any]:
        return {
            'target_fs': self.target_fs,
            'bandpass': self.bandpass_spec.to_dict() if self.bandpass_spec else None,
            'notch': self.notch_spec.to_dict() if self.notch_spec else None,
            'stft': asdict(self.stft_spec),
            'normalize': self.normalize,
        }
