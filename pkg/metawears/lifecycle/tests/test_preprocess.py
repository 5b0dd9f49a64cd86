from django.test import SimpleTestCase

import numpy as np

from ..biosignal.preprocess import (FilterSpec, PreprocessPipeline, StftSpec,
                                    augment_balance, butterworth_bandpass,
                                    minmax_normalize, notch, resample, stft)
from ..exceptions import ConfigurationError, InputError
from ..models import Dataset, Domain, Role
from ..services.preprocess_service import PreprocessService
from .factories import RecordFactory, SignalFactory, small_dataset


def sine(frequency_hz: float, fs: float, duration_s: float, amplitude: float = 1.) -> np.ndarray:
    t = np.arange(int(round(duration_s * fs))) / fs
    return amplitude * np.sin(2 * np.pi * frequency_hz * t)


def steady_amplitude(samples: np.ndarray, fs: float, edge_s: float) -> float:
    edge = int(edge_s * fs)
    return float(np.max(np.abs(samples[edge:-edge])))


def decibels(ratio: float) -> float:
    return 20 * np.log10(ratio)


class TestFilters(SimpleTestCase):
    band = FilterSpec.butterworth_bandpass(.5, 60.)

    def test_filter_spec(self):
        with self.assertRaises(ConfigurationError):
            FilterSpec.butterworth_bandpass(.5, 60., order=3)
        with self.assertRaises(ConfigurationError):
            FilterSpec.notch(50., quality_q=0.)
        with self.assertRaises(ConfigurationError):
            FilterSpec.butterworth_bandpass(.5, 200.).validate_for(256.)
        with self.assertRaises(ConfigurationError):
            FilterSpec.butterworth_bandpass(0., 60.).validate_for(256.)
        with self.assertRaises(ConfigurationError):
            FilterSpec.notch(150.).validate_for(256.)
        self.band.validate_for(256.)
        self.assertEqual(self.band.to_dict()['kind'], 'butterworth_bandpass')

    def test_butterworth_bandpass(self):
        fs = 256.
        constant = butterworth_bandpass(SignalFactory(samples=np.full(2560, 3.), fs=fs), self.band)
        self.assertLess(steady_amplitude(constant.samples, fs, 1.), .01 * 3.)

        passed = butterworth_bandpass(SignalFactory(samples=sine(10., fs, 10.), fs=fs), self.band)
        self.assertLess(abs(decibels(steady_amplitude(passed.samples, fs, 1.))), 1.)

        stopped = butterworth_bandpass(SignalFactory(samples=sine(100., fs, 10.), fs=fs), self.band)
        self.assertLessEqual(decibels(steady_amplitude(stopped.samples, fs, 1.)), -20.)

        with self.assertRaises(ConfigurationError):
            butterworth_bandpass(SignalFactory(fs=100.), self.band)

    def test_notch(self):
        fs = 256.
        mains = notch(SignalFactory(samples=sine(50., fs, 20.), fs=fs), 50., 30.)
        self.assertLessEqual(decibels(steady_amplitude(mains.samples, fs, 3.)), -30.)

        passed = notch(SignalFactory(samples=sine(10., fs, 20.), fs=fs), 50., 30.)
        self.assertLess(abs(decibels(steady_amplitude(passed.samples, fs, 3.))), .5)

        zero = notch(SignalFactory(samples=np.zeros(512), fs=fs), 50.)
        self.assertFalse(np.any(zero.samples))

        with self.assertRaises(ConfigurationError):
            notch(SignalFactory(fs=fs), 0.)

    def test_filters_are_linear(self):
        fs = 256.
        samples = np.random.default_rng(3).normal(size=2048)
        for scale in (3.7, -.25, 1e3):
            for apply in (lambda signal: butterworth_bandpass(signal, self.band),
                          lambda signal: notch(signal, 50., 30.)):
                filtered = apply(SignalFactory(samples=samples, fs=fs)).samples
                scaled = apply(SignalFactory(samples=scale * samples, fs=fs)).samples
                np.testing.assert_allclose(scaled, scale * filtered, rtol=0, atol=1e-10 * max(1., abs(scale)))

    def test_resample(self):
        signal = SignalFactory(fs=200., samples=sine(5., 200., 2.))
        self.assertIs(resample(signal, 200.), signal)
        self.assertEqual(resample(SignalFactory(samples=np.ones(400), fs=200.), 100.).n_samples, 200)

        original = SignalFactory(samples=sine(5., 256., 2.), fs=256.)
        resampled = resample(original, 200.)
        self.assertEqual(resampled.fs, 200.)
        self.assertEqual(resampled.n_samples, 400)
        error = np.abs(resampled.samples - sine(5., 200., 2.))
        self.assertLess(error.max(), .01)
        self.assertEqual(resampled.patient_id, original.patient_id)

        with self.assertRaises(ConfigurationError):
            resample(signal, 0.)

    def test_resample_round_trip(self):
        fs = 256.
        samples = sine(1.5, fs, 8.) + sine(6., fs, 8., amplitude=.4)
        there = resample(SignalFactory(samples=samples, fs=fs), 200.)
        back = resample(there, fs)
        self.assertEqual(back.n_samples, len(samples))
        rms = np.sqrt(np.mean(samples ** 2))
        error_rms = np.sqrt(np.mean((back.samples - samples) ** 2))
        self.assertLess(error_rms, .02 * rms)


class TestStft(SimpleTestCase):
    def test_stft_shape(self):
        spec = StftSpec()
        signal = SignalFactory(samples=np.random.default_rng(0).normal(size=3072), fs=256.)
        spectrogram = stft(signal, spec)
        self.assertEqual(spectrogram.magnitudes.shape, (64, 14))
        self.assertEqual(spectrogram.frame_hop_samples, 206)
        self.assertEqual(spectrogram.bin_hz, 2.)
        self.assertEqual(spec.n_frames(3072, 256.), 14)
        self.assertEqual(spec.n_bins(256.), 64)

    def test_stft_peak(self):
        spectrogram = stft(SignalFactory(samples=sine(8., 256., 12.), fs=256.), StftSpec())
        peaks = np.argmax(spectrogram.magnitudes, axis=0)
        np.testing.assert_array_equal(peaks * spectrogram.bin_hz, np.full(spectrogram.n_frames, 8.))

        zero = stft(SignalFactory(samples=np.zeros(512), fs=256.), StftSpec())
        self.assertFalse(np.any(zero.magnitudes))

    def test_stft_errors(self):
        with self.assertRaises(InputError):
            stft(SignalFactory(samples=np.zeros(100), fs=256.), StftSpec())
        with self.assertRaises(ConfigurationError):
            stft(SignalFactory(samples=np.zeros(512), fs=256.), StftSpec(freq_res_hz=1.5))
        with self.assertRaises(ConfigurationError):
            StftSpec(window_s=0.)
        with self.assertRaises(ConfigurationError):
            StftSpec(overlap_samples=256).hop_samples(256.)

    def test_minmax_normalize(self):
        np.testing.assert_array_equal(minmax_normalize(np.array([-1., 0., 1.])), [0., .5, 1.])
        np.testing.assert_array_equal(minmax_normalize(np.array([3., 3., 3.])), [0., 0., 0.])
        with self.assertRaises(InputError):
            minmax_normalize(np.array([]))


class TestAugmentation(SimpleTestCase):
    def make_dataset(self, counts) -> Dataset:
        records = []
        for label, count in counts.items():
            records += [RecordFactory(signal=SignalFactory(label=label)) for _ in range(count)]
        return Dataset.from_records(tuple(counts), records)

    def test_augment_balance(self):
        dataset = self.make_dataset({'A': 10, 'B': 3})
        augmented = augment_balance(dataset, noise_fraction=0., seed=1)
        self.assertEqual(augmented.class_counts(), {'A': 10, 'B': 10})
        self.assertEqual(augmented.records[:13], dataset.records)
        duplicates = [record for record in augmented if 'duplicate_of' in record.provenance]
        self.assertEqual(len(duplicates), 7)
        originals = {record.record_id: record for record in dataset}
        for duplicate in duplicates:
            source = originals[duplicate.provenance['duplicate_of']]
            self.assertEqual(duplicate.label, 'B')
            self.assertEqual(duplicate.signal.samples.tobytes(), source.signal.samples.tobytes())

        self.assertEqual(augment_balance(dataset, seed=1).record_ids, augment_balance(dataset, seed=1).record_ids)

    def test_augment_noise(self):
        dataset = self.make_dataset({'A': 10, 'B': 10})
        augmented = augment_balance(dataset, noise_fraction=.5, noise_scale=.1, seed=2)
        noisy = [record for record in augmented if record.noisy]
        self.assertEqual(len(noisy), 10)
        originals = {record.record_id: record for record in dataset}
        for record in noisy:
            self.assertFalse(np.array_equal(record.signal.samples, originals[record.record_id].signal.samples))
            self.assertEqual(record.signal.samples.dtype, np.float32)

        silent = augment_balance(dataset, noise_fraction=.5, noise_scale=0., seed=2)
        self.assertEqual(len([record for record in silent if record.noisy]), 10)
        for record in silent:
            self.assertEqual(record.signal.samples.tobytes(), originals[record.record_id].signal.samples.tobytes())

    def test_augment_errors(self):
        with self.assertRaises(InputError):
            augment_balance(self.make_dataset({'A': 3, 'B': 0}))
        with self.assertRaises(ConfigurationError):
            augment_balance(self.make_dataset({'A': 3, 'B': 3}), noise_fraction=1.5)
        with self.assertRaises(ConfigurationError):
            augment_balance(self.make_dataset({'A': 3, 'B': 3}), noise_scale=-1.)


class TestPreprocessPipeline(SimpleTestCase):
    def test_pipeline(self):
        pipeline = PreprocessPipeline()
        self.assertEqual(pipeline.input_dim(4.), 256)
        self.assertEqual(pipeline.input_dim(1.), 64)
        dataset = small_dataset(domains=(Domain.BASE, Domain.TARGET), patients_per_domain=1,
                                records_per_patient_per_class=1, duration_s=4.)
        for record in dataset:
            values = pipeline(record.signal)
            self.assertEqual(values.shape, (256,))
            self.assertEqual(values.min(), 0.)
            self.assertEqual(values.max(), 1.)
            np.testing.assert_array_equal(values, pipeline(record.signal))

        raw = PreprocessPipeline(bandpass_spec=None, notch_spec=None, normalize=False)
        signal = dataset.records[0].signal
        self.assertIs(raw.condition(signal), signal)
        self.assertEqual(raw.to_dict()['bandpass'], None)
        self.assertGreater(raw(signal).max(), 1.)

        with self.assertRaises(ConfigurationError):
            PreprocessPipeline(target_fs=100.)
        with self.assertRaises(ConfigurationError):
            pipeline.input_dim(.5)

    def test_preprocess_service(self):
        service = PreprocessService(PreprocessPipeline(), cache_size=4)
        dataset = small_dataset(patients_per_domain=1, records_per_patient_per_class=3)
        record = dataset.records[0]
        values = service.get_input(record)
        self.assertIs(service.get_input(record), values)
        self.assertFalse(values.flags.writeable)
        self.assertEqual(len(service.cache), 1)

        inputs = service.get_inputs(dataset.records)
        self.assertEqual(inputs.shape, (6, 64))
        self.assertEqual(len(service.cache), 4)
        np.testing.assert_array_equal(inputs[0], values)
        self.assertEqual(service.get_inputs([]).shape, (0, 0))

        service.clear()
        self.assertEqual(len(service.cache), 0)
        self.assertEqual(service.cache.maxsize, 4)

    def test_roles_survive_preprocessing(self):
        dataset = small_dataset(domains=(Domain.TEST,), patients_per_domain=1, records_per_patient_per_class=1)
        self.assertEqual({record.role for record in dataset}, {Role.TEST})
        self.assertEqual(PreprocessService(PreprocessPipeline()).get_inputs(dataset.records).shape, (2, 64))
