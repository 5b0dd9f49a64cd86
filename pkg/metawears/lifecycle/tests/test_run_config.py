import json
import os
import tempfile

from django.test import SimpleTestCase, override_settings

from ..engine.encoder import Activation
from ..engine.quantization import ElementType, PayloadKind
from ..exceptions import ConfigurationError
from ..models import DEFAULT_CLASSES, Domain
from ..run_config import (build_run_config, build_scenario, load_run_config,
                          load_scenario, scenario_to_dict, validate_document)
from ..serializers import (RunConfigSerializer, SampleSerializer,
                           ScenarioSerializer)
from ..services.update_simulation_service import PowerMode, get_preset

LOW_POWER_PROFILE = {
    'mode': 'low_power',
    'frequency_mhz': 75.,
    'active_power_mw': 3.7,
    'voltage_v': .8,
    'window_s': 12.,
    'exec_time_s': 12.,
}


class TestSerializers(SimpleTestCase):
    def test_empty_config(self):
        serializer = RunConfigSerializer(data={})
        self.assertTrue(serializer.is_valid())
        self.assertEqual(serializer.validated_data, {})

    def test_unknown_keys(self):
        for data, path in [
            ({'bogus': 1}, 'bogus'),
            ({'pretrain': {'lrr': .1}}, 'pretrain.lrr'),
            ({'generation': {'domains': {'base': {'fs': 256., 'colour': 'red'}}}}, 'generation.domains.base.colour'),
            ({'hardware': {'preset': 'af', 'payloads': [{'kind': 'model', 'bytes': 1, 'crc': 0}]}},
             'hardware.payloads[0].crc'),
        ]:
            with self.subTest(path=path):
                with self.assertRaisesMessage(ConfigurationError, f'{path}: Unknown field.'):
                    validate_document(RunConfigSerializer, data, 'config')

    def test_invalid_values(self):
        for data in [
            {'seed': -1},
            {'classes': ['normal']},
            {'classes': ['normal', 'normal']},
            {'pretrain': {'momentum': 1.}},
            {'finetune': {'validation_fraction': 0.}},
            {'preprocess': {'bandpass': {'low_hz': 60., 'high_hz': .5}}},
            {'preprocess': {'bandpass': {'low_hz': .5, 'high_hz': 60., 'order': 3}}},
            {'encoder': {'activation': 'sigmoid'}},
            {'encoder': {'hidden_layers': []}},
            {'prototypes': {'element_type': 'int8'}},
            {'generation': {'duration_s': 0.}},
        ]:
            with self.subTest(data=data):
                self.assertFalse(RunConfigSerializer(data=data).is_valid())

    def test_scenario_serializer(self):
        data = validate_document(ScenarioSerializer, {'hardware': LOW_POWER_PROFILE}, 'scenario')
        self.assertEqual(len(data['hardware']), 1)

        with self.assertRaisesMessage(ConfigurationError, 'needs a preset or a hardware section'):
            validate_document(ScenarioSerializer, {'name': 'empty'}, 'scenario')
        with self.assertRaisesMessage(ConfigurationError, 'idle_power_mw'):
            validate_document(ScenarioSerializer, {'hardware': {**LOW_POWER_PROFILE, 'mode': 'low_latency'}},
                              'scenario')
        with self.assertRaisesMessage(ConfigurationError, 'exactly one of bytes or shapes'):
            validate_document(ScenarioSerializer, {'preset': 'af', 'payloads': [{'kind': 'model'}]}, 'scenario')
        with self.assertRaisesMessage(ConfigurationError, 'single [n_classes, feature_dim] shape'):
            validate_document(ScenarioSerializer, {'preset': 'af', 'payloads': [
                {'kind': 'prototypes', 'shapes': [[2, 16], [2, 16]], 'element_type': 'fixed16'}]}, 'scenario')

    def test_sample_serializer(self):
        self.assertTrue(SampleSerializer(data={'fs': 200., 'samples': [0., 1.]}).is_valid())
        self.assertFalse(SampleSerializer(data={'fs': 0., 'samples': [0., 1.]}).is_valid())
        self.assertFalse(SampleSerializer(data={'fs': 200., 'samples': []}).is_valid())
        self.assertFalse(SampleSerializer(data={'fs': 200., 'samples': [1.], 'label': 'normal'}).is_valid())


class TestScenario(SimpleTestCase):
    def test_build_custom_scenario(self):
        data = validate_document(ScenarioSerializer, {
            'name': 'patch',
            'hardware': LOW_POWER_PROFILE,
            'payloads': [
                {'kind': 'model', 'shapes': [[32, 64], [16, 32]], 'element_type': 'fixed16'},
                {'kind': 'prototypes', 'shapes': [[2, 16]], 'element_type': 'float32'},
            ],
        }, 'scenario')
        scenario = build_scenario(data)
        self.assertEqual(scenario.name, 'patch')
        self.assertEqual(scenario.profiles[0].name, 'profile-0')
        self.assertEqual(scenario.profiles[0].mode, PowerMode.LOW_POWER)
        self.assertEqual(scenario.link.throughput_bps, 1_000_000.)
        self.assertEqual(scenario.payload(PayloadKind.MODEL).bytes, (32 * 64 + 32 + 16 * 32 + 16) * 2)
        self.assertEqual(scenario.payload(PayloadKind.PROTOTYPES).bytes, 2 * 16 * 4)
        self.assertEqual(scenario.memory.regions, ())

    def test_preset_overrides(self):
        data = validate_document(ScenarioSerializer, {
            'preset': 'epilepsy',
            'link': {'protocol_efficiency': .5},
            'memory': {'total_kb': 256.},
            'updates_per_day': 1.,
        }, 'scenario')
        scenario = build_scenario(data)
        preset = get_preset('epilepsy')
        self.assertEqual(scenario.name, 'epilepsy')
        self.assertEqual(scenario.profiles, preset.profiles)
        self.assertEqual(scenario.payloads, preset.payloads)
        self.assertEqual(scenario.link.protocol_efficiency, .5)
        self.assertEqual(scenario.memory.total_kb, 256.)
        self.assertEqual(scenario.memory.regions, preset.memory.regions)
        self.assertEqual(scenario.updates_per_day, 1.)

    def test_scenario_round_trip(self):
        for name in ('epilepsy', 'af'):
            preset = get_preset(name)
            data = validate_document(ScenarioSerializer, scenario_to_dict(preset), 'scenario')
            self.assertEqual(build_scenario(data), preset)

    @override_settings(METAWEARS_DEFAULT_PRESET='af')
    def test_load_scenario(self):
        self.assertEqual(load_scenario().name, 'af')
        self.assertEqual(load_scenario(preset='epilepsy').name, 'epilepsy')
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = os.path.join(tmp_dir, 'scenario.json')
            with open(path, 'w') as f:
                json.dump({'preset': 'epilepsy', 'name': 'ward'}, f)
            self.assertEqual(load_scenario(path).name, 'ward')
            with self.assertRaises(ConfigurationError):
                load_scenario(os.path.join(tmp_dir, 'missing.json'))


class TestRunConfig(SimpleTestCase):
    def setUp(self):
        self.tmp_dir = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp_dir.cleanup()

    def write_config(self, data) -> str:
        path = os.path.join(self.tmp_dir.name, 'config.json')
        with open(path, 'w') as f:
            f.write(data if isinstance(data, str) else json.dumps(data))
        return path

    def test_defaults(self):
        config = load_run_config(out=self.tmp_dir.name)
        self.assertEqual(config.seed, 0)
        self.assertEqual(config.classes, DEFAULT_CLASSES)
        self.assertEqual(config.generation.records_per_patient_per_class, 24)
        self.assertEqual(config.generation.patients[Domain.BASE], 12)
        self.assertEqual(config.generation.domains[Domain.TARGET].fs, 200.)
        self.assertEqual(config.preprocess.input_dim(config.generation.duration_s), 256)
        self.assertEqual((config.episode.k, config.episode.m), (5, 15))
        self.assertEqual(config.prototype_element_type, ElementType.FLOAT32)
        self.assertEqual(config.scenario.name, 'epilepsy')
        self.assertEqual(config.datasets.path(Domain.NEW), os.path.join(self.tmp_dir.name, 'datasets', 'new'))

    def test_overrides(self):
        path = self.write_config({
            'seed': 3,
            'out': 'ignored',
            'encoder': {'hidden_layers': [8], 'activation': 'relu'},
            'preprocess': {'notch': None, 'bandpass': {'low_hz': 1., 'high_hz': 40.}},
            'evaluation': {'k_values': [0, 2]},
            'generation': {'patients': {'test': 2}, 'domains': {'new': {'fs': 128.}}},
            'prototypes': {'element_type': 'fixed16'},
            'hardware': {'preset': 'af'},
        })
        config = load_run_config(path, seed=9, out=self.tmp_dir.name)
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.out, self.tmp_dir.name)
        self.assertEqual(config.encoder.hidden_layers, (8,))
        self.assertEqual(config.encoder.activation, Activation.RELU)
        self.assertIsNone(config.preprocess.notch_spec)
        self.assertEqual(config.preprocess.bandpass_spec.high_hz, 40.)
        self.assertEqual(config.evaluation.k_values, (0, 2))
        self.assertEqual(config.generation.patients[Domain.TEST], 2)
        self.assertEqual(config.generation.patients[Domain.BASE], 12)
        self.assertEqual(config.generation.domains[Domain.NEW].fs, 128.)
        self.assertEqual(config.generation.domains[Domain.NEW].noise_std, 1.5)
        self.assertEqual(config.prototype_element_type, ElementType.FIXED16)
        self.assertEqual(config.scenario.name, 'af')

        encoder_config = config.encoder_config(256)
        self.assertEqual(encoder_config.input_dim, 256)
        self.assertEqual(encoder_config.seed, config.substream_seed('encoder'))
        self.assertNotEqual(config.pretrain_config().seed, config.finetune_config().seed)
        self.assertEqual(config.episode_spec().seed, config.substream_seed('episode'))

    def test_errors(self):
        with self.assertRaisesMessage(ConfigurationError, 'line 1'):
            load_run_config(self.write_config('{"seed": '))
        with self.assertRaisesMessage(ConfigurationError, 'finetune.patience'):
            load_run_config(self.write_config({'finetune': {'patience': 0}}))
        with self.assertRaises(ConfigurationError):
            load_run_config(os.path.join(self.tmp_dir.name, 'missing.json'))
        with self.assertRaises(ConfigurationError):
            load_run_config(seed=2 ** 64)
        with self.assertRaises(ConfigurationError):
            load_run_config(self.write_config({'hardware': {'preset': 'unknown'}}))

    def test_resolved_config(self):
        config = load_run_config(self.write_config({'hardware': {'preset': 'af'}, 'evaluation': {'iterations': 3}}),
                                 out=self.tmp_dir.name)
        resolved = config.to_dict()
        rebuilt = build_run_config(validate_document(RunConfigSerializer, resolved, 'resolved config'))
        self.assertEqual(rebuilt, config)
        self.assertEqual(rebuilt.config_hash(), config.config_hash())

        self.assertEqual(load_run_config(out=self.tmp_dir.name).config_hash(),
                         load_run_config(out=self.tmp_dir.name).config_hash())
        self.assertNotEqual(load_run_config(seed=1, out=self.tmp_dir.name).config_hash(),
                            load_run_config(seed=2, out=self.tmp_dir.name).config_hash())
