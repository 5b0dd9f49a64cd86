import csv
import json
import os
import shutil
import tempfile
from io import StringIO

from django.core.management import call_command
from django.test import SimpleTestCase

import numpy as np

from ..engine.checkpoints import load_params, load_prototypes
from ..management.commands.pretrain import Command as PretrainCommand
from ..management.lifecycle_command import RESOLVED_CONFIG, RUN_LOG
from ..run_config import load_run_config
from ..services.dataset_service import load_dataset

TINY_CONFIG = {
    'seed': 11,
    'generation': {
        'duration_s': 1.,
        'records_per_patient_per_class': 4,
        'patients': {'base': 3, 'target': 5, 'new': 2, 'test': 2},
    },
    'encoder': {'hidden_layers': [8], 'feature_dim': 4},
    'episode': {'k': 1, 'm': 1},
    'pretrain': {'episodes_per_epoch': 2, 'max_epochs': 2},
    'finetune': {'episodes_per_epoch': 2, 'max_epochs': 2, 'validation_fraction': .4, 'validation_episodes': 1},
    'evaluation': {'iterations': 2, 'deploy_k': 1, 'k_values': [0, 1], 'ablation_runs': 2},
}


def run_command(name: str, *args, **options):
    stdout, stderr = StringIO(), StringIO()
    call_command(name, *args, stdout=stdout, stderr=stderr, **options)
    return stdout.getvalue()


class TestCommands(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.out = tempfile.mkdtemp()
        cls.config_path = os.path.join(cls.out, 'config.json')
        with open(cls.config_path, 'w') as f:
            json.dump(TINY_CONFIG, f)
        for name in ('generate', 'pretrain', 'finetune', 'deploy'):
            run_command(name, '--config', cls.config_path, '--out', cls.out)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.out)
        super().tearDownClass()

    def stage_file(self, stage: str, name: str) -> str:
        return os.path.join(self.out, stage, name)

    def run_stage(self, name: str, *args) -> str:
        return run_command(name, '--config', self.config_path, '--out', self.out, *args)

    def read_json(self, stage: str, name: str):
        with open(self.stage_file(stage, name)) as f:
            return json.load(f)

    def test_generate(self):
        summary = self.read_json('generate', 'summary.json')
        self.assertEqual(summary['base']['records'], 3 * 2 * 4)
        self.assertEqual(summary['test']['patients'], ['test-p000', 'test-p001'])
        dataset = load_dataset(summary['new']['path'])
        self.assertEqual(len(dataset), 2 * 2 * 4)
        self.assertEqual(dataset.records[0].signal.fs, 200.)

        resolved = self.read_json('generate', RESOLVED_CONFIG)
        self.assertEqual(resolved['seed'], 11)
        self.assertEqual(resolved['generation']['patients']['target'], 5)
        self.assertEqual(resolved['episode'], {'n_support_patients': 1, 'n_query_patients': 1, 'k': 1, 'm': 1})
        self.assertTrue(os.path.exists(self.stage_file('generate', RUN_LOG)))

    def test_services_follow_run_config(self):
        command = PretrainCommand()
        command.config = load_run_config(self.config_path, out=self.out)
        self.assertEqual(command.meta_training_service.episode_spec, command.config.episode_spec())
        self.assertEqual((command.meta_training_service.episode_spec.k, command.meta_training_service.episode_spec.m),
                         (1, 1))
        self.assertIs(command.meta_training_service.preprocess_service, command.preprocess_service)
        self.assertEqual(command.preprocess_service.pipeline, command.config.preprocess)
        self.assertIs(command.evaluation_service.meta_training_service, command.meta_training_service)

    def test_training_artifacts(self):
        params = load_params(self.stage_file('finetune', 'params.mwsp'))
        self.assertEqual(params.shapes, [(8, 64), (4, 8)])
        with open(self.stage_file('pretrain', 'loss_history.csv')) as f:
            self.assertEqual(len(list(csv.reader(f))), 3)
        best_epoch = self.read_json('finetune', 'best_epoch.json')
        self.assertIn(best_epoch['best_epoch'], (1, 2))
        with open(self.stage_file('pretrain', RUN_LOG)) as f:
            self.assertIn('Running command=pretrain', f.read())

        prototypes = load_prototypes(self.stage_file('deploy', 'prototypes.mwsc'))
        self.assertEqual(prototypes.classes, ('normal', 'abnormal'))
        self.assertEqual(prototypes.vectors.shape, (2, 4))

    def test_pretrain_is_deterministic(self):
        with open(self.stage_file('pretrain', 'params.mwsp'), 'rb') as f:
            first = f.read()
        self.run_stage('pretrain')
        with open(self.stage_file('pretrain', 'params.mwsp'), 'rb') as f:
            self.assertEqual(f.read(), first)

    def test_eval(self):
        self.run_stage('eval', '--prototypes', self.stage_file('deploy', 'prototypes.mwsc'))
        metrics = self.read_json('eval', 'metrics.json')
        self.assertEqual(len(metrics['aucs']), 2)
        self.assertTrue(0 <= metrics['deployed_auc'] <= 1)

    def test_prototypes_without_sidecar(self):
        bare_path = os.path.join(self.out, 'bare.mwsc')
        shutil.copyfile(self.stage_file('deploy', 'prototypes.mwsc'), bare_path)
        self.assertFalse(os.path.exists(bare_path + '.meta.json'))

        self.run_stage('eval', '--prototypes', bare_path)
        self.assertTrue(0 <= self.read_json('eval', 'metrics.json')['deployed_auc'] <= 1)

        sample_path = os.path.join(self.out, 'bare_sample.json')
        with open(sample_path, 'w') as f:
            json.dump({'fs': 200., 'samples': np.cos(2 * np.pi * 4. * np.arange(200) / 200.).tolist()}, f)
        result = json.loads(self.run_stage('infer', '--prototypes', bare_path, '--sample', sample_path))
        self.assertIn(result['predicted_class'], ('normal', 'abnormal'))
        self.assertEqual(set(result['probabilities']), {'normal', 'abnormal'})

    def test_update(self):
        report = json.loads(self.run_stage('update'))
        self.assertEqual(report['k'], 1)
        self.assertEqual(report['prototype_payload_bytes'], 2 * 4 * 4)
        self.assertEqual(report['model_payload_bytes'], (8 * 64 + 8 + 4 * 8 + 4) * 2)
        self.assertAlmostEqual(report['savings_ratio'], 1112 / 32)
        self.assertEqual(report['scenario'], 'epilepsy')
        self.assertEqual(report['encoder_checksum'], load_params(self.stage_file('finetune', 'params.mwsp')).checksum())
        self.assertTrue(os.path.exists(self.stage_file('update', 'prototypes_k1.mwsc')))
        self.assertEqual(set(report['profiles']), {'epilepsy-low-latency', 'epilepsy-low-power'})

    def test_update_errors(self):
        stderr = StringIO()
        with self.assertRaises(SystemExit) as context:
            call_command('update', '--config', self.config_path, '--out', self.out, '--k', '50', stderr=stderr,
                         stdout=StringIO())
        self.assertEqual(context.exception.code, 2)
        error = json.loads(stderr.getvalue())
        self.assertEqual(error['error'], 'SamplingError')
        self.assertEqual(error['exit_code'], 2)
        self.assertIn('needs 50 records', error['message'])

        with self.assertRaises(SystemExit) as context:
            call_command('update', '--config', self.config_path, '--out', self.out, '--k', 'many',
                         stderr=StringIO(), stdout=StringIO())
        self.assertEqual(context.exception.code, 1)

        with self.assertRaises(SystemExit) as context:
            call_command('deploy', '--config', self.config_path, '--out', self.out, '--checkpoint',
                         os.path.join(self.out, 'missing.mwsp'), stderr=StringIO(), stdout=StringIO())
        self.assertEqual(context.exception.code, 2)

    def test_bad_config(self):
        config_path = os.path.join(self.out, 'bad_config.json')
        with open(config_path, 'w') as f:
            json.dump({'pretrain': {'learning_rate': 1.}}, f)
        stderr = StringIO()
        with self.assertRaises(SystemExit) as context:
            call_command('pretrain', '--config', config_path, '--out', self.out, stderr=stderr, stdout=StringIO())
        self.assertEqual(context.exception.code, 1)
        self.assertIn('pretrain.learning_rate', json.loads(stderr.getvalue())['message'])

    def test_quantize(self):
        self.run_stage('quantize')
        fidelity = self.read_json('quantize', 'fidelity.json')
        self.assertEqual(fidelity['n_samples'], 2 * 2 * 4)
        self.assertEqual(fidelity['frac_bits'], 12)
        self.assertLess(fidelity['max_feature_deviation'], .1)
        self.assertTrue(os.path.exists(self.stage_file('quantize', 'params.mwsq')))

    def test_infer(self):
        sample_path = os.path.join(self.out, 'sample.json')
        t = np.arange(200) / 200.
        with open(sample_path, 'w') as f:
            json.dump({'fs': 200., 'samples': np.sin(2 * np.pi * 8. * t).tolist()}, f)
        result = json.loads(self.run_stage('infer', '--sample', sample_path))
        self.assertIn(result['predicted_class'], ('normal', 'abnormal'))
        self.assertAlmostEqual(sum(result['probabilities'].values()), 1.)

        with open(sample_path, 'w') as f:
            json.dump({'fs': 200., 'samples': []}, f)
        with self.assertRaises(SystemExit) as context:
            call_command('infer', '--config', self.config_path, '--out', self.out, '--sample', sample_path,
                         stderr=StringIO(), stdout=StringIO())
        self.assertEqual(context.exception.code, 2)

    def test_sweep_k(self):
        self.run_stage('sweep_k')
        with open(self.stage_file('sweep_k', 'auc_by_k.csv')) as f:
            rows = list(csv.reader(f))
        self.assertEqual([row[0] for row in rows], ['k', '0', '1'])
        with open(self.stage_file('sweep_k', 'trajectory.csv')) as f:
            trajectory = [row for row in csv.DictReader(f) if row['kind'] == 'prototype']
        self.assertEqual(len(trajectory), 4)
        self.assertTrue(os.path.exists(self.stage_file('sweep_k', 'projection.csv')))

    def test_ablation(self):
        self.run_stage('ablation')
        comparison = self.read_json('ablation', 'comparison.json')
        self.assertEqual(set(comparison['aucs']), {'metawears', 'without_finetune', 'without_base', 'source_only'})
        self.assertEqual(len(comparison['seeds']), 2)
        self.assertEqual(set(comparison['comparisons']), {'without_finetune', 'without_base', 'source_only'})


class TestSimulateCommand(SimpleTestCase):
    def setUp(self):
        self.out = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.out)

    def test_simulate_preset(self):
        output = run_command('simulate', '--preset', 'epilepsy', '--out', self.out)
        self.assertIn('savings ratio (model / prototypes): 456.25x', output)
        with open(os.path.join(self.out, 'simulate', 'report.json')) as f:
            report = json.load(f)
        self.assertAlmostEqual(report['modes'][0]['avg_power_mw'], 23.66, places=2)
        with open(os.path.join(self.out, 'simulate', RESOLVED_CONFIG)) as f:
            self.assertEqual(json.load(f)['name'], 'epilepsy')

    def test_simulate_scenario_file(self):
        scenario_path = os.path.join(self.out, 'scenario.json')
        with open(scenario_path, 'w') as f:
            json.dump({'preset': 'af', 'memory': {'regions': [{'name': 'model', 'bytes': 500_000}]}}, f)
        stderr = StringIO()
        with self.assertRaises(SystemExit) as context:
            call_command('simulate', '--config', scenario_path, '--out', self.out, stderr=stderr, stdout=StringIO())
        self.assertEqual(context.exception.code, 1)
        self.assertEqual(json.loads(stderr.getvalue())['error'], 'MemoryBudgetExceeded')
