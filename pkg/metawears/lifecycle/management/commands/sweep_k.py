import csv

from ...engine.checkpoints import load_params
from ...models import Domain
from ...utils import write_json
from ..lifecycle_command import LifecycleCommand


class Command(LifecycleCommand):
    help = 'Test AUC and prototype trajectory as the support receives k new shots per class'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', help='Encoder checkpoint, defaults to the finetune output')
        parser.add_argument('--k-values', type=int, nargs='+',
                            help='Numbers of new shots, 0 for the deployment prototypes. Defaults to '
                                 'evaluation.k_values')

    def run(self, **options):
        params = load_params(options['checkpoint'] or self.stage_path('finetune', 'params.mwsp'))
        target = self.load_dataset(Domain.TARGET)
        dataset = target.merge(self.load_dataset(Domain.NEW))
        test = self.load_dataset(Domain.TEST)
        training_patients = self.load_dataset(Domain.BASE).patients() + target.patients()
        evaluation = self.config.evaluation
        k_values = options['k_values'] or list(evaluation.k_values)
        service = self.meta_training_service

        def prototype_builder(k):
            if k == 0:
                return lambda seed: service.build_prototypes_for_deployment(params, target, evaluation.deploy_k, seed)
            return lambda seed: service.update_prototypes(params, dataset, k, seed)

        rows = []
        for k in k_values:
            report = self.evaluation_service.meta_test(params, prototype_builder(k), test, evaluation.iterations,
                                                       self.config.substream_seed('eval'), training_patients,
                                                       self.config_hash)
            rows.append({'k': k, 'mean_auc': report.mean, 'std_auc': report.std, 'median_auc': report.median,
                         'aucs': report.aucs})
            self.stdout.write(self.style.SUCCESS(f'k={k} mean AUC={report.mean:.4f} std={report.std:.4f}'))

        with open(self.output_path('auc_by_k.csv'), 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['k', 'mean_auc', 'std_auc', 'median_auc'])
            for row in rows:
                writer.writerow([row['k'], repr(row['mean_auc']), repr(row['std_auc']), repr(row['median_auc'])])
        write_json(self.output_path('auc_by_k.json'), rows)

        trajectory = self.evaluation_service.prototype_trajectory(params, dataset, test, k_values,
                                                                  self.config.substream_seed('deploy'),
                                                                  evaluation.deploy_k)
        trajectory.write_csv(self.output_path('trajectory.csv'))
        projection = self.evaluation_service.episode_projection(params, target, self.config.episode_spec(),
                                                                self.config.substream_seed('projection'))
        projection.write_csv(self.output_path('projection.csv'))
