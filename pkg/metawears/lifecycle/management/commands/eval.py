from ...engine.checkpoints import load_params, load_prototypes
from ...models import Domain
from ...utils import write_json
from ..lifecycle_command import LifecycleCommand


class Command(LifecycleCommand):
    help = 'Meta-test: mean test AUC over seeded deployment iterations'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', help='Encoder checkpoint, defaults to the finetune output')
        parser.add_argument('--prototypes', help='Also score the test set against this deployed prototype file')

    def run(self, **options):
        params = load_params(options['checkpoint'] or self.stage_path('finetune', 'params.mwsp'))
        target = self.load_dataset(Domain.TARGET)
        test = self.load_dataset(Domain.TEST)
        training_patients = self.load_dataset(Domain.BASE).patients() + target.patients()
        evaluation = self.config.evaluation
        service = self.meta_training_service

        report = self.evaluation_service.meta_test(
            params,
            lambda seed: service.build_prototypes_for_deployment(params, target, evaluation.deploy_k, seed),
            test, evaluation.iterations, self.config.substream_seed('eval'), training_patients, self.config_hash)
        if options['prototypes']:
            prototypes = load_prototypes(options['prototypes'], self.config.classes)
            report.extra['deployed_auc'] = self.evaluation_service.score_dataset(
                service.encode_records(params, test.records), test, prototypes)
        write_json(self.output_path('metrics.json'), report.to_dict())
        report.write_csv(self.output_path('metrics.csv'))
        self.stdout.write(self.style.SUCCESS(f'Mean AUC={report.mean:.4f} std={report.std:.4f} over '
                                             f'{evaluation.iterations} iterations'))
