from ...engine.checkpoints import load_params, save_prototypes
from ...models import Domain
from ..lifecycle_command import LifecycleCommand


class Command(LifecycleCommand):
    help = 'Compute the class prototypes to deploy from a support set of the target dataset'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', help='Encoder checkpoint, defaults to the finetune output')
        parser.add_argument('--k', type=int, help='Shots per class, defaults to evaluation.deploy_k')

    def run(self, **options):
        params = load_params(options['checkpoint'] or self.stage_path('finetune', 'params.mwsp'))
        target = self.load_dataset(Domain.TARGET)
        k = options['k'] or self.config.evaluation.deploy_k
        prototypes = self.meta_training_service.build_prototypes_for_deployment(
            params, target, k, self.config.substream_seed('deploy'))
        payload = save_prototypes(self.output_path('prototypes.mwsc'), prototypes, self.config.prototype_element_type,
                                  self.config.quantization, self.config_hash, self.command_name)
        self.stdout.write(self.style.SUCCESS(f'Deployed {prototypes.n_classes} prototypes, payload={payload} B'))
