from ...engine.checkpoints import load_params, save_params
from ...models import Domain
from ...utils import write_json
from ..lifecycle_command import LifecycleCommand


class Command(LifecycleCommand):
    help = 'Fine-tune a pretrained encoder on the target dataset with early stopping'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', help='Encoder checkpoint, defaults to the pretrain output')

    def run(self, **options):
        params = load_params(options['checkpoint'] or self.stage_path('pretrain', 'params.mwsp'))
        target = self.load_dataset(Domain.TARGET)
        result = self.meta_training_service.fine_tune(params, target, self.config.finetune_config(), self.augmenter())
        save_params(self.output_path('params.mwsp'), result.params, self.config_hash, self.command_name)
        result.history.write_csv(self.output_path('history.csv'))
        write_json(self.output_path('best_epoch.json'), {
            'best_epoch': result.best_epoch,
            'best_validation_loss': result.history.validation_losses[result.best_epoch - 1],
            'epochs_run': len(result.history.epoch_losses),
            'stopped_early': result.history.stopped_early,
        })
        self.stdout.write(self.style.SUCCESS(f'Fine-tuned encoder, best epoch={result.best_epoch}'))
