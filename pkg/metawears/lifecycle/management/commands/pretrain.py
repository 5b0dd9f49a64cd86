from ...engine.checkpoints import save_params
from ...engine.encoder import init_params
from ...models import Domain
from ..lifecycle_command import LifecycleCommand


class Command(LifecycleCommand):
    help = 'Episodic meta-training of a fresh encoder on the base dataset'

    def run(self, **options):
        base = self.load_dataset(Domain.BASE)
        input_dim = self.preprocess_service.get_input(base.records[0]).size
        params = init_params(self.config.encoder_config(input_dim))
        params, history = self.meta_training_service.meta_train(params, base, self.config.pretrain_config())
        save_params(self.output_path('params.mwsp'), params, self.config_hash, self.command_name)
        history.write_csv(self.output_path('loss_history.csv'))
        self.stdout.write(self.style.SUCCESS(f'Pretrained encoder for {len(history.epoch_losses)} epochs, '
                                             f'final loss={history.epoch_losses[-1]:.5f}'))
