from ...models import Domain
from ...services.lifecycle_service import (ExperimentConfig,
                                           LifecycleDatasets,
                                           LifecycleService)
from ...utils import write_json
from ..lifecycle_command import LifecycleCommand


class Command(LifecycleCommand):
    help = ('Paired comparison over seeds of the full pipeline against no fine-tuning, no base pretraining and '
            'source only prototypes')

    def run(self, **options):
        datasets = LifecycleDatasets(self.load_dataset(Domain.BASE), self.load_dataset(Domain.TARGET),
                                     self.load_dataset(Domain.TEST))
        input_dim = self.preprocess_service.get_input(datasets.base.records[0]).size
        evaluation = self.config.evaluation
        experiment = ExperimentConfig(self.config.encoder_config(input_dim), self.config.pretrain,
                                      self.config.finetune, evaluation.iterations, evaluation.deploy_k,
                                      self.augmenter())
        seeds = [self.config.substream_seed('ablation', run) for run in range(evaluation.ablation_runs)]
        service = LifecycleService(self.meta_training_service, self.evaluation_service)
        report = service.compare_variants(datasets, experiment, seeds)
        comparison = report.to_dict()
        write_json(self.output_path('comparison.json'), comparison)
        report.write_csv(self.output_path('comparison.csv'))
        for variant, mean in comparison['mean_aucs'].items():
            self.stdout.write(self.style.SUCCESS(f'{variant} mean AUC={mean:.4f}'))
