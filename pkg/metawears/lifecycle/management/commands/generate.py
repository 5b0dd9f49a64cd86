from ...biosignal.generator import gen_dataset
from ...models import Domain
from ...services.dataset_service import save_dataset
from ..lifecycle_command import LifecycleCommand


class Command(LifecycleCommand):
    help = 'Generate the synthetic base, target, new and test datasets'

    def run(self, **options):
        generation = self.config.generation
        summary = {}
        for domain in Domain:
            dataset = gen_dataset([generation.domains[domain]], generation.patients[domain],
                                  generation.records_per_patient_per_class, generation.duration_s,
                                  self.config.substream_seed('dataset'), self.config.classes)
            path = self.config.datasets.path(domain)
            save_dataset(path, dataset, self.config_hash)
            summary[domain.value] = {'path': path, 'records': len(dataset), 'patients': dataset.patients()}
            self.stdout.write(self.style.SUCCESS(f'Generated {domain.value} dataset with {len(dataset)} records '
                                                 f'in {path}'))
        self.write_stdout_json(summary, self.output_path('summary.json'))
