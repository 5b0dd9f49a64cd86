import numpy as np

from ...engine.checkpoints import load_params, load_prototypes
from ...exceptions import DataFormatError
from ...models import Domain, Signal
from ...run_config import read_json, validate_document
from ...serializers import SampleSerializer
from ..lifecycle_command import LifecycleCommand


class Command(LifecycleCommand):
    help = 'Classify one raw recording against the deployed prototypes'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', help='Encoder checkpoint, defaults to the finetune output')
        parser.add_argument('--prototypes', help='Prototype file, defaults to the deploy output')
        parser.add_argument('--sample', required=True, help='JSON file {"fs": <Hz>, "samples": [...]}')

    def run(self, **options):
        params = load_params(options['checkpoint'] or self.stage_path('finetune', 'params.mwsp'))
        prototypes = load_prototypes(options['prototypes'] or self.stage_path('deploy', 'prototypes.mwsc'),
                                     self.config.classes)
        sample = validate_document(SampleSerializer, read_json(options['sample'], DataFormatError),
                                   f'sample {options["sample"]}', DataFormatError)
        signal = Signal(np.asarray(sample['samples'], dtype=np.float32), sample['fs'], 'sample', '', Domain.TEST)
        result = self.meta_training_service.infer(params, prototypes, signal)
        self.write_stdout_json(result.to_dict(prototypes.classes), self.output_path('result.json'))
