import numpy as np

from ...engine.checkpoints import load_params, save_quantized
from ...engine.encoder import encode
from ...engine.prototypes import class_scores, compute_prototypes, predict
from ...engine.quantization import (accumulator_bound, quantize_encoder,
                                    quantized_encode)
from ...models import Domain
from ...services.dataset_service import sample_support
from ...services.evaluation_service import auc, binary_targets
from ...utils import write_json
from ..lifecycle_command import LifecycleCommand


class Command(LifecycleCommand):
    help = 'Quantize an encoder to 16-bit fixed point and compare it with the float encoder on the test set'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', help='Encoder checkpoint, defaults to the finetune output')

    def run(self, **options):
        params = load_params(options['checkpoint'] or self.stage_path('finetune', 'params.mwsp'))
        qenc = quantize_encoder(params, self.config.quantization)
        save_quantized(self.output_path('params.mwsq'), qenc, self.config_hash, self.command_name)

        target = self.load_dataset(Domain.TARGET)
        test = self.load_dataset(Domain.TEST)
        support = sample_support(target, self.config.evaluation.deploy_k, self.config.substream_seed('deploy'),
                                 self.config.episode.n_support_patients)
        support_inputs = {label: self.preprocess_service.get_inputs(records)
                          for label, records in support.records.items()}
        test_inputs = self.preprocess_service.get_inputs(test.records)

        float_prototypes = compute_prototypes({label: encode(params, inputs)
                                               for label, inputs in support_inputs.items()})
        quantized_prototypes = compute_prototypes({label: quantized_encode(qenc, inputs)
                                                   for label, inputs in support_inputs.items()})
        float_features = encode(params, test_inputs)
        quantized_features = quantized_encode(qenc, test_inputs)
        float_probabilities = class_scores(float_features, float_prototypes)
        quantized_probabilities = class_scores(quantized_features, quantized_prototypes)
        targets = binary_targets(test, test.classes[-1])
        float_auc = auc(float_probabilities[:, -1], targets)
        quantized_auc = auc(quantized_probabilities[:, -1], targets)
        agreement = float(np.mean(predict(float_probabilities) == predict(quantized_probabilities)))

        write_json(self.output_path('fidelity.json'), {
            'n_samples': len(test),
            'frac_bits': qenc.spec.frac_bits,
            'argmax_agreement': agreement,
            'float_auc': float_auc,
            'quantized_auc': quantized_auc,
            'auc_drop': float_auc - quantized_auc,
            'max_feature_deviation': float(np.max(np.abs(float_features - quantized_features))),
            'saturation_fraction': qenc.saturation_fraction,
            'saturation_warning': qenc.saturation_warning,
            'accumulator_bound': accumulator_bound(qenc),
            'source_checksum': qenc.source_checksum,
        })
        self.stdout.write(self.style.SUCCESS(f'Quantized encoder, argmax agreement={agreement:.4f} '
                                             f'AUC drop={float_auc - quantized_auc:.4f}'))
