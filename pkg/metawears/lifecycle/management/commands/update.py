from ...engine.checkpoints import load_params, save_prototypes
from ...engine.quantization import ElementType, PayloadKind
from ...models import Domain
from ...services.update_simulation_service import (UpdatePayload,
                                                   UpdateSimulationService,
                                                   transfer_time,
                                                   update_savings_ratio)
from ..lifecycle_command import LifecycleCommand


class Command(LifecycleCommand):
    help = 'Update the prototypes with k new shots per class, the encoder is left untouched'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', help='Encoder checkpoint, defaults to the finetune output')
        parser.add_argument('--k', type=int, help='New shots per class, defaults to episode.k')

    def run(self, **options):
        params = load_params(options['checkpoint'] or self.stage_path('finetune', 'params.mwsp'))
        checksum = params.checksum()
        dataset = self.load_dataset(Domain.TARGET).merge(self.load_dataset(Domain.NEW))
        k = options['k'] or self.config.episode.k
        prototypes = self.meta_training_service.update_prototypes(params, dataset, k,
                                                                  self.config.substream_seed('deploy'))
        element_type = self.config.prototype_element_type
        prototype_bytes = save_prototypes(self.output_path(f'prototypes_k{k}.mwsc'), prototypes, element_type,
                                          self.config.quantization, self.config_hash, self.command_name)

        # The deployed model is the 16-bit fixed point image of the encoder
        scenario = self.config.scenario
        model = UpdatePayload.from_shapes(PayloadKind.MODEL, params.shapes, ElementType.FIXED16)
        update = UpdatePayload(prototype_bytes, PayloadKind.PROTOTYPES)
        simulation_service = UpdateSimulationService()
        self.write_stdout_json({
            'k': k,
            'element_type': element_type.label,
            'encoder_checksum': checksum,
            'prototype_payload_bytes': prototype_bytes,
            'model_payload_bytes': model.bytes,
            'savings_ratio': update_savings_ratio(model, update),
            'prototype_transfer_time_s': transfer_time(update, scenario.link),
            'model_transfer_time_s': transfer_time(model, scenario.link),
            'scenario': scenario.name,
            'profiles': {
                profile.name: {
                    payload.kind.value: simulation_service.payload_report(payload, scenario.link, profile,
                                                                          scenario.updates_per_day)
                    for payload in (update, model)
                }
                for profile in scenario.profiles
            },
        }, self.output_path('payload_report.json'))
