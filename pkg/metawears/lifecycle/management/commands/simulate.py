import os

from ...run_config import load_run_config, load_scenario, scenario_to_dict
from ...services.update_simulation_service import (PRESETS,
                                                   UpdateSimulationServiceProvider,
                                                   format_table)
from ...utils import write_json
from ..lifecycle_command import LifecycleCommand


class Command(LifecycleCommand):
    help = 'Simulate update cost, energy and battery life of a hardware scenario, --config takes a scenario file'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--preset', choices=sorted(PRESETS), help='Hardware preset used when there is no --config')

    def load_config(self, options):
        self.scenario = load_scenario(options['config'], options['preset'])
        return load_run_config(None, options['seed'], options['out'])

    def resolved_config(self):
        return scenario_to_dict(self.scenario)

    def run(self, **options):
        report = UpdateSimulationServiceProvider().simulate(self.scenario)
        write_json(self.output_path('report.json'), report)
        table = format_table(report)
        with open(os.path.join(self.output_dir, 'report.txt'), 'w', encoding='utf-8') as f:
            f.write(table)
        self.stdout.write(table, ending='')
