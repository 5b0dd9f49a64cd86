import json
import logging
import os
from functools import cached_property, partial
from typing import Any, Callable, Dict, Optional

from django.conf import settings
from django.core.management.base import BaseCommand

from ..biosignal.preprocess import augment_balance
from ..exceptions import DataFormatError, MetaWearsException
from ..models import Dataset, Domain
from ..run_config import RunConfig, load_run_config
from ..services.dataset_service import load_dataset
from ..services.evaluation_service import EvaluationService
from ..services.meta_training_service import MetaTrainingService
from ..services.preprocess_service import PreprocessService
from ..utils import write_json

logger = logging.getLogger(__name__)

RUN_LOG = 'run.log'
RESOLVED_CONFIG = 'resolved_config.json'


class LifecycleCommand(BaseCommand):
    """
    Base of every lifecycle command. Loads the run config, creates `<out>/<command>/` with the resolved config
    and a `run.log`, then calls `run`. Lifecycle errors are written to stderr as one JSON object and mapped to
    the process exit code
    """
    requires_system_checks = []
    config: RunConfig
    output_dir: str

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit('.', 1)[-1]

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)

        def error(message):
            self.write_error('UsageError', message, 1)
            raise SystemExit(1)

        parser.error = error
        return parser

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Run config JSON file, defaults for every missing section')
        parser.add_argument('--seed', type=int, help='Overrides the config global seed')
        parser.add_argument('--out', help='Overrides the config output directory')

    def write_error(self, error: str, message: str, exit_code: int):
        self.stderr.write(json.dumps({'error': error, 'message': message, 'exit_code': exit_code}, sort_keys=True),
                          style_func=lambda text: text)

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except MetaWearsException as e:
            logger.error('Command=%s failed with %s: %s', self.command_name, e.__class__.__name__, e)
            self.write_error(e.__class__.__name__, str(e), e.exit_code)
            raise SystemExit(e.exit_code) from e

    def load_config(self, options: Dict[str, Any]) -> RunConfig:
        return load_run_config(options['config'], options['seed'], options['out'])

    def resolved_config(self) -> Dict[str, Any]:
        return self.config.to_dict()

    def handle(self, *args, **options):
        self.config = self.load_config(options)
        self.output_dir = os.path.join(self.config.out, self.command_name)
        os.makedirs(self.output_dir, exist_ok=True)
        write_json(self.output_path(RESOLVED_CONFIG), self.resolved_config())

        handler = logging.FileHandler(self.output_path(RUN_LOG), mode='w', encoding='utf-8')
        handler.setFormatter(logging.Formatter(settings.LOGGING['formatters']['verbose']['format']))
        package_logger = logging.getLogger('metawears')
        package_logger.addHandler(handler)
        try:
            logger.info('Running command=%s output-dir=%s config-hash=%s', self.command_name, self.output_dir,
                        self.config_hash)
            self.run(**options)
        finally:
            package_logger.removeHandler(handler)
            handler.close()

    def run(self, **options):
        raise NotImplementedError

    # Helpers
    # ------------------------------------------------------------------------------
    @cached_property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def output_path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def stage_path(self, stage: str, name: str) -> str:
        """
        :return: Artifact `name` written by command `stage` for this run config
        """
        return os.path.join(self.config.out, stage, name)

    @cached_property
    def preprocess_service(self) -> PreprocessService:
        return PreprocessService(self.config.preprocess, settings.METAWEARS_FEATURE_CACHE_SIZE)

    @cached_property
    def meta_training_service(self) -> MetaTrainingService:
        return MetaTrainingService(self.preprocess_service, self.config.episode_spec())

    @cached_property
    def evaluation_service(self) -> EvaluationService:
        return EvaluationService(self.meta_training_service)

    def augmenter(self) -> Optional[Callable[[Dataset], Dataset]]:
        augmentation = self.config.augmentation
        if not augmentation.enabled:
            return None
        return partial(augment_balance, noise_fraction=augmentation.noise_fraction,
                       noise_scale=augmentation.noise_scale, seed=self.config.substream_seed('augmentation'))

    def load_dataset(self, domain: Domain) -> Dataset:
        path = self.config.datasets.path(domain)
        dataset = load_dataset(path)
        if dataset.classes != tuple(self.config.classes):
            raise DataFormatError(f'Dataset {path} classes {list(dataset.classes)} do not match the config classes '
                                  f'{list(self.config.classes)}')
        return dataset

    def write_stdout_json(self, data: Any, path: Optional[str] = None):
        if path:
            write_json(path, data)
        self.stdout.write(json.dumps(data, indent=2, sort_keys=True))
