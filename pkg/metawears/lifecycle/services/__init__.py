from .evaluation_service import EvaluationService
from .lifecycle_service import LifecycleService
from .meta_training_service import MetaTrainingService
from .preprocess_service import PreprocessService
from .update_simulation_service import (UpdateSimulationService,
                                        UpdateSimulationServiceProvider)
