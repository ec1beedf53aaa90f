"""Learning-progress curricula over discretized task spaces."""

from .curriculum import EpisodeRecord, Scheduler, SchedulerConfig, SchedulerKind, init_scheduler
from .task_space import Dimension, TaskInstance, TaskSpace

__all__ = [
    "Dimension",
    "EpisodeRecord",
    "Scheduler",
    "SchedulerConfig",
    "SchedulerKind",
    "TaskInstance",
    "TaskSpace",
    "init_scheduler",
]
__version__ = "0.1.0"
