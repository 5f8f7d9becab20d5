from .config import ScenarioConfig, config_digest, load_config
from .experiments import (
    MetricsRecord,
    run_chain_benchmark,
    run_protocol_simulation,
    run_training_eval,
    sweep_and_export,
)

__all__ = [
    "ScenarioConfig",
    "config_digest",
    "load_config",
    "MetricsRecord",
    "run_chain_benchmark",
    "run_protocol_simulation",
    "run_training_eval",
    "sweep_and_export",
]
