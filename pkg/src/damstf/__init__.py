"""Meta self-training for domain adaptation on small numpy MLPs."""
from .data import DatasetBundle, Example, gen_shifted_gaussians, load_bundle, save_bundle
from .domain_adversarial import AdvConfig
from .meta_learning import MetaConfig
from .nn_core import Architecture
from .self_training import RunConfig, RunResult, exposure_sweep, run_config_from_dict, run_damstf

__version__ = "0.1.0"

__all__ = [
    "AdvConfig", "Architecture", "DatasetBundle", "Example", "MetaConfig", "RunConfig", "RunResult",
    "exposure_sweep", "gen_shifted_gaussians", "load_bundle", "run_config_from_dict", "run_damstf",
    "save_bundle",
]
