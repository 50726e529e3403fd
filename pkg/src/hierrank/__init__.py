"""Point-, pair- and list-level ranking objectives over a compare-aggregate answer selector."""
from .config import RunConfig, load_config, make_config
from .evaluation import average_precision, evaluate_corpus, reciprocal_rank
from .model import HierRankModel, ModelConfig
from .schemes import SchemeConfig

__all__ = [
    "HierRankModel", "ModelConfig", "RunConfig", "SchemeConfig", "average_precision",
    "evaluate_corpus", "load_config", "make_config", "reciprocal_rank",
]
__version__ = "0.1.0"
