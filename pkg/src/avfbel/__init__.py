"""Brain-inspired audio-visual emotion learning on a small numpy kernel."""

from .dataset import PairedDataset, Sample, compute_epp, generate_synthetic, normalize_epp
from .metrics import EvalReport, similarity
from .pipeline import VARIANTS, RunConfig, run_all, run_variant

__all__ = [
    "EvalReport", "PairedDataset", "RunConfig", "Sample", "VARIANTS", "compute_epp",
    "generate_synthetic", "normalize_epp", "run_all", "run_variant", "similarity",
]
__version__ = "0.1.0"
