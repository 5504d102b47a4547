"""Per-country causal discovery on indicator panels with a binary target label."""
from importlib.resources import files

from .errors import CausalPanelError
from .panel import LABEL, CountryPanel, PanelDataset, ingest
from .pipeline import RunConfig, analyze_country, load_config, run_dataset, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "LABEL",
    "CausalPanelError",
    "CountryPanel",
    "PanelDataset",
    "RunConfig",
    "analyze_country",
    "ingest",
    "load_config",
    "run_dataset",
    "run_pipeline",
    "toy_dataset_paths",
]


def toy_dataset_paths():
    """``(values_csv, labels_csv)`` for the bundled three-country example (long layout)."""
    root = files(__name__) / "data"
    return root / "toy_values.csv", root / "toy_labels.csv"
