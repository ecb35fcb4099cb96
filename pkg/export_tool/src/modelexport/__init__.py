"""Export torch block-structured classifiers to the interchange format."""

from .export import ExportBundle, ExportError, collect, export_model
from .interchange import (BlockSpec, ModelSpec, read_interchange,
                          unit_tensor_names, write_interchange)
from .probe import ProbeRecord, expected_vector, read_probe, record_probe
from .torchnet import (BlockNet, build_blocknet, import_interchange,
                       probabilities)

__version__ = "0.1.0"

__all__ = [
    "BlockNet", "BlockSpec", "ExportBundle", "ExportError", "ModelSpec",
    "ProbeRecord", "build_blocknet", "collect", "expected_vector",
    "export_model", "import_interchange", "probabilities", "read_interchange",
    "read_probe", "record_probe", "unit_tensor_names", "write_interchange",
]
