"""Brain MRI five-class classification: volume I/O, slicing, augmentation,
a 7-conv / 3-FC network trained with a multiclass hinge loss, and metrics."""

from .dataset import CLASS_NAMES, Manifest, Sample, VoiBox
from .estimator import CNNSVMClassifier, VolumeSampler
from .model import NetworkSpec, build_network, spec_preset
from .volume_io import FormatKind, Volume, detect_format, load_volume, read_volume, save_volume, write_volume

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES", "CNNSVMClassifier", "FormatKind", "Manifest", "NetworkSpec", "Sample",
    "VoiBox", "Volume", "VolumeSampler", "build_network", "detect_format", "load_volume",
    "read_volume", "save_volume", "spec_preset", "write_volume",
]
