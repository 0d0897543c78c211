"""defectnet: a self-contained CNN engine and CLI for classifying and
localising building defects (mould, stain, paint deterioration, normal).
"""

from .labels import LABEL_NAMES
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = ["LABEL_NAMES", "Tensor", "__version__"]
