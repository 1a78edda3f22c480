"""From-scratch CNN engine and experiment harness for wildfire image classification.

Layout: `tensor` (array ops and their gradients), `gradcheck` (finite
differences), `nn` (layer/model specs and executable models), `zoo` (the six
benchmark architectures and transfer surgery), `optim` (losses and update
rules), `metrics` (confusion arithmetic and published-figure reconciliation),
`checkpoint` (the WFCK tensor file format), `reference` (the published
figures themselves), `data` (image codecs, augmentation, manifests,
synthesis), and `harness` (configs, training, the transfer study, reports,
CLI).
"""

from . import (
    checkpoint,
    data,
    gradcheck,
    harness,
    metrics,
    nn,
    optim,
    reference,
    tensor,
    zoo,
)
from .errors import WildfireError

__version__ = "0.1.0"

__all__ = [
    "WildfireError",
    "checkpoint",
    "data",
    "gradcheck",
    "harness",
    "metrics",
    "nn",
    "optim",
    "reference",
    "tensor",
    "zoo",
    "__version__",
]
