"""Tracking-by-detection with discriminative saliency maps.

A small differentiable feature network scores candidate boxes through an
exactly-updated online SVM, positive-weight features are back-propagated
into a per-frame saliency map, and a discrete-grid Bayesian filter turns
the saliency map into a posterior over target locations.  Seeded graph-cut
segmentation and a benchmark evaluation kit round out the toolbox.
"""

from saltrack.errors import ConfigurationError, InvariantError, StateError
from saltrack.localization import TargetState
from saltrack.svm import OnlineSvm
from saltrack.tracker import TrackerConfig, TrackerSession, track_sequence

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "InvariantError",
    "OnlineSvm",
    "StateError",
    "TargetState",
    "TrackerConfig",
    "TrackerSession",
    "track_sequence",
    "__version__",
]
