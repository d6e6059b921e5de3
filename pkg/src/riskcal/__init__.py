"""Semi-supervised calibration toolkit for distribution-free risk control.

Tunes a prediction-rule hyper-parameter so that an arbitrary (possibly
non-monotonic) risk stays below alpha with probability at least 1 - delta,
using few labeled samples plus many model-imputed unlabeled ones.
"""

__version__ = "0.1.0"

from . import bounds, etsc, ppi, rcps, sim  # noqa: F401
