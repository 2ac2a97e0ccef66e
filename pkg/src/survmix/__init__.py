"""Censored time-to-event regression with learned mixtures of parametric
survival distributions, competing risks, and IPCW evaluation metrics."""

__version__ = "0.1.0"

from .backend import backend_name
from .distributions import ComponentParams, Family

__all__ = ["backend_name", "ComponentParams", "Family", "__version__"]
