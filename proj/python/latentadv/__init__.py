"""Latent-space adversarial attacks on outcome-prediction models."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
