"""Multiscale two-grid Darcy solver with learned coarse spaces."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
