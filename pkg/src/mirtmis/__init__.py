"""Compensatory MIRT fits to non-compensatory data.

Skill-estimation bias via the gradient approximation, and sandwich versus
naive asymptotic variances of the misspecified item-parameter MLE.
"""
__version__ = "0.1.0"

from .errors import MirtError  # noqa: E402
from .model import CompParams, Item, ItemBank  # noqa: E402
from .quadrature import QuadratureGrid, build_grid  # noqa: E402

__all__ = ["CompParams", "Item", "ItemBank", "MirtError", "QuadratureGrid", "build_grid", "__version__"]
