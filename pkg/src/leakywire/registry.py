from __future__ import annotations

import nshconfig as C

curve_registry = C.Registry(C.Config, discriminator="family")
"""Registry for curve families."""

__all__ = [
    "curve_registry",
]
