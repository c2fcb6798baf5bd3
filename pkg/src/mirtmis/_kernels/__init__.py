"""Hot kernels, compiled when available.

The Cython extension ``_core`` is used if it imports; otherwise, or when the
environment variable ``MIRTMIS_PURE_PYTHON`` is set to a non-empty value, the
numpy implementation in ``_fallback`` is used. ``BACKEND`` records the choice.

``posterior_inplace`` always comes from numpy: it is dominated by ``exp``,
which numpy evaluates with SIMD while the compiled loop cannot (see
``benchmarks/bench_kernels.py``).
"""
import os

from ._fallback import posterior_inplace

if os.environ.get("MIRTMIS_PURE_PYTHON"):
    from ._fallback import map_newton, profile_1d

    BACKEND = "python"
else:
    try:
        from ._core import map_newton, profile_1d

        BACKEND = "cython"
    except ImportError:
        from ._fallback import map_newton, profile_1d

        BACKEND = "python"

__all__ = ["BACKEND", "map_newton", "posterior_inplace", "profile_1d"]
