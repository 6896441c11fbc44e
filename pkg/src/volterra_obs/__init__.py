"""Numerical companion for observation admissibility of Volterra systems.

Scalar resolvents s(t, mu) of x = x0 + a * A x, subordination kernels,
kernel certificates, diagonal models and admissibility tests.
"""

__version__ = "0.1.0"

from .kernels import KernelSpec, SectorGrid, builtin_kernel, certify_kernel  # noqa: E402
from .laplace import bromwich_invert, forward_laplace  # noqa: E402
from .scalar_volterra import compute_v, s_via_laplace, solve_scalar_oracle  # noqa: E402
from .specfun import mittag_leffler  # noqa: E402
from .systems import DiagonalSystem, constructed_system  # noqa: E402

__all__ = [
    "KernelSpec",
    "SectorGrid",
    "builtin_kernel",
    "certify_kernel",
    "bromwich_invert",
    "forward_laplace",
    "compute_v",
    "s_via_laplace",
    "solve_scalar_oracle",
    "mittag_leffler",
    "DiagonalSystem",
    "constructed_system",
    "__version__",
]
