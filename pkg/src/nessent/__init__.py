"""Charge-resolved entanglement of free fermions in a biased scattering state."""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .scatter import (  # noqa: E402
    CompositeScatterer,
    FermiWindow,
    SingleImpurity,
    TableScatterer,
    Transparent,
)

__all__ = [
    "__version__",
    "CompositeScatterer",
    "FermiWindow",
    "SingleImpurity",
    "TableScatterer",
    "Transparent",
]
