"""Sparse semantic dimension certificates.

The compiled module ``_ssd`` carries the certificate arithmetic and the core
readers; ``formats`` is an independent numpy implementation of the
interchange files for exporters.
"""

from . import export, formats

try:
    from ._ssd import (
        DimensionError,
        Error,
        FormatError,
        certify,
        fnv1a64,
        ln_hypothesis_count,
        read_pool,
        read_ssda,
        read_ssdl,
        version,
        write_pool,
        write_ssda,
        write_ssdl,
    )

    HAVE_CORE = True
except ImportError:  # pure-Python use without the extension
    HAVE_CORE = False

__all__ = ["export", "formats", "HAVE_CORE"]
