"""Backend selection for the dynamics kernel.

The native Cython kernel is used when its extension built successfully;
otherwise the pure-Python reference takes over. Both implement the same
operation sequence and give bit-identical results, so the choice only
affects speed. Set MULTITRACK_BACKEND=reference (or =native) to force
one; forcing native when it is not built raises ImportError.
"""

import os

from . import reference

_forced = os.environ.get("MULTITRACK_BACKEND", "").strip().lower()

if _forced == "reference":
    impl = reference
elif _forced == "native":
    from . import _native as impl
elif _forced in ("", "auto"):
    try:
        from . import _native as impl
    except ImportError:
        impl = reference
else:
    raise ImportError(
        f"MULTITRACK_BACKEND={_forced!r}: expected auto, native, or reference"
    )

BACKEND = impl.BACKEND_NAME


def backend_name() -> str:
    """Name of the kernel backend in use: 'native' or 'reference'."""
    return BACKEND
