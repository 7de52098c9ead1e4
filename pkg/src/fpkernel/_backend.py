"""Select the compiled modal-sum core, falling back to numpy."""
import os

from . import _spectral_py

python_core = _spectral_py

if os.environ.get("FPKERNEL_PURE_PYTHON", "") not in ("", "0"):
    compiled_core = None
else:
    try:
        from . import _spectral as compiled_core
    except ImportError:  # extension not built
        compiled_core = None

core = compiled_core if compiled_core is not None else python_core
NAME = "cython" if compiled_core is not None else "python"


def get(name=None):
    """Return a core by name ('cython' or 'python'); default is the active one."""
    if name is None:
        return core
    if name == "python":
        return python_core
    if name == "cython":
        if compiled_core is None:
            raise ImportError("compiled core fpkernel._spectral is not available")
        return compiled_core
    raise ValueError(f"unknown backend {name!r}")
