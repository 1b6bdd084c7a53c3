"""Numerical kernels behind the solver and the one-hop replay loop.

A compiled Cython extension (`_fast`) carries the hot loops; a pure-NumPy
implementation (`_pyref`) with identical semantics is selected at import when
the extension is unavailable.  `benchmarks/bench_kernels.py` compares the two.
"""

from . import _pyref

try:  # pragma: no cover - exercised indirectly
    from . import _fast

    _impl = _fast
    BACKEND = "compiled"
except ImportError:  # pragma: no cover
    _fast = None
    _impl = _pyref
    BACKEND = "python"

solve_threshold_tables = _impl.solve_threshold_tables
replay_episodes = _impl.replay_episodes

POLICY_CODES = _pyref.POLICY_CODES


def backend(name: str | None = None):
    """Return a kernel module by name ('compiled' or 'python'); the active
    one when name is None.  Raises if the compiled backend was not built.
    """
    if name is None:
        return _impl
    if name == "python":
        return _pyref
    if name == "compiled":
        if _fast is None:
            raise RuntimeError("compiled kernel backend is not available")
        return _fast
    raise ValueError(f"unknown backend {name!r}")
