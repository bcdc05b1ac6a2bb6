"""Hot numerical kernels with a compiled fast path.

The Cython extension ``_ckernels`` is used when it was built; otherwise, or
when ``TCHEBY_PURE_PYTHON=1`` is set, the NumPy fallback is selected.
``BACKEND`` names the active implementation.
"""

import os

from . import _fallback

_NAMES = ("markov_logprob", "markov_grad", "hv2d", "hv3d", "gwg_chain", "markov_sample")

_compiled = None
if os.environ.get("TCHEBY_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _fallback
BACKEND = "cython" if _compiled is not None else "python"

markov_logprob = _impl.markov_logprob
markov_grad = _impl.markov_grad
hv2d = _impl.hv2d
hv3d = _impl.hv3d
gwg_chain = _impl.gwg_chain
markov_sample = _impl.markov_sample

# Python-only helpers shared by both backends
energy_grad = _fallback.energy_grad
sequence_energy = _fallback.sequence_energy
gwg_proposal_logprobs = _fallback.gwg_proposal_logprobs


def backends():
    """Mapping of available backend name -> module, for tests and benchmarks."""
    out = {"python": _fallback}
    if _compiled is not None:
        out["cython"] = _compiled
    else:
        try:
            from . import _ckernels
            out["cython"] = _ckernels
        except ImportError:
            pass
    return out
