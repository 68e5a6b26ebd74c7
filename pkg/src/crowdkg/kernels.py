"""Backend selection for the scoring kernels.

The compiled extension is used when it was built; otherwise the pure-Python
module with the same interface is loaded. Setting the environment variable
``CROWDKG_PURE_PYTHON=1`` forces the fallback.
"""

import os

if os.environ.get("CROWDKG_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as _impl
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        from . import _pykernels as _impl

BACKEND = "cython" if _impl.__name__.endswith("_ckernels") else "python"

EXPECTED = _impl.EXPECTED
OPTIMISTIC = _impl.OPTIMISTIC
PESSIMISTIC = _impl.PESSIMISTIC
CVAR = _impl.CVAR

upper_tail = _impl.upper_tail
step_gain = _impl.step_gain
reward_pair = _impl.reward_pair
score = _impl.score
scores = _impl.scores
matched_update = _impl.matched_update
hetero_reward_pair = _impl.hetero_reward_pair
label_prob_pos = _impl.label_prob_pos
hetero_score = _impl.hetero_score
hetero_scores = _impl.hetero_scores
