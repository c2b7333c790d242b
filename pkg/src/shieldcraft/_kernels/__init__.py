"""Kernel lane selection.

The compiled extension is used when it was built; otherwise the numpy lane
takes over. Both lanes are bit-identical (see tests), so the choice only
affects speed. Set ``SHIELDCRAFT_PURE_PYTHON=1`` to force the pure lane.
"""

import os

from . import step_py

try:
    from . import _stepcore
except ImportError:
    _stepcore = None

COMPILED_AVAILABLE = _stepcore is not None
USING_COMPILED = COMPILED_AVAILABLE and os.environ.get("SHIELDCRAFT_PURE_PYTHON") != "1"

if USING_COMPILED:
    step_batch = _stepcore.step_batch
    step_one = _stepcore.step_one
else:
    step_batch = step_py.step_batch
    step_one = step_py.step_one
