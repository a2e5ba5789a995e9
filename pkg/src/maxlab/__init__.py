"""Numerical verification of quasi-linear maximum principles and the
Lorentzian geometry built on them.

Modules: :mod:`.symkernel` (small symmetric matrices), :mod:`.quasilinear`
(operators and linearisation), :mod:`.principle` (constants, comparison
function, contradiction pipeline), :mod:`.lorgraph` (spacelike graphs),
:mod:`.modelspace` (Minkowski and the warped strip), :mod:`.curvature`
and :mod:`.cli`.
"""

from ._accel import backend, set_backend, using_backend
from .report import SCHEMA, VerificationReport, Verdict

__version__ = "0.1.0"

__all__ = ["SCHEMA", "VerificationReport", "Verdict", "backend", "set_backend", "using_backend", "__version__"]
