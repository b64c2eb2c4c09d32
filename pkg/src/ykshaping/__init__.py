"""Iterative Youla-Kucera loop shaping for multi-band narrow-band rejection."""

from importlib.metadata import PackageNotFoundError, version

from .inversion import InversionError, StableInverse, zpetc_inverse
from .lti import FrequencyResponse, RationalTF, StateSpace
from .polynomial import Polynomial, RootSet
from .qdesign import NotchSpec, QFilter, build_q
from .ykloop import DesignDestabilized, DesignPlan, IterationRecord, run_design

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.1.0"

__all__ = [
    "__version__",
    "Polynomial",
    "RootSet",
    "RationalTF",
    "StateSpace",
    "FrequencyResponse",
    "StableInverse",
    "InversionError",
    "zpetc_inverse",
    "NotchSpec",
    "QFilter",
    "build_q",
    "DesignPlan",
    "IterationRecord",
    "DesignDestabilized",
    "run_design",
]
