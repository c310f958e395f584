from .errors import (
    BracketError,
    ConfigError,
    NonHyperbolicError,
    PreconditionError,
    RetuneError,
    StructureError,
    TrappingError,
    TruncationError,
    VianaLabError,
)
from .base_map import BaseMap, MarkovPartition, make_base_map
from .skew import FiberBump, SkewSystem, VianaParams, build_system, find_misiurewicz
from .fibered import FiberedSystem
