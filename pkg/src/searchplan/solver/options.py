from __future__ import annotations

import enum
from dataclasses import dataclass


class NodeSelection(str, enum.Enum):
    BEST_BOUND = "best_bound"
    DEPTH_FIRST = "depth_first"


class Branching(str, enum.Enum):
    MOST_FRACTIONAL = "most_fractional"
    FIRST_FRACTIONAL = "first_fractional"


class Mode(str, enum.Enum):
    EXACT = "exact"
    ROLLING_HORIZON = "rolling_horizon"


@dataclass(frozen=True)
class SolveOptions:
    integer_tolerance: float = 1e-6
    relative_gap: float = 1e-4
    absolute_gap: float = 1e-6
    node_limit: int | None = None
    time_limit_s: float | None = None
    node_selection: NodeSelection = NodeSelection.BEST_BOUND
    branching: Branching = Branching.MOST_FRACTIONAL
    mode: Mode = Mode.EXACT
    window: int | None = None
    overlap: int = 0
    workers: int = 1
    record_tree: bool = False
    dive: bool = True
    dive_backtracks: int = 50

    def __post_init__(self):
        object.__setattr__(self, "node_selection", NodeSelection(self.node_selection))
        object.__setattr__(self, "branching", Branching(self.branching))
        object.__setattr__(self, "mode", Mode(self.mode))
        for name in ("integer_tolerance", "relative_gap", "absolute_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.node_limit is not None and self.node_limit < 1:
            raise ValueError("node_limit must be at least 1")
        if self.time_limit_s is not None and not self.time_limit_s > 0:
            raise ValueError("time_limit_s must be positive")
        if self.dive_backtracks < 0:
            raise ValueError("dive_backtracks must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.mode is Mode.ROLLING_HORIZON:
            if self.window is None or self.window < 1:
                raise ValueError("rolling_horizon mode needs a positive window")
            if not 0 <= self.overlap < self.window:
                raise ValueError("rolling_horizon mode needs 0 <= overlap < window")
