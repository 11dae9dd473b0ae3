"""Scenario in, verified plan out."""
from __future__ import annotations

import logging
from dataclasses import dataclass

from .model import build
from .scenario import Scenario
from .solver import MipSolution, Mode, SolveOptions, branch_and_bound
from .solver.rolling import solve_rolling_horizon
from .verify import Trajectory, VerificationReport, verify
from .zoning import Zone

log = logging.getLogger(__name__)


@dataclass
class PlanResult:
    scenario: Scenario
    zones: list[Zone]
    solution: MipSolution
    report: VerificationReport | None

    @property
    def trajectory(self) -> Trajectory | None:
        if not self.solution.has_plan:
            return None
        return Trajectory(self.scenario.start.vector, self.solution.states, self.solution.controls)

    @property
    def verified(self) -> bool:
        return self.report is not None and self.report.passed


def solve(sc: Scenario, opts: SolveOptions | None = None, zones=None) -> MipSolution:
    opts = opts or sc.solver
    zones = sc.build_zones() if zones is None else zones
    if opts.mode is Mode.ROLLING_HORIZON:
        return solve_rolling_horizon(sc, zones, opts)
    return branch_and_bound(build(sc, zones), opts)


def plan(sc: Scenario, opts: SolveOptions | None = None) -> PlanResult:
    """Build zones, solve, and verify any plan the solver returns."""
    zones = sc.build_zones()
    sol = solve(sc, opts, zones)
    report = None
    if sol.has_plan:
        report = verify(sc, Trajectory(sc.start.vector, sol.states, sol.controls), zones)
        if not report.passed:
            log.error("solver plan rejected by the verifier: %s", report.failures())
    return PlanResult(sc, zones, sol, report)
