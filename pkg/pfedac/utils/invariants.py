"""
Runtime invariant monitor used in debug mode.

Each check compares a measured quantity against its bound with a declared
slack, counts violations per check and logs them. With strict=True the first
violation raises InvariantViolation.
"""
import logging
from collections import Counter
from typing import Dict, Optional

from pfedac.utils.error_handler import InvariantViolation

logger = logging.getLogger(__name__)

DEFAULT_SLACK = 1e-9


class InvariantMonitor:
    def __init__(self, enabled: bool = True, strict: bool = False):
        self.enabled = enabled
        self.strict = strict
        self.checks: Counter = Counter()
        self.violations: Counter = Counter()
        self.worst_excess: Dict[str, float] = {}

    def _record(self, name: str, excess: float, slack: float, description: str,
                round_index: Optional[int], agent: Optional[int]) -> bool:
        if not self.enabled:
            return True
        self.checks[name] += 1
        if excess <= slack:
            return True

        self.violations[name] += 1
        self.worst_excess[name] = max(self.worst_excess.get(name, 0.0), excess)
        where = f"round={round_index}" + ("" if agent is None else f" agent={agent}")
        message = f"invariant {name} violated at {where}: {description}"
        logger.warning(message)
        if self.strict:
            raise InvariantViolation(message, {"check": name, "excess": excess})
        return False

    def check_upper(self, name: str, value: float, bound: float, slack: float = DEFAULT_SLACK,
                    round_index: Optional[int] = None, agent: Optional[int] = None) -> bool:
        """Record value <= bound + slack"""
        return self._record(name, value - bound, slack, f"{value:.6e} > {bound:.6e}", round_index, agent)

    def check_lower(self, name: str, value: float, bound: float, slack: float = DEFAULT_SLACK,
                    round_index: Optional[int] = None, agent: Optional[int] = None) -> bool:
        """Record value >= bound - slack"""
        return self._record(name, bound - value, slack, f"{value:.6e} < {bound:.6e}", round_index, agent)

    @property
    def total_checks(self) -> int:
        return sum(self.checks.values())

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())

    def report(self) -> Dict:
        return {
            "checks": dict(sorted(self.checks.items())),
            "violations": dict(sorted(self.violations.items())),
            "worst_excess": dict(sorted(self.worst_excess.items())),
            "total_checks": self.total_checks,
            "total_violations": self.total_violations,
        }
