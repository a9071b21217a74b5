from typing import Dict, List, Optional
import time
import logging
import traceback
import sys
from dataclasses import dataclass, field
from enum import Enum


class ErrorSeverity(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class PfedacError(Exception):
    """Base class for every error the simulator surfaces to the CLI"""

    error_class = "PfedacError"
    severity = ErrorSeverity.HIGH
    exit_code = 1

    def __init__(self, message: str, context_data: Optional[Dict] = None):
        super().__init__(message)
        self.message = message
        self.context_data = context_data or {}


class SingularChain(PfedacError):
    error_class = "SingularChain"
    severity = ErrorSeverity.CRITICAL
    exit_code = 10


class SingularTdSystem(PfedacError):
    # Reported as a flag by td_system, only raised by callers that require it
    error_class = "SingularTdSystem"
    severity = ErrorSeverity.MEDIUM
    exit_code = 11


class RankDeficientAggregate(PfedacError):
    error_class = "RankDeficientAggregate"
    severity = ErrorSeverity.CRITICAL
    exit_code = 12


class DimensionMismatch(PfedacError):
    error_class = "DimensionMismatch"
    exit_code = 13


class InvariantViolation(PfedacError):
    error_class = "InvariantViolation"
    severity = ErrorSeverity.CRITICAL
    exit_code = 14


class FederationFormatError(PfedacError):
    error_class = "FederationFormatError"
    exit_code = 15


class ConfigError(PfedacError):
    error_class = "ConfigError"
    severity = ErrorSeverity.MEDIUM
    exit_code = 20


class MissingKey(ConfigError):
    error_class = "MissingKey"
    exit_code = 21


class UnknownKey(ConfigError):
    error_class = "UnknownKey"
    exit_code = 22


class StepsizeConditionViolated(ConfigError):
    error_class = "StepsizeConditionViolated"
    exit_code = 23


class InvalidValue(ConfigError):
    error_class = "InvalidValue"
    exit_code = 24


UNEXPECTED_ERROR_EXIT_CODE = 2


@dataclass
class ErrorContext:
    error_class: str
    message: str
    severity: ErrorSeverity
    exit_code: int = UNEXPECTED_ERROR_EXIT_CODE
    context_data: Optional[Dict] = None
    timestamp: float = field(default_factory=time.time)
    traceback_info: Optional[str] = None


class ErrorReporter:
    """Records errors raised during a run and turns them into exit codes and reports"""

    def __init__(self):
        self.error_history: List[ErrorContext] = []
        self.logger = logging.getLogger(__name__)

    def handle_error(self, error: BaseException) -> ErrorContext:
        """Main error handling entry point, returns the recorded context"""
        if isinstance(error, PfedacError):
            context = ErrorContext(
                error_class=error.error_class,
                message=error.message,
                severity=error.severity,
                exit_code=error.exit_code,
                context_data=error.context_data,
            )
        else:
            context = ErrorContext(
                error_class=type(error).__name__,
                message=str(error),
                severity=ErrorSeverity.CRITICAL,
            )
        context.traceback_info = traceback.format_exc() if sys.exc_info()[0] else None

        if context.severity == ErrorSeverity.CRITICAL:
            self.logger.critical(f"{context.error_class}: {context.message}")
        else:
            self.logger.error(f"{context.error_class}: {context.message}")
        if context.context_data:
            self.logger.debug(f"Error context: {context.context_data}")

        self.error_history.append(context)
        return context

    @staticmethod
    def format_error_line(context: ErrorContext) -> str:
        """One machine-parsable line: error=<class> message=<text>"""
        message = " ".join(context.message.split())
        return f"error={context.error_class} message={message}"

    def get_error_report(self) -> Dict:
        """Generate a report of every recorded error, grouped by class"""
        report = {
            "errors": [],
            "total_error_count": len(self.error_history),
            "error_classes": {},
        }

        for error in self.error_history:
            report["error_classes"][error.error_class] = report["error_classes"].get(error.error_class, 0) + 1
            report["errors"].append({
                "class": error.error_class,
                "message": error.message,
                "severity": error.severity.value,
                "exit_code": error.exit_code,
                "timestamp": error.timestamp,
                "context": error.context_data,
            })

        return report
