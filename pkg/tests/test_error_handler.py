import unittest

from pfedac.utils.error_handler import (
    ErrorReporter,
    ErrorSeverity,
    InvalidValue,
    MissingKey,
    PfedacError,
    RankDeficientAggregate,
    SingularChain,
    StepsizeConditionViolated,
    UNEXPECTED_ERROR_EXIT_CODE,
    UnknownKey,
)


class TestErrorReporter(unittest.TestCase):
    def setUp(self):
        self.reporter = ErrorReporter()

    def test_known_error_keeps_class_and_exit_code(self):
        context = self.reporter.handle_error(SingularChain("chain is reducible", {"min_pivot": 0.0}))
        self.assertEqual(context.error_class, "SingularChain")
        self.assertEqual(context.exit_code, 10)
        self.assertEqual(context.severity, ErrorSeverity.CRITICAL)
        self.assertEqual(context.context_data, {"min_pivot": 0.0})

    def test_unexpected_error_gets_generic_exit_code(self):
        context = self.reporter.handle_error(ZeroDivisionError("division by zero"))
        self.assertEqual(context.error_class, "ZeroDivisionError")
        self.assertEqual(context.exit_code, UNEXPECTED_ERROR_EXIT_CODE)

    def test_exit_codes_are_distinct(self):
        classes = [SingularChain, RankDeficientAggregate, MissingKey, UnknownKey,
                   StepsizeConditionViolated, InvalidValue]
        codes = [cls.exit_code for cls in classes]
        self.assertEqual(len(codes), len(set(codes)))
        self.assertTrue(all(code != 0 for code in codes))

    def test_config_errors_share_a_base(self):
        # Config errors can be caught together
        with self.assertRaises(PfedacError):
            raise UnknownKey("unknown config key(s): zetta")

    def test_error_line_is_single_line(self):
        context = self.reporter.handle_error(InvalidValue("gamma must lie\nin (0, 1)"))
        line = ErrorReporter.format_error_line(context)
        self.assertEqual(line, "error=InvalidValue message=gamma must lie in (0, 1)")
        self.assertNotIn("\n", line)

    def test_error_report_counts_by_class(self):
        self.reporter.handle_error(MissingKey("missing config key(s): T"))
        self.reporter.handle_error(MissingKey("missing config key(s): L"))
        self.reporter.handle_error(RankDeficientAggregate("rank-deficient"))
        report = self.reporter.get_error_report()
        self.assertEqual(report["total_error_count"], 3)
        self.assertEqual(report["error_classes"], {"MissingKey": 2, "RankDeficientAggregate": 1})


if __name__ == '__main__':
    unittest.main()
