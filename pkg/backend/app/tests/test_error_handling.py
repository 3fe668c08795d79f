"""
Tests for exit-code mapping and the command error decorator.
"""

import pytest
from pydantic import BaseModel, ValidationError

from app.services.lasso.exceptions import (
    EnumerationLimitError,
    OracleError,
    ProblemValidationError,
    SingularSystemError,
    StepSizeUnderflowError,
)
from app.utils.error_handling import (
    EXIT_INTERNAL,
    EXIT_IO,
    EXIT_NUMERICAL,
    EXIT_ORACLE,
    EXIT_USAGE,
    CommandError,
    get_error_mapping,
    log_error_with_context,
    with_error_handling,
)


class _Positive(BaseModel):
    value: int


def _validation_error() -> ValidationError:
    try:
        _Positive(value="not a number")
    except ValidationError as e:
        return e
    raise AssertionError("validation unexpectedly passed")


class TestErrorMapping:
    """Test exception to exit code mapping."""

    @pytest.mark.parametrize(
        "error, exit_code",
        [
            (ProblemValidationError("rho", "must be positive"), EXIT_USAGE),
            (EnumerationLimitError("too many variables"), EXIT_USAGE),
            (ValueError("bad"), EXIT_USAGE),
            (SingularSystemError("singular", flow_time=0.3), EXIT_NUMERICAL),
            (StepSizeUnderflowError(0.3, 1e-16, None), EXIT_NUMERICAL),
            (OracleError("did not converge"), EXIT_ORACLE),
            (FileNotFoundError("missing.json"), EXIT_IO),
            (PermissionError("denied"), EXIT_IO),
            (RuntimeError("unexpected"), EXIT_INTERNAL),
        ],
    )
    def test_exit_codes(self, error, exit_code):
        assert get_error_mapping(error)[0] == exit_code

    def test_pydantic_validation_error(self):
        exit_code, message = get_error_mapping(_validation_error())
        assert exit_code == EXIT_USAGE
        assert message == "Invalid configuration"


class TestWithErrorHandling:
    def test_passes_through_result(self):
        @with_error_handling("double")
        def double(value):
            return 2 * value

        assert double(4) == 8

    def test_converts_failure(self):
        @with_error_handling("solve")
        def fail():
            raise SingularSystemError("singular", flow_time=0.5)

        with pytest.raises(CommandError) as exc_info:
            fail()
        assert exc_info.value.exit_code == EXIT_NUMERICAL
        assert exc_info.value.message.startswith("Linear solve failed")
        assert "flow_time=0.5" in exc_info.value.message
        assert isinstance(exc_info.value.__cause__, SingularSystemError)

    def test_command_error_is_not_wrapped(self):
        @with_error_handling("check")
        def fail():
            raise CommandError("already mapped", EXIT_IO)

        with pytest.raises(CommandError) as exc_info:
            fail()
        assert exc_info.value.exit_code == EXIT_IO
        assert exc_info.value.message == "already mapped"


class TestLogErrorWithContext:
    def test_includes_flow_time(self, mocker):
        mock_logger = mocker.patch("app.utils.error_handling.logger")
        log_error_with_context(
            SingularSystemError("singular", flow_time=0.25),
            "integrate",
            {"problem_id": 3},
            log_level="warning",
        )
        mock_logger.warning.assert_called_once()
        kwargs = mock_logger.warning.call_args.kwargs
        assert kwargs["flow_time"] == 0.25
        assert kwargs["problem_id"] == 3
        assert kwargs["error_type"] == "SingularSystemError"

    def test_error_level_keeps_traceback(self, mocker):
        mock_logger = mocker.patch("app.utils.error_handling.logger")
        log_error_with_context(RuntimeError("boom"), "export")
        assert mock_logger.error.call_args.kwargs["exc_info"] is True
        assert "flow_time" not in mock_logger.error.call_args.kwargs
