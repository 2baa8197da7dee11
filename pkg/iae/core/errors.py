from typing import Optional

EXIT_RUNTIME = 1
EXIT_INPUT = 2


class IaeError(Exception):
    """Root of every error the package raises on purpose.

    ``exit_code`` is what the CLI exits with when the error escapes a command:
    1 for runtime failures, 2 for bad configuration or input.
    """

    exit_code = EXIT_RUNTIME

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class ConfigError(IaeError):
    exit_code = EXIT_INPUT


class InputError(IaeError):
    exit_code = EXIT_INPUT


class DatasetFormatError(InputError):
    def __init__(self, detail: str, row: Optional[int] = None):
        if row is not None:
            detail = f"row {row}: {detail}"
        super().__init__(detail)
        self.row = row


class GroundTruthMissingError(InputError):
    def __init__(self, detail: str = "PEHE requires ground truth"):
        super().__init__(detail)


class MissingHistoryError(InputError):
    pass


class ShapeError(IaeError):
    def __init__(self, op_id: int, op: str, detail: str):
        super().__init__(f"op #{op_id} ({op}): {detail}")
        self.op_id = op_id
        self.op = op


class TapeError(IaeError):
    pass


class NonFiniteError(IaeError):
    pass


class PositivityError(IaeError):
    pass


class TrainingDivergedError(IaeError):
    def __init__(self, detail: str, last_good_epoch: Optional[int]):
        super().__init__(f"{detail} (last good epoch: {last_good_epoch})")
        self.last_good_epoch = last_good_epoch


class CalibrationError(IaeError):
    pass


class UndefinedLeverageRateError(IaeError):
    def __init__(self, detail: str = "undefined leverage rate"):
        super().__init__(detail)


class InvariantViolationError(IaeError):
    pass
