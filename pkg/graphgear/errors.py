class GraphGearError(Exception):
    """Base class for errors raised by graphgear."""


class GraphFormatError(GraphGearError, ValueError):
    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class EstimationError(GraphGearError, ValueError):
    pass


class HierarchyError(GraphGearError, ValueError):
    pass


class ProfileError(GraphGearError):
    """Missing or unreadable machine profile."""

    def __init__(self, message: str, path=None):
        self.path = path
        super().__init__(f"{message} (run `graphgear calibrate` to create a machine profile)")


class BenchmarkSkipped(GraphGearError):
    """A calibration configuration excluded from measurement."""


class SchedulingError(GraphGearError, ValueError):
    pass
