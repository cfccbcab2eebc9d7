class ValidationError(ValueError):
    """Invalid input. ``field`` names the offending parameter when known."""

    def __init__(self, message, field=None, source=None):
        self.field = field
        self.source = source
        parts = [message]
        if field is not None:
            parts.append(f"field={field}")
        if source is not None:
            parts.append(f"file={source}")
        super().__init__(" | ".join(parts) if len(parts) > 1 else message)


class ComparisonMismatch(RuntimeError):
    """Two event tensors that were required to agree did not."""

    def __init__(self, report, message="event tensors differ"):
        self.report = report
        super().__init__(f"{message}: {report}")
