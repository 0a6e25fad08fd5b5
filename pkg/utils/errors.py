from typing import Any


class CIGNError(Exception):
    def __init__(
        self,
        message: str,
        details: dict[str, Any] | None = None,
        cause: Exception | None = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.details = details or {}
        self.cause = cause

    def __str__(self) -> str:
        base = self.message
        if self.details:
            detail_str = ", ".join(f"{k}={v}" for k, v in self.details.items())
            base = f"{base} ({detail_str})"
        if self.cause:
            base = f"{base} [caused by: {self.cause}]"
        return base

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": self.__class__.__name__,
            "message": self.message,
            "details": self.details,
            "cause": str(self.cause) if self.cause else None,
        }


class ConfigError(CIGNError):
    def __init__(
        self,
        message: str,
        config_key: str | None = None,
        config_file: str | None = None,
        **kwargs: Any,
    ) -> None:
        details = kwargs.pop("details", {}) or {}
        if config_key:
            details["config_key"] = config_key
        if config_file:
            details["config_file"] = config_file
        super().__init__(message, details=details, **kwargs)
        self.config_key = config_key
        self.config_file = config_file


class NumericsError(CIGNError):
    """数值计算层（tensor / ops / backward）抛出的错误的基类"""


class ShapeError(NumericsError):
    def __init__(self, message: str, *shapes: tuple[int, ...], **kwargs: Any) -> None:
        details = kwargs.pop("details", {}) or {}
        if shapes:
            details["shapes"] = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message, details=details, **kwargs)
        self.shapes = shapes


class AxisError(ShapeError):
    pass


class DomainError(NumericsError):
    pass


class DegenerateVectorError(NumericsError):
    pass


class GradCheckError(NumericsError):
    pass


class NonFiniteError(NumericsError):
    """loss 或梯度出现 NaN/Inf。where 指出是哪个参数或者哪一步"""

    def __init__(self, message: str, where: str | None = None, **kwargs: Any) -> None:
        details = kwargs.pop("details", {}) or {}
        if where:
            details["where"] = where
        super().__init__(message, details=details, **kwargs)
        self.where = where


class LossError(CIGNError):
    pass


class DataError(CIGNError):
    pass


class CorruptFileError(DataError):
    def __init__(self, message: str, path: str | None = None, **kwargs: Any) -> None:
        details = kwargs.pop("details", {}) or {}
        if path:
            details["path"] = path
        super().__init__(message, details=details, **kwargs)
        self.path = path


class VersionError(DataError):
    pass


class ArtifactError(CIGNError):
    def __init__(
        self, message: str, expected: list[str] | None = None, **kwargs: Any
    ) -> None:
        details = kwargs.pop("details", {}) or {}
        if expected:
            details["expected"] = ", ".join(expected)
        super().__init__(message, details=details, **kwargs)
        self.expected = expected or []


class MetricError(CIGNError):
    """accuracy matrix 不完整或者下标越界"""
