from __future__ import annotations

from enum import Enum
from typing import Type, TypeVar

from flowalign.errors import ConfigError

E = TypeVar("E", bound="LabeledEnum")


class LabeledEnum(Enum):
    """Enum base class with a config spelling and a display label."""

    def __new__(cls, code: str, label: str):
        obj = object.__new__(cls)
        obj._value_ = code
        obj._label = label  # pyright: ignore[reportAttributeAccessIssue]
        return obj

    @property
    def code(self) -> str:
        """Spelling used in JSON configs and on the command line."""
        return str(self.value)

    @property
    def label(self) -> str:
        """Human-readable name used in tables."""
        return self._label  # pyright: ignore[reportAttributeAccessIssue]

    @classmethod
    def from_code(cls: Type[E], code: "str | E") -> E:
        """Parse a config spelling, accepting members unchanged."""
        if isinstance(code, cls):
            return code
        for member in cls:
            if member.value == code:
                return member
        raise ConfigError("unknown_choice", {"enum": cls.__name__, "value": code})

    @classmethod
    def codes(cls) -> list:
        return [member.code for member in cls]
