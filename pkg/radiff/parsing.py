"""
Parsing
=======

Defines utilities that are used to parse and format the records of RDF
documents, the line oriented text format radar frames are exchanged in.

"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import TypeVar

from typing_extensions import Self, TypeGuard

from radiff.errors import ParsingError

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "RDF_HEADER",
    "ParserConfig",
    "Record",
    "RecordParsable",
    "record_parsers",
    "register_record_parser",
    "must_have",
    "split_record",
    "n_floats",
    "key_values",
    "format_float",
]

_T = TypeVar("_T")

RDF_HEADER = "#RDF v1"


@dataclass
class ParserConfig:
    """Additional settings for parsing RDF documents.

    Parameters
    ----------
    num_classes
        Number of object classes ``C``; box class ids must lie in ``[1, C]``.
    significant_digits
        Significant digits floats are printed with.
    """

    num_classes: int = 3
    significant_digits: int = 6


@dataclass(frozen=True)
class Record:
    """
    Represents one line of an RDF document split into its tag and fields.

    Parameters
    ----------
    tag
        First token of the line.
    fields
        Remaining whitespace separated tokens.
    line_number
        1-based line number, used in error messages.
    """

    tag: str
    fields: tuple[str, ...]
    line_number: int

    def error(self, message: str) -> ParsingError:
        """Return a :class:`ParsingError` locating ``message`` at this line."""
        return ParsingError(f"Line {self.line_number} ('{self.tag}' record): {message}")


class RecordParsable(ABC):
    """
    Define the base class for objects that can be generated from RDF records.

    This is an :class:`ABCMeta` abstract class that must be inherited by
    sub-classes.

    Methods
    -------
    -   :meth:`~radiff.parsing.RecordParsable.from_record`
    -   :meth:`~radiff.parsing.RecordParsable.to_record`
    """

    @classmethod
    @abstractmethod
    def from_record(cls, record: Record, config: ParserConfig) -> Self:
        """
        Parse an object of this class from the given record.

        Parameters
        ----------
        record
            Record to read.
        config
            Additional settings for parsing the document.

        Raises
        ------
        :class:`ParsingError`
            If the record is malformed.
        """

    @abstractmethod
    def to_record(self, config: ParserConfig) -> str:
        """Return the RDF line representing the object."""


record_parsers: dict[str, Callable] = {}


def register_record_parser(tag: str) -> Callable:
    """
    Add the decorated constructor to the ``record_parsers`` dictionary under
    the given record tag.

    Parameters
    ----------
    tag
        Record tag to use as key for adding.
    """

    def register(constructor: Callable) -> Callable:
        record_parsers[tag] = constructor
        return constructor

    return register


def must_have(value: _T | None, message: str) -> TypeGuard[_T]:
    """
    Assert that `value` is not :py:data:`None`.

    Parameters
    ----------
    value
        Value to check.
    message
        Error message to raise.

    Raises
    ------
    :class:`ParsingError` if `value` is :py:data:`None`.

    Returns
    -------
    :class:`TypeGuard`

    """
    if value is None:
        raise ParsingError(message)
    return True


def split_record(line: str, line_number: int) -> Record | None:
    """
    Split a line into a :class:`Record`; return :py:data:`None` for blank
    lines.
    """
    parts = line.split()
    if not parts:
        return None
    return Record(tag=parts[0], fields=tuple(parts[1:]), line_number=line_number)


def n_floats(record: Record, count: int) -> tuple[float, ...]:
    """
    Parse the fields of the given record as exactly ``count`` finite floats.

    Raises
    ------
    :class:`ParsingError`
        If the field count differs or a field is not a finite float.

    Examples
    --------
    ```
    >>> n_floats(Record("pt", ("1.0", "2.0", "0.5", "-3.25", "12.5"), 3), 5)
    (1.0, 2.0, 0.5, -3.25, 12.5)

    ```
    """
    if len(record.fields) != count:
        raise record.error(f"expected {count} values, found {len(record.fields)}")
    try:
        values = tuple(float(field) for field in record.fields)
    except ValueError:
        raise record.error(f"cannot parse {record.fields} as floats") from None
    if not all(math.isfinite(v) for v in values):
        raise record.error(f"non-finite value in {record.fields}")
    return values


def key_values(record: Record, keys: Sequence[str]) -> dict[str, str]:
    """
    Parse ``key=value`` fields, requiring exactly the given keys.

    Examples
    --------
    ```
    >>> record = Record("ego", ("vx=1.5", "vy=0", "yawrate=0"), 2)
    >>> key_values(record, ["vx", "vy", "yawrate"])
    {'vx': '1.5', 'vy': '0', 'yawrate': '0'}

    ```
    """
    pairs: dict[str, str] = {}
    for field in record.fields:
        key, separator, value = field.partition("=")
        if not separator or not value:
            raise record.error(f"expected 'key=value', found '{field}'")
        pairs[key] = value
    if sorted(pairs) != sorted(keys):
        raise record.error(f"expected keys {list(keys)}, found {list(pairs)}")
    return pairs


def format_float(value: float, config: ParserConfig) -> str:
    """
    Format ``value`` with the configured number of significant digits.

    Examples
    --------
    ```
    >>> format_float(-3.25, ParserConfig())
    '-3.25'
    >>> format_float(1.0 / 3.0, ParserConfig())
    '0.333333'

    ```
    """
    text = f"{value:.{config.significant_digits}g}"
    return "0" if text == "-0" else text
