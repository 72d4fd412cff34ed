# utils/validation.py
import math
import os
from typing import Iterable, Optional, List, Sequence
import logging

import numpy as np

logger = logging.getLogger(__name__)


class ValidationError(Exception):
    """Invalid input: bad shapes, out-of-range parameters, inconsistent layouts"""
    pass


class InstanceParseError(Exception):
    """An instance or suite file could not be read or decoded"""
    pass


class CapacityError(Exception):
    """A state-space or table-size guard was exceeded"""
    pass


def validate_positive(value: float, name: str, allow_zero: bool = False) -> float:
    """
    Validate that a real parameter is finite and positive

    Args:
        value: Value to check
        name: Parameter name used in the error message
        allow_zero: Accept 0 as a valid value

    Returns:
        The value as float

    Raises:
        ValidationError: If the value is not finite or out of range
    """
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a real number, got {value!r}")

    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value}")

    if allow_zero and value < 0:
        raise ValidationError(f"{name} must be nonnegative, got {value}")
    if not allow_zero and value <= 0:
        raise ValidationError(f"{name} must be positive, got {value}")

    return value


def validate_fraction(fraction: float, name: str = "observed_fraction") -> float:
    """Validate a fraction in the half-open interval (0, 1]"""
    try:
        fraction = float(fraction)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a real number, got {fraction!r}")

    if not (0.0 < fraction <= 1.0):
        raise ValidationError(f"{name} must lie in (0, 1], got {fraction}")
    return fraction


def validate_labeling(assignment: Sequence[int], node_count: int, label_count: int) -> List[int]:
    """
    Validate a labeling against a node and label count

    Args:
        assignment: Per-node label indices
        node_count: Expected length
        label_count: Number of labels, entries must lie in [0, label_count)

    Returns:
        The labeling as a list of python ints

    Raises:
        ValidationError: If the length or any entry is invalid
    """
    values = [int(v) for v in assignment]
    if len(values) != node_count:
        raise ValidationError(
            f"Labeling has {len(values)} entries, expected {node_count}"
        )
    bad = [v for v in values if not 0 <= v < label_count]
    if bad:
        raise ValidationError(
            f"Labeling contains labels outside [0, {label_count}): {bad[:5]}"
        )
    return values


def validate_colors(colors: Iterable[Sequence[float]]) -> np.ndarray:
    """Validate RGB triples with every channel in [0, 1]"""
    array = np.asarray(colors, dtype=float)
    if array.ndim == 1:
        array = array[None, :]
    if array.ndim != 2 or array.shape[1] != 3:
        raise ValidationError(f"Colors must be RGB triples, got shape {array.shape}")
    if not np.all(np.isfinite(array)) or np.any(array < 0.0) or np.any(array > 1.0):
        raise ValidationError("Color channels must be finite reals in [0, 1]")
    return array


def validate_file_path(file_path: str, allowed_extensions: Optional[List[str]] = None) -> str:
    """
    Validate that a path names a readable file

    Args:
        file_path: File path to validate
        allowed_extensions: Optional list of allowed file extensions

    Returns:
        The stripped path

    Raises:
        InstanceParseError: If the file is missing or has a disallowed extension
    """
    if not file_path or not isinstance(file_path, str):
        raise InstanceParseError("File path must be a non-empty string")

    file_path = file_path.strip()

    if not os.path.isfile(file_path):
        raise InstanceParseError(f"File not found or not readable: {file_path}")

    if allowed_extensions:
        _, ext = os.path.splitext(file_path.lower())
        ext = ext.lstrip('.')
        if ext not in [e.lstrip('.') for e in allowed_extensions]:
            raise InstanceParseError(
                f"File extension '{ext}' not allowed. Allowed: {allowed_extensions}"
            )

    return file_path
