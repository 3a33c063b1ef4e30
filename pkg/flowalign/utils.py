"""
Utility functions

Provides seeded random streams, NumPy/torch conversion, and the flat key=value
metric format shared by the CLI, the metrics log and results files.
"""

import math
from typing import Dict, Iterable, Mapping, Union

import numpy as np
import torch

# Fixed spawn keys; appending a purpose never renumbers the existing ones.
PURPOSES: Dict[str, int] = {
    "data": 0,
    "noise": 1,
    "dropout": 2,
    "sampler": 3,
    "init": 4,
    "batch": 5,
    "eval": 6,
    "teacher": 7,
}


class RngStreams:
    """
    Counter-based random streams split by purpose.

    Every stream is a NumPy ``Philox`` generator keyed by ``(seed, purpose)`` and,
    optionally, a sub-index, so per-sample work can run in any order and still
    draw the same numbers.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: Dict[str, np.random.Generator] = {}

    def get(self, purpose: str) -> np.random.Generator:
        """
        Get the shared generator for a purpose, creating it on first use.

        Args:
            purpose (str): One of the keys of ``PURPOSES``.

        Returns:
            np.random.Generator: The stateful stream for that purpose.
        """
        if purpose not in self._streams:
            self._streams[purpose] = self.fresh(purpose)
        return self._streams[purpose]

    def fresh(self, purpose: str, *index: int) -> np.random.Generator:
        """Build a new generator for ``purpose`` and optional sub-indices."""
        key = (PURPOSES[purpose],) + tuple(int(i) for i in index)
        sequence = np.random.SeedSequence(self.seed, spawn_key=key)
        return np.random.Generator(np.random.Philox(sequence))


def to_tensor(
    array: Union[np.ndarray, torch.Tensor], dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """Convert a NumPy array to a contiguous torch tensor of ``dtype``."""
    if isinstance(array, torch.Tensor):
        return array.to(dtype)
    return torch.from_numpy(np.ascontiguousarray(array)).to(dtype)


def standard_normal(
    rng: np.random.Generator, shape: Iterable[int], dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """Draw i.i.d. standard normal values from a NumPy stream as a tensor."""
    return to_tensor(rng.standard_normal(tuple(shape)), dtype)


def format_metrics(metrics: Mapping[str, Union[int, float, str]]) -> str:
    """
    Format metrics as a single ``key=value`` line.

    Example:
        >>> format_metrics({"step": 3, "total": 0.5})
        "step=3 total=0.5"
    """
    parts = []
    for key, value in metrics.items():
        if isinstance(value, bool):
            text = str(int(value))
        elif isinstance(value, int):
            text = str(value)
        elif isinstance(value, float):
            text = "nan" if math.isnan(value) else f"{value:.6g}"
        else:
            text = str(value)
        parts.append(f"{key}={text}")
    return " ".join(parts)


def parse_metrics_line(line: str) -> Dict[str, Union[float, str]]:
    """
    Parse a line written by ``format_metrics``.

    Numeric values come back as floats, everything else as strings.
    """
    parsed: Dict[str, Union[float, str]] = {}
    for token in line.split():
        key, sep, value = token.partition("=")
        if not sep:
            continue
        try:
            parsed[key] = float(value)
        except ValueError:
            parsed[key] = value
    return parsed