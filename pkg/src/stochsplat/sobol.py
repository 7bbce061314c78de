"""Low-discrepancy sampling of the parameter manifold.

Wraps the standard (unscrambled) Sobol sequence behind a small cursor-based
stream so that any point is addressable by ``(dimension, cursor)`` alone,
which is what makes training runs and planning rounds replayable.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import qmc

MAX_DIMENSION = 32


class SobolStream:
    """Cursor into the unscrambled Sobol sequence of a fixed dimension.

    The stream starts at the origin point (cursor 0); the same
    ``(dimension, cursor)`` always yields the same point, bit for bit.
    Coordinates lie in ``[0, 1)``.
    """

    def __init__(self, dimension: int, cursor: int = 0):
        if dimension < 1 or dimension > MAX_DIMENSION:
            raise ValueError(
                f"Sobol dimension must be in [1, {MAX_DIMENSION}], got {dimension}"
            )
        if cursor < 0:
            raise ValueError(f"cursor must be non-negative, got {cursor}")
        self.dimension = int(dimension)
        self.cursor = 0
        self._engine = qmc.Sobol(d=self.dimension, scramble=False)
        if cursor:
            self.seek(cursor)

    def seek(self, cursor: int) -> None:
        """Position the stream so the next point is the one at ``cursor``."""
        if cursor < 0:
            raise ValueError(f"cursor must be non-negative, got {cursor}")
        if cursor < self.cursor:
            self._engine = qmc.Sobol(d=self.dimension, scramble=False)
            self.cursor = 0
        if cursor > self.cursor:
            self._engine.fast_forward(cursor - self.cursor)
            self.cursor = cursor

    def next(self) -> np.ndarray:
        """Return the point at the current cursor and advance by one."""
        with warnings.catch_warnings():
            # scipy warns when the draw count is not a power of two; the
            # stream hands out points one at a time by design.
            warnings.simplefilter("ignore", UserWarning)
            point = self._engine.random(1)[0]
        self.cursor += 1
        return point.astype(np.float64)

    def take(self, count: int) -> np.ndarray:
        """Return the next ``count`` points as a ``(count, dimension)`` array."""
        return np.array([self.next() for _ in range(count)])


def sobol_next(stream: SobolStream) -> np.ndarray:
    """Advance ``stream`` by one point; see :meth:`SobolStream.next`."""
    return stream.next()


def to_symmetric_cube(u: np.ndarray) -> np.ndarray:
    """Map points from the unit cube ``[0, 1)^m`` to ``[-1, 1)^m``."""
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0.0) or np.any(u >= 1.0):
        raise ValueError("expected coordinates in [0, 1)")
    return 2.0 * u - 1.0
