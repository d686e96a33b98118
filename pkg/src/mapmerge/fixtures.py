"""Bundled environment layouts used for tests, the evaluation benchmark, and
CLI demos.  Maps are authored in meters on a solid-obstacle canvas; free
space is carved as axis-aligned rectangles."""

from __future__ import annotations

import numpy as np

from .grid import FREE, OCCUPIED, OccupancyGrid

RESOLUTION = 0.1


def _canvas(width_m: float, height_m: float, res: float = RESOLUTION) -> np.ndarray:
    return np.full((int(round(height_m / res)), int(round(width_m / res))),
                   OCCUPIED, dtype=np.int8)


def _carve(cells: np.ndarray, res: float, x0, y0, x1, y1):
    r0, r1 = int(round(y0 / res)), int(round(y1 / res))
    c0, c1 = int(round(x0 / res)), int(round(x1 / res))
    cells[r0:r1, c0:c1] = FREE


def corridor(length: float = 20.0, width: float = 3.0,
             res: float = RESOLUTION) -> OccupancyGrid:
    """Straight corridor along x with 1 m of wall on every side."""
    cells = _canvas(length + 2.0, width + 2.0, res)
    _carve(cells, res, 1.0, 1.0, 1.0 + length, 1.0 + width)
    return OccupancyGrid(cells, res)


def corridor_with_left_opening(res: float = RESOLUTION) -> OccupancyGrid:
    """Corridor along x whose left wall (as seen facing +x) opens into a bay
    3 m deep.  From (3, 5) facing +x the scan reads w m w g w."""
    cells = _canvas(21.0, 10.0, res)
    _carve(cells, res, 1.0, 4.0, 19.0, 6.0)    # main corridor
    _carve(cells, res, 4.7, 6.0, 19.0, 8.0)    # bay behind the left wall
    return OccupancyGrid(cells, res)


def loop_world(res: float = RESOLUTION) -> OccupancyGrid:
    """Rectangular loop of corridors with an extra parallel hallway through
    the middle (corridor-heavy, strong perceptual aliasing)."""
    cells = _canvas(30.0, 20.0, res)
    _carve(cells, res, 1.0, 1.0, 29.0, 3.0)    # bottom hallway
    _carve(cells, res, 1.0, 17.0, 29.0, 19.0)  # top hallway
    _carve(cells, res, 1.0, 9.0, 29.0, 11.0)   # middle hallway (parallel)
    _carve(cells, res, 1.0, 1.0, 3.0, 19.0)    # left hallway
    _carve(cells, res, 27.0, 1.0, 29.0, 19.0)  # right hallway
    return OccupancyGrid(cells, res)


def office_world(res: float = RESOLUTION) -> OccupancyGrid:
    """Central hallway with offices on both sides, each with a 1 m door."""
    cells = _canvas(30.0, 20.0, res)
    _carve(cells, res, 1.0, 9.0, 29.0, 11.0)   # hallway
    for k, x0 in enumerate((2.0, 9.0, 16.0, 23.0)):
        _carve(cells, res, x0, 2.0, x0 + 5.0, 8.0)      # room below
        _carve(cells, res, x0 + 2.0, 8.0, x0 + 3.0, 9.0)  # its door
        _carve(cells, res, x0, 12.0, x0 + 5.0, 18.0)    # room above
        _carve(cells, res, x0 + 1.0, 11.0, x0 + 2.0, 12.0)  # its door
    return OccupancyGrid(cells, res)


def rooms_world(res: float = RESOLUTION) -> OccupancyGrid:
    """A 3x2 block of large rooms joined by interior doors and one short
    entry corridor (room-heavy, few hallways)."""
    cells = _canvas(28.0, 19.0, res)
    for i, x0 in enumerate((1.0, 10.0, 19.0)):
        for j, y0 in enumerate((1.0, 10.0)):
            _carve(cells, res, x0, y0, x0 + 8.0, y0 + 8.0)
    # doors between horizontal neighbors
    for x in (9.0, 18.0):
        _carve(cells, res, x, 4.5, x + 1.0, 6.0)
        _carve(cells, res, x, 13.5, x + 1.0, 15.0)
    # doors between vertical neighbors
    for x0 in (1.0, 10.0, 19.0):
        _carve(cells, res, x0 + 3.5, 9.0, x0 + 5.0, 10.0)
    return OccupancyGrid(cells, res)


BENCHMARK_ENVIRONMENTS = {
    "loop": loop_world,
    "office": office_world,
    "rooms": rooms_world,
}
