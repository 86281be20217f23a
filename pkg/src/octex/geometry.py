"""Angular wedge grids: clock-hour, quadrant, and macular-sector assignment.

All three circular displays share one mechanism: numeric tokens are binned
into equal wedges by their angle about the grid center. Angles are
measured clockwise from 12 o'clock; OS grids mirror horizontally so that
nasal/temporal sides swap between eyes while sharing one wedge layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from octex.fields import GCC_SECTORS, QUADRANTS
from octex.tokens import OcrToken

# A token is claimed by a wedge only within this fraction of the wedge
# width around its center; tokens in the outer band stay unassigned so a
# badly displaced value degrades to NotDetected instead of silently
# landing in a neighboring slot.
DEFAULT_WINDOW_FRACTION = 0.45

# Wedge order is pre-mirror (OD orientation): index 0 at top, increasing
# clockwise. For OD the nasal side is to the right.
CLOCK_LABELS = ("12", "1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11")
QUADRANT_LABELS = ("superior", "nasal", "inferior", "temporal")
SECTOR_LABELS = (
    "superior",
    "superior_nasal",
    "inferior_nasal",
    "inferior",
    "inferior_temporal",
    "superior_temporal",
)

assert set(QUADRANT_LABELS) == set(QUADRANTS)
assert set(SECTOR_LABELS) == set(GCC_SECTORS)


def circular_difference(a: float, b: float) -> float:
    """Smallest absolute difference between two angles in degrees."""
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


@dataclass(frozen=True)
class WedgeGrid:
    """Equal angular wedges around a center point within one crop."""

    labels: tuple[str, ...]
    center: tuple[float, float] = (0.5, 0.5)
    mirror: bool = False
    window_frac: float = DEFAULT_WINDOW_FRACTION

    @property
    def wedge_width(self) -> float:
        return 360.0 / len(self.labels)

    def wedge_angle(self, index: int) -> float:
        """Center angle of a wedge, clockwise degrees from 12 o'clock (pre-mirror)."""
        return (index % len(self.labels)) * self.wedge_width

    def angle_of(self, x: float, y: float) -> float:
        """Clockwise angle from the top axis for a crop position (y grows down)."""
        dx = x - self.center[0]
        if self.mirror:
            dx = -dx
        dy = y - self.center[1]
        return math.degrees(math.atan2(dx, -dy)) % 360.0

    def wedge_of(self, x: float, y: float) -> int | None:
        """Wedge index claiming a position, or None outside every window."""
        theta = self.angle_of(x, y)
        width = self.wedge_width
        index = int((theta + width / 2.0) // width) % len(self.labels)
        if circular_difference(theta, self.wedge_angle(index)) > self.window_frac * width:
            return None
        return index


def clock_grid(center=(0.5, 0.5), mirror=False, window_frac=DEFAULT_WINDOW_FRACTION) -> WedgeGrid:
    """Twelve clock-hour wedges; hours run clockwise for OD, mirrored for OS."""
    return WedgeGrid(CLOCK_LABELS, tuple(center), mirror, window_frac)


def quadrant_grid(center=(0.5, 0.5), mirror=False, window_frac=DEFAULT_WINDOW_FRACTION) -> WedgeGrid:
    return WedgeGrid(QUADRANT_LABELS, tuple(center), mirror, window_frac)


def sector_grid(center=(0.5, 0.5), mirror=False, window_frac=DEFAULT_WINDOW_FRACTION) -> WedgeGrid:
    """Six GCL+IPL sector wedges; boundaries fall at 30 + k*60 degrees."""
    return WedgeGrid(SECTOR_LABELS, tuple(center), mirror, window_frac)


def grid_for_labels(labels: tuple[str, ...], center, mirror, window_frac=DEFAULT_WINDOW_FRACTION) -> WedgeGrid:
    return WedgeGrid(labels, tuple(center), mirror, window_frac)


@dataclass
class SlotAssignment:
    """Outcome of binning one crop's numeric tokens into wedges."""

    winners: dict[str, OcrToken] = field(default_factory=dict)
    conflicts: list[tuple[str, OcrToken, list[OcrToken]]] = field(default_factory=list)
    unassigned: list[OcrToken] = field(default_factory=list)


def assign_slots(grid: WedgeGrid, tokens: list[OcrToken]) -> SlotAssignment:
    """Assign tokens to wedges; competing tokens resolve by confidence.

    When two or more tokens claim one wedge the highest-confidence token
    wins (ties break toward the lowest id) and the losers are reported as
    a conflict for downstream QC.
    """
    by_wedge: dict[int, list[OcrToken]] = {}
    result = SlotAssignment()
    for tok in sorted(tokens, key=lambda t: t.id):
        idx = grid.wedge_of(tok.x_center, tok.y_center)
        if idx is None:
            result.unassigned.append(tok)
        else:
            by_wedge.setdefault(idx, []).append(tok)

    for idx, claimants in by_wedge.items():
        label = grid.labels[idx]
        winner = max(claimants, key=lambda t: (t.conf, -t.id))
        result.winners[label] = winner
        losers = [t for t in claimants if t is not winner]
        if losers:
            result.conflicts.append((label, winner, losers))
    return result
