"""Assign configurations to metastable states and detect exit events.

Supports basin-of-attraction states (label = minimum reached by gradient
descent), core-set states (state = complement of the other core sets) and
explicit regions (intervals / rectangles).  Classification runs every
step during exit detection, so first-exit records are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import DynamicsParams, OverdampedBatch, WalkerState, step_overdamped
from .potentials import PotentialSurface, StateGeometry, find_critical_points, newton_polish

__all__ = [
    "OUTSIDE",
    "BASIN",
    "CORE_SET",
    "EXPLICIT_REGION",
    "StateDefinition",
    "ExitEvent",
    "MinimaRegistry",
    "ClassificationTimeoutError",
    "NoExitWithinBudgetError",
    "classify",
    "make_labeler",
    "exit_mask",
    "attribute_exit_region",
    "detect_exit",
]

OUTSIDE = -1

BASIN = "basin-of-attraction"
CORE_SET = "core-set"
EXPLICIT_REGION = "explicit-region"
_KINDS = (BASIN, CORE_SET, EXPLICIT_REGION)


class ClassificationTimeoutError(Exception):
    """Gradient descent exceeded its iteration budget."""


class NoExitWithinBudgetError(Exception):
    """No exit observed within the step budget."""

    def __init__(self, steps: int):
        super().__init__("no exit within %d steps" % steps)
        self.steps = steps


@dataclass
class MinimaRegistry:
    """Append-only registry of discovered minima; labels are insertion order.

    Discovering minima in any order yields the same position set (labels may
    permute); points within ``merge_tol`` of a registered minimum reuse its
    label.
    """

    merge_tol: float = 1e-5
    positions: list[np.ndarray] = field(default_factory=list)

    def register(self, position: np.ndarray) -> int:
        position = np.atleast_1d(np.asarray(position, dtype=float))
        for i, p in enumerate(self.positions):
            if np.linalg.norm(p - position) < self.merge_tol:
                return i
        self.positions.append(position.copy())
        return len(self.positions) - 1

    def lookup(self, position: np.ndarray) -> Optional[int]:
        position = np.atleast_1d(np.asarray(position, dtype=float))
        for i, p in enumerate(self.positions):
            if np.linalg.norm(p - position) < self.merge_tol:
                return i
        return None


@dataclass
class StateDefinition:
    """How configurations map to state labels.

    ``regions`` is used by the core-set and explicit-region kinds: a list of
    disjoint intervals ``(lo, hi)`` in 1d or rectangles ``((xlo, xhi),
    (ylo, yhi))`` in 2d.  ``scan_box``/``scan_grid`` let the basin kind
    precompile its 1d basin boundaries from a critical-point scan.
    """

    kind: str = BASIN
    regions: Sequence = ()
    scan_box: Optional[Sequence[tuple[float, float]]] = None
    scan_grid: int = 200
    descent_tol: float = 1e-8
    descent_max_iter: int = 20000

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError("unknown state kind %r" % self.kind)
        if self.kind in (CORE_SET, EXPLICIT_REGION) and not len(self.regions):
            raise ValueError("%s definitions need regions" % self.kind)


def _region_contains(region, x: np.ndarray) -> np.ndarray:
    """Vectorized membership of points (n, d) in one region."""
    region = np.asarray(region, dtype=float)
    if region.ndim == 1:  # 1d interval
        return (x[:, 0] > region[0]) & (x[:, 0] < region[1])
    inside = np.ones(x.shape[0], dtype=bool)
    for j in range(region.shape[0]):
        inside &= (x[:, j] > region[j, 0]) & (x[:, j] < region[j, 1])
    return inside


_DESCENT_MAX_MOVE = 0.05  # cap |dx| so the path tracks the gradient flow
                          # instead of line-search hopping across saddles


def _descend(surface: PotentialSurface, x0: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Gradient descent with backtracking; robust near saddles."""
    x = np.array(x0, dtype=float)
    v = float(surface.energy(x))
    a = 0.05
    for _ in range(max_iter):
        g = surface.grad(x)
        gn2 = float(np.dot(g, g))
        gn = np.sqrt(gn2)
        if gn < tol:
            return x
        a = min(a, _DESCENT_MAX_MOVE / gn)
        while a > 1e-14:
            xt = x - a * g
            vt = float(surface.energy(xt))
            if vt <= v - 1e-4 * a * gn2:
                break
            a *= 0.5
        else:
            # no certifiable decrease left: the energy landscape is flat to
            # round-off around x, so x is the minimum to working precision
            return x
        if np.array_equal(xt, x):
            # step size underflowed the floating-point spacing at x
            return x
        x, v = xt, vt
        a = min(a * 1.5, 1.0)
    raise ClassificationTimeoutError("descent did not converge in %d iterations" % max_iter)


def classify(position, surface: PotentialSurface, definition: StateDefinition,
             registry: Optional[MinimaRegistry] = None) -> int:
    """State label of a single configuration.

    Basin kind: follow -grad V to a minimum and return its registry label
    (the registry grows on discovery).  Core-set / explicit kinds: label of
    the containing region, or OUTSIDE.
    """
    x = np.atleast_1d(np.asarray(position, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError("position must be finite")
    if definition.kind in (CORE_SET, EXPLICIT_REGION):
        pt = x[None, :]
        for i, region in enumerate(definition.regions):
            if _region_contains(region, pt)[0]:
                return i
        return OUTSIDE
    if registry is None:
        raise ValueError("basin classification needs a MinimaRegistry")
    xm = _descend(surface, x, definition.descent_tol, definition.descent_max_iter)
    xm = newton_polish(surface, xm)
    return registry.register(xm)


def make_labeler(surface: PotentialSurface, definition: StateDefinition,
                 registry: Optional[MinimaRegistry] = None) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized labeler X (n, d) -> labels (n,).

    For 1d basin definitions with a ``scan_box`` the basin boundaries are
    compiled once from a saddle scan (a 1d basin is exactly the interval
    between adjacent saddles), which keeps per-step classification cheap.
    Other basin cases fall back to per-point descent.
    """
    if definition.kind in (CORE_SET, EXPLICIT_REGION):
        regions = list(definition.regions)

        def labeler(x: np.ndarray) -> np.ndarray:
            x = np.atleast_2d(np.asarray(x, dtype=float))
            out = np.full(x.shape[0], OUTSIDE, dtype=np.int64)
            for i, region in enumerate(regions):
                out[_region_contains(region, x)] = i
            return out

        return labeler

    if registry is None:
        raise ValueError("basin labeling needs a MinimaRegistry")

    if surface.dim == 1 and definition.scan_box is not None:
        pts = find_critical_points(surface, list(definition.scan_box), grid=definition.scan_grid)
        saddles = np.array(sorted(p.position[0] for p in pts if p.kind == "saddle-1"))
        minima = sorted((p.position[0] for p in pts if p.kind == "min"))
        # one label per inter-saddle cell, in discovery (left-to-right) order
        cell_labels = []
        edges = np.concatenate(([-np.inf], saddles, [np.inf]))
        for lo, hi in zip(edges[:-1], edges[1:]):
            inside = [m for m in minima if lo < m < hi]
            if inside:
                cell_labels.append(registry.register(np.array([inside[0]])))
            else:
                cell_labels.append(OUTSIDE)
        cells = np.array(cell_labels, dtype=np.int64)

        def labeler(x: np.ndarray) -> np.ndarray:
            x = np.atleast_2d(np.asarray(x, dtype=float))
            return cells[np.searchsorted(saddles, x[:, 0])]

        return labeler

    def labeler(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.array([classify(row, surface, definition, registry) for row in x],
                        dtype=np.int64)

    return labeler


def exit_mask(labels: np.ndarray, state: int, definition: StateDefinition) -> np.ndarray:
    """Boolean mask of lanes that have left ``state``, honoring the core-set
    rule that the region outside every core set still belongs to the state."""
    out = labels != state
    if definition.kind == CORE_SET:
        out &= labels != OUTSIDE
    return out


@dataclass
class ExitEvent:
    """First exit record: (T_S, exit point, exit-region label, step count)."""

    exit_time: float
    exit_point: np.ndarray
    region_label: int
    first_exit_step: int

    def __post_init__(self):
        self.exit_point = np.atleast_1d(np.asarray(self.exit_point, dtype=float))


def attribute_exit_region(exit_point: np.ndarray, new_label: int,
                          geometry: Optional[StateGeometry]) -> int:
    """Exit-region index: nearest boundary minimum if a geometry is known,
    otherwise the label of the state entered."""
    if geometry is not None and geometry.boundary_minima:
        return geometry.nearest_region(exit_point)
    return new_label


def detect_exit(walker: WalkerState, surface: PotentialSurface, params: DynamicsParams,
                definition: StateDefinition, state: int,
                registry: Optional[MinimaRegistry] = None,
                geometry: Optional[StateGeometry] = None,
                max_steps: int = 50_000_000,
                labeler: Optional[Callable] = None) -> ExitEvent:
    """Step ``walker`` until it leaves ``state``; classification every step.

    The walker is mutated in place; on return its position is the first
    recorded out-of-state point.
    """
    if labeler is None:
        labeler = make_labeler(surface, definition, registry)
    # core-set states are the complement of the *other* core sets: roaming
    # outside every core set is not an exit, entering a different one is
    ignore_outside = definition.kind == CORE_SET
    start = int(labeler(walker.position[None, :])[0])
    if start != state and not (ignore_outside and start == OUTSIDE):
        raise ValueError("walker does not start in the requested state")
    for n in range(1, max_steps + 1):
        step_overdamped(walker, surface, params)
        label = int(labeler(walker.position[None, :])[0])
        if label != state and not (ignore_outside and label == OUTSIDE):
            region = attribute_exit_region(walker.position, label, geometry)
            return ExitEvent(exit_time=n * params.dt, exit_point=walker.position.copy(),
                             region_label=region, first_exit_step=n)
    raise NoExitWithinBudgetError(max_steps)
