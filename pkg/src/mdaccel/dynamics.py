"""Time integrators for overdamped Langevin and Langevin dynamics.

Randomness contract: every walker owns an independent seedable stream
derived from ``(master seed, walker id)``; identical (seed, params,
surface) reproduce trajectories bit for bit.

The module also provides a vectorized batch stepper used by the
Fleming-Viot, direct-simulation and acceleration machinery.  Each batch
lane consumes its own stream in fixed-size chunks, so a lane's trajectory
does not depend on which other lanes share the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .potentials import PotentialSurface

__all__ = [
    "DynamicsParams",
    "WalkerState",
    "IntegratorDivergenceError",
    "walker_rng",
    "substream",
    "step_overdamped",
    "step_langevin",
    "OverdampedBatch",
]

NOISE_CHUNK = 2048


class IntegratorDivergenceError(Exception):
    """Position became non-finite; carries the last finite walker state."""

    def __init__(self, walker):
        super().__init__("integrator produced a non-finite position")
        self.last_state = walker


@dataclass
class DynamicsParams:
    """Inverse temperature, timestep and (for Langevin) friction and mass."""

    beta: float
    dt: float
    gamma: Optional[float] = None
    mass: Optional[np.ndarray] = None  # diagonal of the mass tensor

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be nonnegative")

    def with_beta(self, beta: float) -> "DynamicsParams":
        return DynamicsParams(beta=beta, dt=self.dt, gamma=self.gamma, mass=self.mass)

    @property
    def noise_scale(self) -> float:
        """sqrt(2 dt / beta), the Euler-Maruyama noise amplitude."""
        return float(np.sqrt(2.0 * self.dt / self.beta))


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a hierarchical key under ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key)))


def walker_rng(master_seed: int, walker_id: int = 0) -> np.random.Generator:
    """The stream owned by walker ``walker_id`` under ``master_seed``."""
    return substream(master_seed, walker_id)


@dataclass
class WalkerState:
    """Position (plus optional momentum), clock, and the walker's own stream."""

    position: np.ndarray
    rng: np.random.Generator
    momentum: Optional[np.ndarray] = None
    clock: float = 0.0

    def __post_init__(self):
        self.position = np.atleast_1d(np.asarray(self.position, dtype=float))
        if self.momentum is not None:
            self.momentum = np.atleast_1d(np.asarray(self.momentum, dtype=float))

    def copy(self) -> "WalkerState":
        w = WalkerState(self.position.copy(), self.rng,
                        None if self.momentum is None else self.momentum.copy(),
                        self.clock)
        return w


def step_overdamped(walker: WalkerState, surface: PotentialSurface,
                    params: DynamicsParams) -> WalkerState:
    """One Euler-Maruyama step x <- x - grad V dt + sqrt(2 dt / beta) G."""
    g = walker.rng.standard_normal(surface.dim)
    walker.position = (walker.position
                       - surface.grad(walker.position) * params.dt
                       + params.noise_scale * g)
    walker.clock += params.dt
    if not np.all(np.isfinite(walker.position)):
        raise IntegratorDivergenceError(walker)
    return walker


def step_langevin(walker: WalkerState, surface: PotentialSurface,
                  params: DynamicsParams) -> WalkerState:
    """One BAOAB step of the Langevin dynamics (order dt^2 weak error)."""
    if walker.momentum is None:
        raise ValueError("Langevin stepping needs a momentum")
    if params.gamma is None:
        raise ValueError("Langevin stepping needs a friction gamma")
    m = params.mass if params.mass is not None else np.ones(surface.dim)
    dt = params.dt
    q, p = walker.position, walker.momentum

    p = p - 0.5 * dt * surface.grad(q)                       # B
    q = q + 0.5 * dt * p / m                                 # A
    c1 = np.exp(-params.gamma * dt / m)                      # O
    c2 = np.sqrt((1.0 - c1 ** 2) * m / params.beta)
    p = c1 * p + c2 * walker.rng.standard_normal(surface.dim)
    q = q + 0.5 * dt * p / m                                 # A
    p = p - 0.5 * dt * surface.grad(q)                       # B

    walker.position, walker.momentum = q, p
    walker.clock += dt
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
        raise IntegratorDivergenceError(walker)
    return walker


class _LaneNoise:
    """Chunked per-lane normal buffers; a lane's draw sequence is fixed."""

    __slots__ = ("gens", "dim", "chunk", "buf", "pos")

    def __init__(self, gens: Sequence[np.random.Generator], dim: int, chunk: int = NOISE_CHUNK):
        self.gens = list(gens)
        self.dim = dim
        self.chunk = chunk
        n = len(self.gens)
        self.buf = np.empty((n, chunk, dim))
        self.pos = np.full(n, chunk, dtype=np.int64)  # empty -> refill on first draw

    def draw(self, idx: np.ndarray) -> np.ndarray:
        """Next normal vector for each lane in ``idx``; refills lazily."""
        need = idx[self.pos[idx] >= self.chunk]
        for i in need:
            self.buf[i] = self.gens[i].standard_normal((self.chunk, self.dim))
            self.pos[i] = 0
        out = self.buf[idx, self.pos[idx], :]
        self.pos[idx] += 1
        return out

    def reset_lane(self, i: int, gen: np.random.Generator) -> None:
        self.gens[i] = gen
        self.pos[i] = self.chunk


class OverdampedBatch:
    """Euler-Maruyama stepping of many independent walkers at once.

    Lanes advance together but each owns its stream, so results are
    identical to stepping each walker alone (the scheduling-independence
    contract for the concurrent algorithms).
    """

    def __init__(self, surface: PotentialSurface, params: DynamicsParams,
                 positions: np.ndarray, gens: Sequence[np.random.Generator]):
        self.surface = surface
        self.params = params
        self.x = np.array(positions, dtype=float)
        if self.x.ndim != 2 or self.x.shape[1] != surface.dim:
            raise ValueError("positions must have shape (n, dim)")
        if len(gens) != self.x.shape[0]:
            raise ValueError("one generator per lane required")
        self.noise = _LaneNoise(gens, surface.dim)
        self.steps = np.zeros(self.x.shape[0], dtype=np.int64)
        self._all = np.arange(self.x.shape[0])

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def step(self, idx: Optional[np.ndarray] = None) -> np.ndarray:
        """Advance the lanes in ``idx`` (default all); returns their new positions."""
        if idx is None:
            idx = self._all
        if idx.size == 0:
            return self.x[idx]
        xi = self.x[idx]
        xi = (xi - self.surface.grad(xi) * self.params.dt
              + self.params.noise_scale * self.noise.draw(idx))
        if not np.all(np.isfinite(xi)):
            bad = idx[~np.all(np.isfinite(xi), axis=1)][0]
            raise IntegratorDivergenceError(
                WalkerState(self.x[bad], self.noise.gens[bad], clock=self.steps[bad] * self.params.dt))
        self.x[idx] = xi
        self.steps[idx] += 1
        return xi

    def restart_lane(self, i: int, position: np.ndarray,
                     gen: Optional[np.random.Generator] = None) -> None:
        """Reset a lane's position (and optionally its stream); step count kept."""
        self.x[i] = position
        if gen is not None:
            self.noise.reset_lane(i, gen)
