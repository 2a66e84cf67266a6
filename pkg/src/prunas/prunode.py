"""Bi-path mask state machine for searching inner hidden dimensions.

A prunode materializes exactly two candidates of one block, a small and a
large one, that share weights and differ only in how many hidden channels
their masks keep. After every architecture-weight step the masks walk
toward the preferred width; the gap between them shrinks quadratically
with training progress until the two masks are one granularity step
apart, at which point the state freezes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import ConfigurationError

DEFAULT_C = 0.8
DEFAULT_MAX_DISTANCE = 0.6
DEFAULT_MOMENTUM = 0.4


def round_to_multiple(x: float, granularity: int) -> int:
    """Nearest multiple of granularity, ties away from zero (x >= 0)."""
    return granularity * int(math.floor(x / granularity + 0.5))


def _clip(v: int, lo: int, hi: int) -> int:
    return lo if v < lo else hi if v > hi else v


@dataclass(frozen=True)
class MaskState:
    """Bookkeeping for one prunode.

    ``s`` and ``l`` are the small/large mask fractions of ``max_channels``;
    ``small_mask``/``large_mask`` are the derived channel counts (always
    multiples of ``granularity``). ``weight`` records the last preference
    signal fed in, ``update`` is its momentum accumulator.
    """

    max_channels: int
    granularity: int
    weight: float = 0.0
    update: float = 0.0
    s: float = 0.5
    l: float = 1.0
    small_mask: int = 0
    large_mask: int = 0
    c: float = DEFAULT_C
    max_distance: float = DEFAULT_MAX_DISTANCE
    momentum: float = DEFAULT_MOMENTUM

    @property
    def frozen(self) -> bool:
        return (self.l - self.s) * self.max_channels <= self.granularity


def init_mask_state(max_channels: int, granularity: int, *,
                    c: float = DEFAULT_C,
                    max_distance: float = DEFAULT_MAX_DISTANCE,
                    momentum: float = DEFAULT_MOMENTUM) -> MaskState:
    """Small mask starts at half the channels, large mask at all of them."""
    if granularity <= 0 or max_channels % granularity != 0:
        raise ConfigurationError(
            f"granularity {granularity} must divide max_channels {max_channels}")
    if max_channels < 2 * granularity:
        raise ConfigurationError(
            f"max_channels {max_channels} leaves no room for two distinct masks "
            f"(needs >= {2 * granularity})")
    small = _clip(round_to_multiple(0.5 * max_channels, granularity),
                  granularity, max_channels - granularity)
    return MaskState(max_channels=max_channels, granularity=granularity,
                     small_mask=small, large_mask=max_channels,
                     c=c, max_distance=max_distance, momentum=momentum)


def update_masks(state: MaskState, progress: float, weight_signal: float) -> tuple[MaskState, bool]:
    """One mask-walk step; returns (new state, weight-reset flag).

    No-op once the masks are a single granularity step apart (frozen).
    The reset flag is raised on the normal branch and tells the caller to
    re-center the prunode's two architecture weights.
    """
    if not 0.0 <= progress <= 1.0:
        raise ConfigurationError(f"progress {progress} outside [0, 1]")
    if state.frozen:
        return state, False
    update = state.update * state.momentum + weight_signal
    distance = state.max_distance * (1.0 - progress) ** 2
    s = state.s + update
    if s > 0.0:
        reset = True
        s = min(s, 1.0 - state.c * distance)
    else:
        reset = False  # corner case: keep the accumulated update
        s = 0.0
    l = s + distance
    small = _clip(round_to_multiple(s * state.max_channels, state.granularity),
                  state.granularity, state.max_channels - state.granularity)
    large = _clip(round_to_multiple(l * state.max_channels, state.granularity),
                  small + state.granularity, state.max_channels)
    new = replace(state, weight=weight_signal, update=update, s=s, l=l,
                  small_mask=small, large_mask=large)
    return new, reset


def weight_signal(theta_small: float, theta_large: float) -> float:
    """Positive means the wide candidate is preferred: expand both masks."""
    return theta_large - theta_small


def reset_candidate_weights(theta_small: float, theta_large: float) -> tuple[float, float]:
    """Re-center both candidates on their mean after a mask move."""
    mean = 0.5 * (theta_small + theta_large)
    return mean, mean


def prunode_latency(state: MaskState, a_small, a_large, lut, layer_index: int, variant_id: str):
    """Gumbel-weighted average of the two candidates' table latencies.

    Works on plain floats or scalar tensors (differentiable in the
    coefficients either way).
    """
    lat_small = lut.lookup(layer_index, variant_id, state.small_mask)
    lat_large = lut.lookup(layer_index, variant_id, state.large_mask)
    return a_small * lat_small + a_large * lat_large
