"""Downlink precoder construction per subarray.

Both routes build G = beta * H W with W approximating
(H^H H + xi I)^(-1): the direct route inverts the Gram matrix, the
iterative route runs one randomized Kaczmarz solve per user.  The
scalar beta enforces the per-subarray power budget trace(G^H G) = P
exactly at any iteration count, since it is computed from the actual
(possibly unconverged) weight matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import ChannelRealization
from .config import SystemConfig
from .kaczmarz import SelectionMode, exact_weights, rka_solve_block

__all__ = [
    "PrecoderMethod",
    "Precoder",
    "selection_mode_for",
    "rzf_direct",
    "rka_precoder",
    "build_all_precoders",
]


class PrecoderMethod(str, Enum):
    """Available precoder construction routes."""

    RZF_DIRECT = "rzf"
    RKA = "rka"
    SWOR_RKA = "swor_rka"
    #: i.i.d. draws from the norm-weighted law (experimental)
    SWOR_RKA_IID = "swor_rka_iid"


_MODE_FOR_METHOD = {
    PrecoderMethod.RKA: SelectionMode.UNIFORM,
    PrecoderMethod.SWOR_RKA: SelectionMode.NORM_WEIGHTED,
    PrecoderMethod.SWOR_RKA_IID: SelectionMode.NORM_WEIGHTED_IID,
}

_METHOD_FOR_MODE = {mode: method for method, mode in _MODE_FOR_METHOD.items()}


def selection_mode_for(method: PrecoderMethod) -> SelectionMode:
    """Row-selection law implied by an iterative precoding method."""
    mode = _MODE_FOR_METHOD.get(method)
    if mode is None:
        raise ValueError(f"{method} is not an iterative method")
    return mode


@dataclass
class Precoder:
    """Per-subarray precoding matrices with their power provenance.

    ``G[s]`` is the m_sub x k_sub[s] matrix for subarray s and
    ``power_scale[s]`` the scalar that stretched the raw weight product
    onto the power budget.  ``iterations_used`` is the solver budget
    (0 for the direct route) and ``csi_error`` the tau of the channel
    estimate the build consumed (0 = perfect CSI).
    """

    G: list[np.ndarray]
    power_scale: list[float]
    method: PrecoderMethod
    iterations_used: int
    csi_error: float = 0.0


def _scale_to_power(F: np.ndarray, power: float) -> tuple[np.ndarray, float]:
    energy = np.einsum("mk,mk->", F.conj(), F).real
    if energy <= 0.0:
        raise ValueError("no radiating directions: trace(F^H F) is zero")
    scale = float(np.sqrt(power / energy))
    return scale * F, scale


def rzf_direct(H: np.ndarray, xi: float, power: float) -> Precoder:
    """Regularized zero-forcing for one subarray by direct inversion.

    F = H (H^H H + xi I)^(-1), then G = beta F with
    beta = sqrt(power / trace(F^H F)).
    """
    if xi <= 0:
        raise ValueError(f"xi must be > 0, got {xi}")
    if power <= 0:
        raise ValueError(f"power must be > 0, got {power}")
    F = H @ exact_weights(H, xi)
    G, scale = _scale_to_power(F, power)
    return Precoder(G=[G], power_scale=[scale], method=PrecoderMethod.RZF_DIRECT,
                    iterations_used=0)


def rka_precoder(
    H: np.ndarray,
    xi: float,
    power: float,
    T: int,
    mode: SelectionMode,
    rng: np.random.Generator,
) -> Precoder:
    """Kaczmarz-approximated RZF for one subarray.

    Solves one canonical-basis system per user (independent child
    streams, so the solves could run concurrently), assembles the
    weight matrix column-wise, and applies the same power scaling as
    the direct route.
    """
    if power <= 0:
        raise ValueError(f"power must be > 0, got {power}")
    method = _METHOD_FOR_MODE.get(mode)
    if method is None:
        raise ValueError(f"unsupported selection mode {mode}")
    block = rka_solve_block(H, xi, T, mode, rng)
    F = H @ block.weights
    G, scale = _scale_to_power(F, power)
    return Precoder(G=[G], power_scale=[scale], method=method, iterations_used=T)


def build_all_precoders(
    realization: ChannelRealization,
    config: SystemConfig,
    method: PrecoderMethod,
    rng: np.random.Generator,
    use_estimated: bool = True,
) -> Precoder:
    """Build every subarray's precoder from its local channel.

    Each subarray s uses only its own block (the estimated one by
    default, which equals the true channel when tau = 0) and an even
    share P/S of the power budget.  Subarray builds consume their own
    child streams, so they could run concurrently.
    """
    if not isinstance(method, PrecoderMethod):
        raise ValueError(f"unknown precoding method {method!r}")
    power_per_sub = config.p_total / config.S
    streams = rng.spawn(config.S)
    parts: list[Precoder] = []
    for s in range(config.S):
        H_local = realization.local_estimate(s) if use_estimated else realization.local(s)
        if method is PrecoderMethod.RZF_DIRECT:
            parts.append(rzf_direct(H_local, config.xi, power_per_sub))
        else:
            parts.append(
                rka_precoder(H_local, config.xi, power_per_sub, config.T,
                             _MODE_FOR_METHOD[method], streams[s])
            )
    tau_used = config.tau if use_estimated else 0.0
    return Precoder(
        G=[p.G[0] for p in parts],
        power_scale=[p.power_scale[0] for p in parts],
        method=method,
        iterations_used=0 if method is PrecoderMethod.RZF_DIRECT else config.T,
        csi_error=tau_used,
    )
