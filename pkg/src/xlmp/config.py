"""Scenario configuration for the XL-MIMO precoding lab.

A :class:`SystemConfig` fixes everything a simulation run depends on:
array partition, user assignment, SNR/noise bookkeeping, CSI quality,
iteration budget, and the statistical channel model.  All randomness is
derived from ``seed`` so identical configs reproduce identical runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class CorrelationModel(str, Enum):
    """Spatial correlation model for the per-subarray antenna array."""

    IDENTITY = "identity"
    EXPONENTIAL = "exponential"


class Normalization(str, Enum):
    """Trace normalization of the effective channel covariance.

    STATIONARY_TRACE keeps the full-array energy: trace equals the
    subarray size regardless of how many antennas are visible.
    VISIBLE_TRACE lets energy scale with visibility: trace equals the
    number of visible antennas.
    """

    STATIONARY_TRACE = "stationary_trace"
    VISIBLE_TRACE = "visible_trace"


@dataclass(frozen=True)
class CorrelationSpec:
    """Parameters of the antenna correlation matrix generator.

    ``rho`` is the nearest-neighbour correlation of the exponential
    model (entry (m, n) is rho^|m-n|); it is ignored by IDENTITY.
    """

    model: CorrelationModel = CorrelationModel.EXPONENTIAL
    rho: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"correlation.rho must be in [0, 1), got {self.rho}")


@dataclass(frozen=True)
class SystemConfig:
    """All scenario parameters for one simulated XL-MIMO downlink.

    Defaults are the reference scenario: a 256-antenna ULA split into
    4 subarrays of 64 antennas serving 16 single-antenna users, SNR
    swept in [5, 20] dB, unit noise power, CSI error 0.3, and a
    150-iteration solver budget.

    Fields
    ------
    M, S, K         total BS antennas, subarray count, total users
    k_per_subarray  users assigned per subarray (None = even split)
    snr_db          transmit SNR in dB; total power P = sigma2 * 10^(snr_db/10)
    sigma2          receiver noise variance
    tau             CSI error scalar in [0, 1] (0 = perfect estimate)
    T               Kaczmarz iteration budget per solve
    vr_range        (min, max) visible-antenna count per user
                    (None = [M/S // 4, M/S])
    array_type, carrier_freq_ghz
                    recorded as provenance metadata only; the
                    statistical channel model never consumes them
    """

    M: int = 256
    S: int = 4
    K: int = 16
    snr_db: float = 10.0
    sigma2: float = 1.0
    tau: float = 0.3
    T: int = 150
    normalization: Normalization = Normalization.VISIBLE_TRACE
    correlation: CorrelationSpec = field(default_factory=CorrelationSpec)
    seed: int = 1234
    k_per_subarray: tuple[int, ...] | None = None
    vr_range: tuple[int, int] | None = None
    array_type: str = "ULA"
    carrier_freq_ghz: float = 2.6

    def __post_init__(self) -> None:
        if self.M < 1 or self.S < 1 or self.K < 1:
            raise ValueError("M, S, K must be positive")
        if self.M % self.S != 0:
            raise ValueError(f"M={self.M} must be divisible by S={self.S}")
        if self.k_per_subarray is None:
            if self.K % self.S != 0:
                raise ValueError(
                    f"K={self.K} not divisible by S={self.S}; "
                    "pass k_per_subarray explicitly"
                )
        else:
            ks = tuple(int(k) for k in self.k_per_subarray)
            if len(ks) != self.S:
                raise ValueError(
                    f"k_per_subarray has {len(ks)} entries, expected S={self.S}"
                )
            if any(k < 1 for k in ks):
                raise ValueError("k_per_subarray entries must be positive")
            if sum(ks) != self.K:
                raise ValueError(
                    f"k_per_subarray sums to {sum(ks)}, expected K={self.K}"
                )
            object.__setattr__(self, "k_per_subarray", ks)
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.vr_range is not None:
            lo, hi = (int(v) for v in self.vr_range)
            if not 1 <= lo <= hi <= self.m_sub:
                raise ValueError(
                    f"vr_range must satisfy 1 <= min <= max <= {self.m_sub}, "
                    f"got {self.vr_range}"
                )
            object.__setattr__(self, "vr_range", (lo, hi))

    @property
    def m_sub(self) -> int:
        """Antennas per subarray."""
        return self.M // self.S

    @property
    def k_sub(self) -> tuple[int, ...]:
        """Users per subarray, resolved to an explicit tuple."""
        if self.k_per_subarray is not None:
            return self.k_per_subarray
        return (self.K // self.S,) * self.S

    @property
    def p_total(self) -> float:
        """Total transmit power implied by snr_db and sigma2."""
        return self.sigma2 * 10.0 ** (self.snr_db / 10.0)

    @property
    def xi(self) -> float:
        """Regularization factor sigma2 / P = 1 / SNR (linear)."""
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def vr_bounds(self) -> tuple[int, int]:
        """Resolved (min, max) visible-antenna range."""
        if self.vr_range is not None:
            return self.vr_range
        return (max(1, self.m_sub // 4), self.m_sub)
