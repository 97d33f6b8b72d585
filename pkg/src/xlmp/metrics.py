"""Link-level performance metrics.

Spectral efficiency uses the channel-hardening lower bound: the useful
signal is the ensemble-mean effective gain E{g^H h}, everything else
(gain fluctuation, intra- and inter-subarray interference) is noise.
BER is Monte-Carlo over Gray-mapped QPSK with the same statistical
equalizer, and complexity counts follow the closed-form complex-
operation budgets of the three precoding schemes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, ChannelSampler
from .config import SystemConfig
from .precoding import Precoder, PrecoderMethod, build_all_precoders

__all__ = [
    "MetricsReport",
    "BerEstimate",
    "sinr_hardening",
    "sum_se",
    "nmse",
    "complexity_count",
    "qpsk_modulate",
    "qpsk_demodulate",
    "ber_mc",
]


@dataclass
class MetricsReport:
    """Container for one evaluated scenario point.

    ``sinr[j]`` holds the linear per-user SINRs of subarray j, ``se``
    the per-subarray sum SE (bits/s/Hz) with ``se_total`` their sum.
    Optional fields carry the BER estimate, the (t, NMSE) convergence
    curve, and per-scheme complexity counts.  ``trials`` and ``seed``
    are the Monte-Carlo provenance.
    """

    sinr: list[np.ndarray] = field(default_factory=list)
    se: list[float] = field(default_factory=list)
    se_total: float = 0.0
    ber: float | None = None
    nmse_curve: list[tuple[int, float]] | None = None
    complexity: dict[str, int] | None = None
    trials: int = 0
    seed: int | None = None


def _effective_gains(
    realization: ChannelRealization, precoder: Precoder
) -> list[list[np.ndarray]]:
    """C[j][s][k, i] = (h_jk^s)^H g_si for one realization."""
    S = len(realization.H)
    return [
        [realization.H[j][s].conj().T @ precoder.G[s] for s in range(S)]
        for j in range(S)
    ]


def sinr_hardening(
    ensemble: list[tuple[ChannelRealization, Precoder]],
    p: float = 1.0,
    sigma2: float = 1.0,
) -> list[np.ndarray]:
    """Per-user SINR of the hardening bound, estimated over an ensemble.

    For user k of subarray j,

        SINR = p |E{g_jk^H h_jk^j}|^2 /
               (sum_{s,i} p E{|g_si^H h_jk^s|^2} - p |E{g_jk^H h_jk^j}|^2 + sigma2)

    with expectations replaced by ensemble means over the supplied
    (realization, precoder) pairs.  The interference sum runs over all
    subarrays, so inter-subarray leakage is included; precoder columns
    carry the power split, hence the default p = 1.
    """
    if not ensemble:
        raise ValueError("ensemble must contain at least one realization")
    S = len(ensemble[0][0].H)
    gains = [_effective_gains(real, prec) for real, prec in ensemble]
    # fixed-order pairwise reductions: results do not depend on who
    # computed which trial
    mean_c = [
        [np.mean(np.stack([g[j][s] for g in gains]), axis=0) for s in range(S)]
        for j in range(S)
    ]
    mean_c2 = [
        [np.mean(np.abs(np.stack([g[j][s] for g in gains])) ** 2, axis=0)
         for s in range(S)]
        for j in range(S)
    ]
    sinr: list[np.ndarray] = []
    for j in range(S):
        signal = p * np.abs(np.diag(mean_c[j][j])) ** 2
        total = sum(p * mean_c2[j][s].sum(axis=1) for s in range(S))
        interference = np.maximum(total - signal, 0.0)
        sinr.append(signal / (interference + sigma2))
    return sinr


def sum_se(sinr: list[np.ndarray]) -> tuple[list[float], float]:
    """Sum spectral efficiency per subarray and overall (bits/s/Hz)."""
    se: list[float] = []
    for values in sinr:
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("SINR values must be finite and nonnegative")
        se.append(float(np.log2(1.0 + arr).sum()))
    return se, float(sum(se))


def nmse(W_approx: np.ndarray, W_exact: np.ndarray) -> float:
    """Normalized squared error ||W_approx - W_exact||_F^2 / ||W_exact||_F^2."""
    if W_approx.shape != W_exact.shape:
        raise ValueError(
            f"shape mismatch: {W_approx.shape} vs {W_exact.shape}"
        )
    denom = np.linalg.norm(W_exact) ** 2
    if denom == 0.0:
        raise ValueError("reference matrix is zero; NMSE undefined")
    return float(np.linalg.norm(W_approx - W_exact) ** 2 / denom)


def complexity_count(
    scheme: PrecoderMethod, m_sub: int, k_sub: int, s: int, t: int
) -> int:
    """Complex-operation count of one precoding scheme, exact integer.

    Per subarray (M = m_sub, K = k_sub):
        direct RZF      3 K^2 M / 2 + 3 K M / 2 + (K^3 - K) / 3
        rKA             M T + M
        SwoR-rKA        M T + 2 M K
    multiplied by the subarray count.  Both divisions are exact:
    K (K + 1) is even and K^3 - K is divisible by 3.
    """
    if min(m_sub, k_sub, s, t) < 1:
        raise ValueError("m_sub, k_sub, s, t must all be positive")
    if scheme is PrecoderMethod.RZF_DIRECT:
        per_sub = 3 * m_sub * k_sub * (k_sub + 1) // 2 + (k_sub**3 - k_sub) // 3
    elif scheme is PrecoderMethod.RKA:
        per_sub = m_sub * t + m_sub
    elif scheme is PrecoderMethod.SWOR_RKA:
        per_sub = m_sub * t + 2 * m_sub * k_sub
    else:
        raise ValueError(f"no complexity model for scheme {scheme}")
    return s * per_sub


def qpsk_modulate(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped unit-power QPSK: bits (..., 2) -> complex symbols."""
    b = np.asarray(bits)
    return ((1.0 - 2.0 * b[..., 0]) + 1j * (1.0 - 2.0 * b[..., 1])) / np.sqrt(2.0)


def qpsk_demodulate(symbols: np.ndarray) -> np.ndarray:
    """Minimum-distance QPSK slicing: symbols -> bits (..., 2)."""
    y = np.asarray(symbols)
    return np.stack([(y.real < 0), (y.imag < 0)], axis=-1).astype(np.uint8)


@dataclass
class BerEstimate:
    """Monte-Carlo bit error rate with its sample counts."""

    ber: float
    bit_errors: int
    n_bits: int
    n_symbols: int

    def std_error(self) -> float:
        """Standard error of the BER estimate."""
        if self.n_bits == 0:
            return 0.0
        p = self.ber
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.n_bits)


def ber_mc(
    config: SystemConfig,
    method: PrecoderMethod,
    n_symbols: int,
    rng: np.random.Generator,
    trials: int = 50,
) -> BerEstimate:
    """Monte-Carlo downlink BER for one configuration and method.

    Draws ``trials`` channel realizations, builds precoders from the
    estimated channel, and transmits Gray-mapped QPSK through the true
    channel including all inter-subarray interference and CN(0, sigma2)
    noise.  Receivers equalize with the ensemble-mean effective gain
    (channel hardening) and slice per symbol.  The symbol budget is
    split evenly, rounding up so at least ``n_symbols`` are sent.
    """
    if n_symbols < 1:
        raise ValueError(f"n_symbols must be >= 1, got {n_symbols}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    S = config.S
    k_sub = config.k_sub
    syms_per_ue = max(1, math.ceil(n_symbols / (config.K * trials)))

    sampler = ChannelSampler(config)
    trial_streams = rng.spawn(trials)
    gain_blocks: list[list[list[np.ndarray]]] = []
    symbol_streams = []
    for stream in trial_streams:
        chan_rng, prec_rng, sym_rng = stream.spawn(3)
        realization = sampler.sample(chan_rng)
        precoder = build_all_precoders(realization, config, method, prec_rng)
        gain_blocks.append(_effective_gains(realization, precoder))
        symbol_streams.append(sym_rng)

    # hardening gains: ensemble-mean desired-link coefficients
    eq_gain = [
        np.mean(np.stack([g[j][j] for g in gain_blocks]), axis=0).diagonal()
        for j in range(S)
    ]

    bit_errors = 0
    n_bits = 0
    noise_scale = np.sqrt(config.sigma2 / 2.0)
    for gains, sym_rng in zip(gain_blocks, symbol_streams):
        tx_bits = [
            sym_rng.integers(0, 2, size=(k_sub[s], syms_per_ue, 2))
            for s in range(S)
        ]
        tx_syms = [qpsk_modulate(b) for b in tx_bits]
        for j in range(S):
            received = sum(gains[j][s] @ tx_syms[s] for s in range(S))
            noise = noise_scale * (
                sym_rng.standard_normal(received.shape)
                + 1j * sym_rng.standard_normal(received.shape)
            )
            equalized = (received + noise) / eq_gain[j][:, None]
            rx_bits = qpsk_demodulate(equalized)
            bit_errors += int(np.sum(rx_bits != tx_bits[j]))
            n_bits += tx_bits[j].size
    total_syms = trials * config.K * syms_per_ue
    return BerEstimate(
        ber=bit_errors / n_bits,
        bit_errors=bit_errors,
        n_bits=n_bits,
        n_symbols=total_syms,
    )
