"""Channel model tests: correlation, visibility regions, normalization,
sampling law, and CSI corruption."""

import numpy as np
import pytest
from scipy import stats

from xlmp.channel import (
    ChannelSampler,
    VRMask,
    _draw_channel,
    build_correlation,
    corrupt_csi,
    dump_channel_csv,
    effective_covariance,
    psd_sqrt,
    sample_channel,
    sample_vr,
)
from xlmp.config import (
    CorrelationModel,
    CorrelationSpec,
    Normalization,
    SystemConfig,
)

EXPONENTIAL = CorrelationSpec(model=CorrelationModel.EXPONENTIAL, rho=0.5)
IDENTITY = CorrelationSpec(model=CorrelationModel.IDENTITY)


class TestCorrelation:
    def test_identity_model(self):
        R = build_correlation(IDENTITY, 4)
        assert np.array_equal(R, np.eye(4))

    def test_exponential_rho_zero_degenerates_to_identity(self):
        spec = CorrelationSpec(model=CorrelationModel.EXPONENTIAL, rho=0.0)
        assert np.array_equal(build_correlation(spec, 8), np.eye(8))

    def test_exponential_entries_by_hand(self):
        # rho^|m-n| evaluated by hand for rho = 0.5, size 3
        R = build_correlation(EXPONENTIAL, 3)
        expected = np.array([[1.0, 0.5, 0.25],
                             [0.5, 1.0, 0.5],
                             [0.25, 0.5, 1.0]])
        np.testing.assert_allclose(R, expected, rtol=0, atol=0)

    def test_hermitian_psd_unit_diagonal(self):
        R = build_correlation(EXPONENTIAL, 16)
        np.testing.assert_allclose(R, R.conj().T)
        np.testing.assert_allclose(np.diag(R).real, 1.0)
        assert np.linalg.eigvalsh(R).min() > 0

    def test_rho_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="rho"):
            CorrelationSpec(model=CorrelationModel.EXPONENTIAL, rho=1.0)
        with pytest.raises(ValueError, match="rho"):
            CorrelationSpec(model=CorrelationModel.EXPONENTIAL, rho=-0.1)

    def test_bad_size_rejected(self):
        with pytest.raises(ValueError):
            build_correlation(IDENTITY, 0)


class TestVRMask:
    def test_full_visibility_limit(self):
        vr = sample_vr(32, np.random.default_rng(0), (32, 32))
        assert vr.start == 0 and vr.length == 32

    def test_deterministic_given_seed(self):
        a = sample_vr(64, np.random.default_rng(99), (16, 48))
        b = sample_vr(64, np.random.default_rng(99), (16, 48))
        assert (a.start, a.length) == (b.start, b.length)

    def test_start_uniform_chi_square(self):
        # fixed length 3 in an 8-antenna subarray: start uniform on {0..5}
        rng = np.random.default_rng(1234)
        starts = [sample_vr(8, rng, (3, 3)).start for _ in range(10_000)]
        counts = np.bincount(starts, minlength=6)
        assert counts.size == 6
        _, p = stats.chisquare(counts)
        assert p > 0.01, f"start distribution not uniform (p={p:.4f})"

    def test_invalid_range_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            sample_vr(8, rng, (0, 4))
        with pytest.raises(ValueError):
            sample_vr(8, rng, (5, 3))
        with pytest.raises(ValueError):
            sample_vr(8, rng, (4, 9))

    def test_mask_bounds_validated(self):
        with pytest.raises(ValueError):
            VRMask(start=6, length=3, m_sub=8)
        with pytest.raises(ValueError):
            VRMask(start=0, length=0, m_sub=8)


class TestEffectiveCovariance:
    def test_visible_trace_identity_r(self):
        vr = VRMask(start=2, length=3, m_sub=8)
        cov = effective_covariance(np.eye(8, dtype=complex), vr,
                                   Normalization.VISIBLE_TRACE)
        expected = np.zeros((8, 8))
        expected[2:5, 2:5] = np.eye(3)
        np.testing.assert_allclose(cov, expected)
        assert abs(np.trace(cov).real - 3.0) < 1e-12

    def test_stationary_trace_identity_r(self):
        # nonzero diagonal entries all equal m_sub / length = 8 / 4 = 2
        vr = VRMask(start=0, length=4, m_sub=8)
        cov = effective_covariance(np.eye(8, dtype=complex), vr,
                                   Normalization.STATIONARY_TRACE)
        np.testing.assert_allclose(np.diag(cov).real[:4], 2.0)
        np.testing.assert_allclose(np.diag(cov).real[4:], 0.0)
        assert abs(np.trace(cov).real - 8.0) < 1e-12

    def test_full_vr_stationary_reduces_to_r(self):
        R = build_correlation(EXPONENTIAL, 8)
        vr = VRMask(start=0, length=8, m_sub=8)
        cov = effective_covariance(R, vr, Normalization.STATIONARY_TRACE)
        np.testing.assert_allclose(cov, R)
        assert abs(np.trace(cov).real - 8.0) < 1e-9 * 8.0

    @pytest.mark.parametrize("norm", list(Normalization))
    def test_trace_normalization_all_placements(self, norm):
        m_sub = 16
        R = build_correlation(EXPONENTIAL, m_sub)
        for length in range(1, m_sub + 1):
            for start in range(0, m_sub - length + 1):
                vr = VRMask(start=start, length=length, m_sub=m_sub)
                cov = effective_covariance(R, vr, norm)
                target = m_sub if norm is Normalization.STATIONARY_TRACE else length
                assert abs(np.trace(cov).real - target) <= 1e-9 * target
                # support confined to the VR block
                outside = np.ones(m_sub, dtype=bool)
                outside[start:start + length] = False
                assert np.all(cov[outside, :] == 0)
                assert np.all(cov[:, outside] == 0)

    def test_psd_sqrt_is_a_root(self):
        R = build_correlation(EXPONENTIAL, 12)
        vr = VRMask(start=3, length=6, m_sub=12)
        cov = effective_covariance(R, vr, Normalization.STATIONARY_TRACE)
        root = psd_sqrt(cov)
        np.testing.assert_allclose(root @ root.conj().T, cov, atol=1e-12)

    def test_zero_covariance_draws_zero_vector(self):
        root = psd_sqrt(np.zeros((6, 6), dtype=complex))
        h = _draw_channel(root, np.random.default_rng(0))
        assert np.all(h == 0)


class TestChannelSampling:
    def test_stationary_full_vr_energy(self):
        # E||h||^2 = m_sub for the stationary-trace full-visibility limit
        m_sub = 64
        root = psd_sqrt(effective_covariance(
            np.eye(m_sub, dtype=complex), VRMask(0, m_sub, m_sub),
            Normalization.STATIONARY_TRACE))
        rng = np.random.default_rng(7)
        energy = np.mean([np.linalg.norm(_draw_channel(root, rng)) ** 2
                          for _ in range(10_000)])
        assert abs(energy - m_sub) / m_sub < 0.03

    def test_visible_trace_energy_matches_vr_size(self):
        m_sub, length = 32, 12
        R = build_correlation(EXPONENTIAL, m_sub)
        root = psd_sqrt(effective_covariance(
            R, VRMask(start=5, length=length, m_sub=m_sub),
            Normalization.VISIBLE_TRACE))
        rng = np.random.default_rng(11)
        energy = np.mean([np.linalg.norm(_draw_channel(root, rng)) ** 2
                          for _ in range(10_000)])
        assert abs(energy - length) / length < 0.03

    def test_sample_covariance_converges_to_effective_covariance(self):
        m_sub, length, n = 16, 8, 100_000
        cov = effective_covariance(np.eye(m_sub, dtype=complex),
                                   VRMask(start=4, length=length, m_sub=m_sub),
                                   Normalization.STATIONARY_TRACE)
        root = psd_sqrt(cov)
        rng = np.random.default_rng(3)
        draws = np.stack([_draw_channel(root, rng) for _ in range(n)], axis=1)
        sample_cov = draws @ draws.conj().T / n
        nz = np.abs(cov) > 0
        rel = np.abs(sample_cov[nz] - cov[nz]) / np.abs(cov[nz])
        assert rel.max() < 0.05
        assert np.abs(sample_cov[~nz]).max() < 0.05

    def test_realization_shapes_and_assembly(self):
        cfg = SystemConfig(M=32, S=2, K=4, seed=5)
        real = sample_channel(cfg, np.random.default_rng(5))
        assert len(real.H) == 2 and len(real.H[0]) == 2
        assert real.H[0][1].shape == (16, 2)
        assert real.H_hat[1][0].shape == (16, 2)
        assert real.vr[0][0][1].m_sub == 16
        assert real.cov[1][1][0].shape == (16, 16)

    def test_determinism_bit_identical(self):
        cfg = SystemConfig(M=64, S=2, K=4, seed=21)
        a = sample_channel(cfg, np.random.default_rng(21))
        b = sample_channel(cfg, np.random.default_rng(21))
        for j in range(cfg.S):
            for s in range(cfg.S):
                assert np.array_equal(a.H[j][s], b.H[j][s])
                assert np.array_equal(a.H_hat[j][s], b.H_hat[j][s])
        assert a.vr[1][0][1] == b.vr[1][0][1]

    def test_sampler_shares_covariance_references(self):
        cfg = SystemConfig(M=32, S=2, K=4, seed=1, vr_range=(16, 16))
        sampler = ChannelSampler(cfg)
        real = sampler.sample(np.random.default_rng(1))
        assert not real.cov[0][0][0].flags.writeable


class TestCsiCorruption:
    def _cov(self, m_sub=8):
        R = build_correlation(EXPONENTIAL, m_sub)
        return effective_covariance(R, VRMask(1, 6, m_sub),
                                    Normalization.STATIONARY_TRACE)

    def test_tau_zero_returns_exact_channel(self):
        cov = self._cov()
        rng = np.random.default_rng(0)
        h = _draw_channel(psd_sqrt(cov), rng)
        h_hat = corrupt_csi(h, cov, 0.0, rng)
        assert np.array_equal(h_hat, h)

    def test_tau_one_decorrelates(self):
        cov = self._cov()
        root = psd_sqrt(cov)
        rng = np.random.default_rng(8)
        num, den_a, den_b = 0.0, 0.0, 0.0
        for _ in range(10_000):
            h = _draw_channel(root, rng)
            h_hat = corrupt_csi(h, cov, 1.0, rng)
            num += np.vdot(h, h_hat)
            den_a += np.vdot(h, h).real
            den_b += np.vdot(h_hat, h_hat).real
        corr = abs(num) / np.sqrt(den_a * den_b)
        assert corr < 0.05

    def test_moment_preserving_mix(self):
        # (1 - tau^2) + tau^2 = 1: the estimate keeps the channel's energy
        cov = self._cov()
        root = psd_sqrt(cov)
        rng = np.random.default_rng(15)
        e_h, e_hat = 0.0, 0.0
        for _ in range(10_000):
            h = _draw_channel(root, rng)
            h_hat = corrupt_csi(h, cov, 0.3, rng)
            e_h += np.vdot(h, h).real
            e_hat += np.vdot(h_hat, h_hat).real
        assert abs(e_hat - e_h) / e_h < 0.03

    def test_tau_out_of_range_rejected(self):
        cov = self._cov()
        h = np.ones(8, dtype=complex)
        with pytest.raises(ValueError, match="tau"):
            corrupt_csi(h, cov, 1.5, np.random.default_rng(0))

    def test_paired_draws_across_tau(self):
        # same seed, different tau: the true channels stay identical
        cfg0 = SystemConfig(M=32, S=2, K=4, tau=0.0, seed=2)
        cfg3 = SystemConfig(M=32, S=2, K=4, tau=0.3, seed=2)
        a = sample_channel(cfg0, np.random.default_rng(2))
        b = sample_channel(cfg3, np.random.default_rng(2))
        assert np.array_equal(a.H[0][0], b.H[0][0])
        assert not np.array_equal(a.H_hat[0][0], b.H_hat[0][0])
        assert np.array_equal(a.H_hat[1][1], a.H[1][1])


def test_debug_csv_dump(tmp_path):
    cfg = SystemConfig(M=16, S=2, K=4, seed=3)
    real = sample_channel(cfg, np.random.default_rng(3))
    path = dump_channel_csv(real, tmp_path / "realization.csv")
    lines = path.read_text().splitlines()
    # header + one row per (group, subarray, antenna)
    assert lines[0].startswith("user_group,subarray,antenna,user0_re,user0_im")
    assert len(lines) == 1 + 2 * 2 * 8
