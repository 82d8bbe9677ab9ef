# -*- coding: utf-8 -*-
"""Unit tests for excitation design, snapshot collection and data quality."""
import numpy as np
import pytest  # pylint: disable=import-error

from ..adaptive_rom_controller.errors import DegenerateInputError, DimensionError, DomainError
from ..adaptive_rom_controller.excitation import (
    ExcitationSpec,
    QualityReport,
    SnapshotSet,
    assess_quality,
    collect_snapshots,
    design_excitation,
    generate_signal,
    holdout_spec,
    lfsr_bits,
)
from ..adaptive_rom_controller.excitation import _coverage  # pylint: disable=protected-access

pytestmark = pytest.mark.unit


class TestExcitationSpec:
    """Test cases for ExcitationSpec."""

    def test_prbs_needs_bit_duration(self):
        """PRBS without a bit duration is rejected."""
        with pytest.raises(DomainError) as exc_info:
            ExcitationSpec("prbs", f_s=10.0, duration=5.0, amplitude=1.0, channels=1)
        assert "bit_duration" in str(exc_info.value)

    def test_unknown_kind(self):
        """Only the four signal families exist."""
        with pytest.raises(DomainError):
            ExcitationSpec("noise", f_s=10.0, duration=5.0, amplitude=1.0, channels=1)

    def test_steps_and_period(self, multisine_spec):
        """steps = duration * f_s, dt = 1/f_s."""
        assert multisine_spec.steps == 100
        assert multisine_spec.dt == pytest.approx(0.1)

    def test_limits_reject_slow_sampling(self, descriptor_factory):
        """Sampling below 20 f_max violates the descriptor limits."""
        descriptor = descriptor_factory()
        spec = ExcitationSpec(
            "multisine", f_s=0.1 * descriptor.f_max, duration=100.0, amplitude=0.1, channels=1
        )
        with pytest.raises(DomainError):
            spec.check_limits(descriptor)

    def test_limits_reject_large_online_amplitude(self, descriptor_factory):
        """Online experiments stay within half the input bound."""
        descriptor = descriptor_factory()
        spec = ExcitationSpec(
            "multisine",
            f_s=descriptor.sampling_frequency(),
            duration=100.0,
            amplitude=0.6,
            channels=1,
            online=True,
        )
        with pytest.raises(DomainError) as exc_info:
            spec.check_limits(descriptor)
        assert "exceeds" in str(exc_info.value)


class TestDesignExcitation:
    """Test cases for design_excitation and holdout_spec."""

    @pytest.mark.parametrize(
        "method, kind",
        [("pod_galerkin", "prbs"), ("dmd", "multisine"), ("balanced_truncation", "step_impulse")],
    )
    def test_signal_family_per_method(self, descriptor_factory, method, kind):
        """Each reduction method gets its matching excitation."""
        assert design_excitation(method, descriptor_factory()).kind == kind

    def test_offline_duration_and_amplitude(self, descriptor_factory):
        """Offline: max(300 s, 5 tau_slow) at 0.8 u_max."""
        descriptor = descriptor_factory(tau_slow=100.0, tau_fast=10.0, u_max=2.0, u_min=-2.0)
        spec = design_excitation("pod_galerkin", descriptor)
        assert spec.duration == pytest.approx(500.0)
        assert spec.amplitude == pytest.approx(1.6)
        spec.check_limits(descriptor)

    def test_online_duration_and_amplitude(self, descriptor_factory):
        """Online: ten fast time constants at 0.5 u_max."""
        descriptor = descriptor_factory(tau_fast=3.0)
        spec = design_excitation("pod_galerkin", descriptor, online=True)
        assert spec.duration == pytest.approx(30.0)
        assert spec.amplitude == pytest.approx(0.5)
        assert spec.online

    def test_unknown_method(self, descriptor_factory):
        """Unmapped methods are rejected."""
        with pytest.raises(DomainError):
            design_excitation("krylov", descriptor_factory())

    def test_holdout_is_prbs_with_next_seed(self, multisine_spec):
        """Validation data uses a different seed."""
        holdout = holdout_spec(multisine_spec)
        assert holdout.kind == "prbs"
        assert holdout.seed == multisine_spec.seed + 1
        assert holdout.bit_duration > 0


class TestSignals:
    """Test cases for lfsr_bits and generate_signal."""

    def test_lfsr_is_maximal_length(self):
        """Order 7 repeats after 127 bits with 64 ones per period."""
        bits = lfsr_bits(7, 254)
        np.testing.assert_array_equal(bits[:127], bits[127:])
        assert int(bits[:127].sum()) == 64

    def test_lfsr_rejects_zero_state(self):
        """The all-zero register is a fixed point."""
        with pytest.raises(DomainError):
            lfsr_bits(7, 10, state=0)

    def test_prbs_is_two_level_and_deterministic(self):
        """PRBS takes +-amplitude and repeats for the same seed."""
        spec = ExcitationSpec(
            "prbs", f_s=10.0, duration=20.0, amplitude=0.5, channels=2, seed=3, bit_duration=0.5
        )
        first = generate_signal(spec)
        np.testing.assert_array_equal(first, generate_signal(spec))
        assert first.shape == (200, 2)
        assert set(np.unique(np.abs(first))) == {0.5}

    def test_multisine_peak_equals_amplitude(self, multisine_spec):
        """The crest-normalized multisine peaks at the amplitude."""
        signal = generate_signal(multisine_spec)
        assert np.max(np.abs(signal)) == pytest.approx(1.0)

    def test_chirp_is_bounded(self):
        """A chirp never exceeds its amplitude."""
        spec = ExcitationSpec("chirp", f_s=10.0, duration=10.0, amplitude=0.3, channels=1)
        assert np.max(np.abs(generate_signal(spec))) <= 0.3 + 1e-12

    def test_step_impulse_battery(self):
        """Each channel gets a held step and an impulse in its own segment."""
        spec = ExcitationSpec("step_impulse", f_s=1.0, duration=30.0, amplitude=1.0, channels=2)
        signal = generate_signal(spec)
        assert np.count_nonzero(signal[:15, 0]) > 1
        assert not np.any(signal[:15, 1])
        assert np.count_nonzero(signal[15:, 1]) > 1

    def test_zero_amplitude_gives_zeros(self):
        """A zero-amplitude experiment is silent."""
        spec = ExcitationSpec("multisine", f_s=10.0, duration=1.0, amplitude=0.0, channels=1)
        assert not np.any(generate_signal(spec))

    def test_inconsistent_step_count(self, multisine_spec):
        """steps must match duration * f_s."""
        with pytest.raises(DimensionError):
            generate_signal(multisine_spec, steps=50)


class TestSnapshots:
    """Test cases for collect_snapshots and assess_quality."""

    def test_shapes(self, heat_snapshots, heat_system):
        """Columns are time samples; the first state is the initial state."""
        snap = heat_snapshots
        assert snap.X.shape == (heat_system.n, snap.M)
        assert snap.U.shape == (snap.M, heat_system.m)
        assert snap.Y.shape == (heat_system.p, snap.M)
        assert snap.M == snap.excitation.steps
        np.testing.assert_allclose(snap.X[:, 0], np.zeros(heat_system.n))
        assert snap.F is None

    def test_nonlinear_term_snapshots(self, cubic_chain):
        """Systems with a nonlinear term record it per column."""
        spec = ExcitationSpec(
            "prbs", f_s=10.0, duration=5.0, amplitude=0.5, channels=1, bit_duration=0.5
        )
        snap = collect_snapshots(cubic_chain, spec)
        assert snap.F is not None
        assert snap.F.shape == snap.X.shape

    def test_mismatched_columns(self, multisine_spec):
        """U, X and Y must agree on the sample count."""
        with pytest.raises(DimensionError):
            SnapshotSet(
                U=np.zeros((5, 1)),
                X=np.zeros((2, 4)),
                Y=np.zeros((1, 4)),
                dt=0.1,
                excitation=multisine_spec,
            )

    def test_noiseless_quality(self, heat_snapshots, heat_descriptor):
        """Clean data reaches the SNR cap and the Nyquist margin of 10."""
        report = assess_quality(heat_snapshots, f_max=heat_descriptor.f_max)
        assert report.snr_db == pytest.approx(200.0)
        assert report.nyquist_margin == pytest.approx(10.0)
        assert report.max_cross_correlation == 0.0
        assert report.checks["snr"]

    def test_noise_estimate_sets_snr(self, heat_snapshots):
        """A known noise level gives SNR = 10 log10(P_signal / P_noise)."""
        snap = heat_snapshots
        power = float(np.mean(np.sum(snap.Y**2, axis=0)))
        sigma = float(np.sqrt(power)) * 1e-2
        report = assess_quality(snap, noise_estimate=sigma)
        assert report.snr_db == pytest.approx(40.0)

    def test_noisy_collection_records_quiet_window(self, heat_system, heat_descriptor):
        """With a target SNR, a quiet window is recorded for the noise estimate."""
        spec = design_excitation("pod_galerkin", heat_descriptor)
        noisy = ExcitationSpec.from_dict(
            {**spec.to_dict(), "noise_snr_db": 30.0, "quiet_duration": 50.0}
        )
        snap = collect_snapshots(heat_system, noisy)
        assert snap.quiet_outputs is not None
        assert snap.clean_Y is not None
        report = assess_quality(snap)
        assert report.snr_db < 200.0

    def test_silent_outputs_rejected(self, heat_system):
        """An experiment with zero outputs has no SNR."""
        spec = ExcitationSpec("multisine", f_s=1.0, duration=20.0, amplitude=0.0, channels=1)
        snap = collect_snapshots(heat_system, spec)
        with pytest.raises(DegenerateInputError):
            assess_quality(snap)

    def test_report_pass_decision(self):
        """Conditioning checks are informational; the other four decide."""
        report = QualityReport(
            snr_db=50.0,
            corr_condition=1e9,
            coverage=0.95,
            max_cross_correlation=0.1,
            nyquist_margin=10.0,
            rank_99=3,
        )
        assert report.passed
        assert not report.checks["conditioning"]
        low_coverage = QualityReport(
            snr_db=50.0,
            corr_condition=10.0,
            coverage=0.5,
            max_cross_correlation=0.1,
            nyquist_margin=10.0,
            rank_99=3,
        )
        assert not low_coverage.passed

    def test_ungated_coverage_does_not_decide(self):
        """Low coverage of a deterministic battery is reported but not gated."""
        report = QualityReport(
            snr_db=50.0,
            corr_condition=10.0,
            coverage=0.5,
            max_cross_correlation=0.1,
            nyquist_margin=10.0,
            rank_99=3,
            coverage_gated=False,
        )
        assert not report.checks["coverage"]
        assert report.passed

    def test_step_impulse_battery_is_not_gated(self, heat_system):
        """The step/impulse battery records coverage without gating on it."""
        spec = ExcitationSpec("step_impulse", f_s=10.0, duration=30.0, amplitude=1.0, channels=1)
        report = assess_quality(collect_snapshots(heat_system, spec))
        assert not report.coverage_gated
        assert report.to_dict()["coverage_gated"] is False


class TestCoverage:
    """Test cases for the joint principal-component occupancy."""

    def test_repeated_column_is_minimal(self):
        """A single repeated snapshot occupies one cell."""
        X = np.tile(np.array([[1.0], [2.0], [3.0]]), (1, 400))
        expected = 400 * (1.0 - (1.0 - 1.0 / 400) ** 400)
        assert _coverage(X) == pytest.approx(1.0 / expected)
        assert _coverage(X) < 0.01

    def test_ring_is_rejected(self):
        """Scores on a closed curve fill every stratum but few cells."""
        t = np.linspace(0.0, 2.0 * np.pi, 400, endpoint=False)
        X = np.vstack([np.cos(t), np.sin(t), np.zeros_like(t)])
        assert _coverage(X) < 0.5

    def test_spread_cloud_passes(self):
        """Independent scatter reaches the expected occupancy."""
        X = np.random.default_rng(0).standard_normal((3, 400))
        assert _coverage(X) > 0.9

    def test_line_is_rejected(self):
        """Rank-one data covers only the diagonal of the grid."""
        t = np.random.default_rng(1).standard_normal(400)
        X = np.vstack([t, 2.0 * t, -t])
        assert _coverage(X) < 0.1
