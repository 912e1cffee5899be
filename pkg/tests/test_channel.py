import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rfmlsim.channel import (
    ChannelSpec,
    apply_channel,
    complex_awgn,
    from_tensor,
    noise_variance,
    rotate,
    slice_examples,
    slice_windows,
    to_tensor,
    window_starts,
)
from rfmlsim.errors import InvalidInputError
from rfmlsim.modem import PulseShape, get_scheme, modulate, random_bits
from rfmlsim.rng import substream
from rfmlsim.signal import IqSignal, avg_energy_per_symbol, energy_per_symbol


@pytest.fixture
def qpsk_signal(rng):
    scheme = get_scheme("QPSK")
    return modulate(random_bits(rng, 2000, scheme), scheme, PulseShape())


class TestChannelSpec:
    @pytest.mark.parametrize("kwargs", [{"freq_offset_norm": 0.5}, {"es_n0_db": math.nan},
                                        {"es_n0_db": -math.inf}, {"seed": -1}, {"seed": 2**64}])
    def test_rejects(self, kwargs):
        with pytest.raises(InvalidInputError):
            ChannelSpec(**kwargs)


class TestNoise:
    def test_variance_formula(self):
        assert noise_variance(1.0, 10.0) == pytest.approx(0.1)
        assert noise_variance(2.0, 0.0) == pytest.approx(2.0)
        assert noise_variance(1.0, math.inf) == 0.0

    def test_awgn_split_between_rails(self):
        z = complex_awgn(np.random.default_rng(0), 200_000, 0.5)
        assert np.var(z.real) == pytest.approx(0.25, rel=0.02)
        assert np.var(z.imag) == pytest.approx(0.25, rel=0.02)
        assert abs(np.mean(z.real * z.imag)) < 0.005

    def test_noiseless_channel_is_identity(self, qpsk_signal):
        out = apply_channel(qpsk_signal, ChannelSpec())
        assert np.array_equal(out.samples, qpsk_signal.samples)

    @pytest.mark.parametrize("es_n0_db", [0.0, 10.0, 20.0])
    @pytest.mark.parametrize("scale", [1.0, 0.3, 5.0])
    def test_calibration_within_a_tenth_of_a_db(self, es_n0_db, scale, rng):
        sig = IqSignal(scale * (rng.normal(size=100_000) + 1j * rng.normal(size=100_000)), 8)
        noise = apply_channel(sig, ChannelSpec(es_n0_db, seed=3)).samples - sig.samples
        realized = 10 * math.log10(avg_energy_per_symbol(sig) / np.mean(np.abs(noise) ** 2))
        assert realized == pytest.approx(es_n0_db, abs=0.1)

    def test_explicit_reference_energy(self, qpsk_signal):
        out = apply_channel(qpsk_signal, ChannelSpec(10.0, seed=1), es_reference=4.0)
        noise = out.samples - qpsk_signal.samples
        assert np.mean(np.abs(noise) ** 2) == pytest.approx(0.4, rel=0.05)

    def test_seed_reproducible(self, qpsk_signal):
        a = apply_channel(qpsk_signal, ChannelSpec(5.0, seed=9))
        b = apply_channel(qpsk_signal, ChannelSpec(5.0, seed=9))
        c = apply_channel(qpsk_signal, ChannelSpec(5.0, seed=10))
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    def test_explicit_generator_wins(self, qpsk_signal):
        a = apply_channel(qpsk_signal, ChannelSpec(5.0, seed=9), rng=substream(4))
        b = apply_channel(qpsk_signal, ChannelSpec(5.0, seed=9), rng=substream(4))
        assert np.array_equal(a.samples, b.samples)


class TestRotation:
    def test_phase_ramp(self):
        out = rotate(np.ones(4, dtype=complex), 0.25)
        assert np.allclose(out, [1, -1j, -1, 1j])

    @given(st.floats(-0.49, 0.49))
    def test_preserves_magnitude(self, f):
        x = np.exp(1j * np.arange(16))
        assert np.allclose(np.abs(rotate(x, f)), 1.0)

    @given(st.floats(-0.49, 0.49))
    def test_inverse(self, f):
        x = np.arange(8) + 1j
        assert np.allclose(rotate(rotate(x, f), -f), x)

    def test_zero_offset_is_identity(self, qpsk_signal):
        out = apply_channel(qpsk_signal, ChannelSpec(freq_offset_norm=0.0))
        assert np.array_equal(out.samples, qpsk_signal.samples)


class TestWindows:
    def test_starts(self):
        assert list(window_starts(300, 128, 0)) == [0, 128]
        assert list(window_starts(300, 128, 10)) == [10, 138]

    @pytest.mark.parametrize("length, offset", [(100, 0), (130, 5), (300, 128), (300, -1)])
    def test_invalid(self, length, offset):
        with pytest.raises(InvalidInputError):
            window_starts(length, 128, offset)

    def test_slices_are_consecutive(self):
        x = np.arange(300) + 0j
        w = slice_windows(x, 128, 3)
        assert w.shape == (2, 128)
        assert np.array_equal(w.ravel(), x[3:259])

    def test_tensor_layout(self, qpsk_signal):
        t = slice_examples(qpsk_signal, 128)
        assert t.shape == (len(qpsk_signal) // 128, 1, 2, 128)
        assert np.array_equal(t[1, 0, 0], qpsk_signal.samples[128:256].real)
        assert np.array_equal(t[1, 0, 1], qpsk_signal.samples[128:256].imag)

    def test_tensor_round_trip(self, rng):
        z = rng.normal(size=16) + 1j * rng.normal(size=16)
        assert np.array_equal(from_tensor(to_tensor(z)), z)
        assert energy_per_symbol(to_tensor(z), 8) == pytest.approx(energy_per_symbol(z, 8))
