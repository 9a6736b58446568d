import numpy as np
import pytest

from models.features import FeatureConfig
from models.radar import WindowKind
from utils.errors import DataError
from utils.features import (
    BufferEntry,
    ModwtDecomposition,
    TrackBuffer,
    build_feature_vector,
    cvd,
    cvd_features,
    cvd_feature_names,
    dominant_cadence,
    feature_names,
    fill_missing,
    level_stats,
    modwt,
    spatial_features,
    spectrogram,
    support_length,
)

FS = 900.0


def tone(freq, n=900, fs=FS):
    return np.exp(2j * np.pi * freq * np.arange(n) / fs)


@pytest.mark.parametrize("wavelet", ["d4", "la8", "haar"])
def test_modwt_preserves_energy_and_length(rng, wavelet):
    x = rng.normal(size=256) + 1j * rng.normal(size=256)
    dec = modwt(x, levels=4, wavelet=wavelet)
    assert all(len(s) == len(x) for s in dec.series)
    assert dec.energies().sum() == pytest.approx(np.sum(np.abs(x) ** 2), rel=1e-9)


def test_modwt_energy_identity_on_many_series(rng):
    for _ in range(200):
        n = int(rng.integers(46, 300))
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        assert modwt(x).energies().sum() == pytest.approx(np.sum(np.abs(x) ** 2), rel=1e-8)


def test_modwt_real_series_energy(rng):
    x = rng.normal(size=100)
    dec = modwt(x, levels=3)
    assert dec.levels == 3
    assert dec.energies().sum() == pytest.approx(np.sum(x ** 2), rel=1e-9)


@pytest.mark.parametrize("band", range(5))
def test_modwt_band_selectivity(band):
    lo, hi = ModwtDecomposition.bands(FS)[band]
    # 16 s at 900 Hz holds a whole number of cycles of every band centre
    dec = modwt(tone((lo + hi) / 2, n=14400), levels=4)
    energies = dec.energies()
    assert int(np.argmax(energies)) == band
    assert np.sort(energies)[-1] > np.sort(energies)[-2]


def test_modwt_rejects_short_series():
    assert support_length(4, 4) == 46
    with pytest.raises(DataError):
        modwt(np.ones(45), levels=4, wavelet="d4")
    with pytest.raises(DataError):
        modwt(np.ones((8, 8)))


def test_level_stats_of_constant_magnitudes():
    s = level_stats(np.exp(1j * np.linspace(0, 3, 16)))
    var, std, mean, median, rms, skew, kurt, entropy = s
    assert var == pytest.approx(0.0, abs=1e-12)
    assert (mean, median, rms) == pytest.approx((1.0, 1.0, 1.0))
    assert skew == 0.0 and kurt == 0.0
    assert entropy == pytest.approx(np.log(16))


def test_level_stats_of_zero_series_is_finite():
    s = level_stats(np.zeros(32))
    assert np.all(np.isfinite(s))
    assert s[-1] == 0.0
    with pytest.raises(DataError):
        level_stats([])


def _patch():
    patch = np.full((7, 17), -100.0)
    patch[2:5, 5:9] = 0.0
    patch[3, 9] = -3.0
    patch[0, 0] = -20.0
    return patch


def test_spatial_features_of_rectangular_footprint():
    feats, empty = spatial_features(_patch(), az_offset=10)
    assert not empty
    named = dict(zip(feature_names()[:10], feats))
    assert named["az_width"] == 5
    assert named["range_length"] == 3
    assert named["az_bin_mean"] == pytest.approx(17.0)
    assert named["az_bin_median"] == pytest.approx(17.0)
    assert named["az_bin_var"] == pytest.approx(2.0)
    assert named["az_bins"] == 5
    assert named["pixels"] == 13
    half = 10 ** -0.3
    assert named["az_profile_mean"] == pytest.approx((4 + half) / 5)
    assert named["az_profile_median"] == pytest.approx(1.0)


def test_spatial_features_threshold_controls_footprint():
    wide, _ = spatial_features(_patch(), threshold_db=-30.0)
    narrow, _ = spatial_features(_patch(), threshold_db=-1.0)
    assert wide[9] == 14
    assert narrow[9] == 12


def test_empty_footprint_is_flagged():
    feats, empty = spatial_features(np.full((5, 5), -120.0))
    assert empty
    assert not feats.any()


def test_spectrogram_shape_and_centering():
    spec = spectrogram(tone(0.0, n=200), n_fft=64, hop=16)
    assert spec.shape == (9, 64)
    assert np.all(np.argmax(spec, axis=1) == 32)
    with pytest.raises(DataError):
        spectrogram(np.ones(10), n_fft=64)


def test_cvd_matches_direct_sum(rng):
    spec = np.abs(rng.normal(size=(12, 8)))
    ours = cvd(spec, WindowKind.rect)
    n = spec.shape[0]
    direct = np.zeros_like(ours)
    for eps in range(n):
        for k in range(spec.shape[1]):
            direct[eps, k] = sum(spec[l, k] * np.exp(-2j * np.pi * eps * l / n) for l in range(n))
    assert np.allclose(ours, direct)


def test_cvd_rejects_single_frame():
    with pytest.raises(DataError):
        cvd(np.ones((1, 8)))


def test_dominant_cadence_finds_gait_rate():
    n = 32
    spec = 1.0 + np.cos(2 * np.pi * 3 * np.arange(n) / n)[:, None] * np.ones((1, 16))
    assert dominant_cadence(cvd(spec)) == 3


def _entry(frame, rng, value=0.0):
    patch = np.full((7, 17), -60.0)
    patch[2:5, 6:10] = value
    return BufferEntry(frame=frame, series=rng.normal(size=8) + 1j * rng.normal(size=8),
                       patch_db=patch, az_offset=20, range_m=3.0)


def test_buffer_keeps_the_latest_window(rng):
    buf = TrackBuffer(7, capacity=20)
    for f in range(25):
        buf.push(f, _entry(f, rng))
    assert len(buf) == 20 and buf.is_full
    assert buf.frame_span == (5, 24)


def test_fill_missing_uses_mean_of_present_frames(rng):
    buf = TrackBuffer(1, capacity=4)
    a, b = _entry(0, rng, 0.0), _entry(2, rng, -2.0)
    for f, e in [(0, a), (1, None), (2, b), (3, None)]:
        buf.push(f, e)
    filled, mask = fill_missing(buf)
    assert mask.tolist() == [True, False, True, False]
    assert filled.mask.all()
    np.testing.assert_allclose(filled.entries[1].series, (a.series + b.series) / 2)
    np.testing.assert_allclose(filled.entries[3].patch_db, (a.patch_db + b.patch_db) / 2)
    assert filled.entries[3].frame == 3

    empty = TrackBuffer(2, capacity=3)
    empty.push(0, None)
    with pytest.raises(DataError):
        fill_missing(empty)


def test_feature_vector_switches_mode_when_window_fills(rng):
    cfg = FeatureConfig()
    buf = TrackBuffer(3, capacity=cfg.window_frames)
    modes = []
    for f in range(cfg.window_frames):
        buf.push(f, _entry(f, rng) if f != 4 else None)
        fv = build_feature_vector(buf, True, cfg, with_cvd=True)
        modes.append(fv.mode)
    assert modes[:-1] == ["spatial_only"] * (cfg.window_frames - 1)
    assert modes[-1] == "full"
    assert fv.frequency.shape == (40,)
    assert fv.cvd.shape == (8,)
    np.testing.assert_allclose(cvd_features(buf, cfg), fv.cvd)
    assert fv.missing_frames == 1
    row = fv.to_row(label=2)
    assert set(feature_names()) <= set(row)
    assert set(cvd_feature_names()) <= set(row)
    assert row["label"] == 2


def test_spatial_only_vector_has_nan_frequency_slots(rng):
    buf = TrackBuffer(3, capacity=20)
    buf.push(0, _entry(0, rng))
    fv = build_feature_vector(buf)
    assert fv.mode == "spatial_only" and not fv.frequency_mask
    values = fv.values()
    assert values.shape == (50,)
    assert np.isfinite(values[:10]).all() and np.isnan(values[10:]).all()


def test_feature_vector_requires_confirmed_track(rng):
    buf = TrackBuffer(3)
    buf.push(0, _entry(0, rng))
    with pytest.raises(DataError):
        build_feature_vector(buf, confirmed=False)
