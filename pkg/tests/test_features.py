import math

import numpy as np
import pytest

from physiodrift import synth
from physiodrift.features import (
    ExtractionSettings,
    SegmentRejectedError,
    acc_features,
    eda_features,
    extract_feature_vector,
    extract_table,
    hrv_freq_features,
    hrv_time_features,
    poincare_axes,
    temp_feature,
)
from physiodrift.preprocess import beats_to_ibi
from physiodrift.signals import (
    ArousalLabel,
    EmotionCategory,
    LabeledSegment,
    Period,
)
from physiodrift.tables import FEATURE_NAMES

from oracles import (
    cv_oracle,
    hr_oracle,
    pnn50_oracle,
    poincare_oracle,
    rmssd_oracle,
    sd_oracle,
)


def _ibi(intervals_ms):
    times = np.concatenate([[0.0], np.cumsum(intervals_ms) / 1000.0])
    return beats_to_ibi(times)


# --- time-domain -----------------------------------------------------------------

def test_time_features_hand_computed():
    f = hrv_time_features(_ibi([800.0, 810.0, 790.0]))
    assert f["SD"] == pytest.approx(10.0, abs=1e-12)
    assert f["CV"] == pytest.approx(0.0125, abs=1e-15)
    assert f["RMSSD"] == pytest.approx(math.sqrt(250.0), rel=1e-12)
    assert f["pNN50"] == 0.0
    assert f["HR"] == pytest.approx(75.0, rel=1e-12)


def test_time_features_constant_series():
    f = hrv_time_features(_ibi([1000.0] * 10))
    assert f["SD"] == 0.0
    assert f["CV"] == 0.0
    assert f["RMSSD"] == 0.0
    assert f["pNN50"] == 0.0
    assert f["HR"] == pytest.approx(60.0)


def test_pnn50_single_large_difference():
    f = hrv_time_features(_ibi([800.0, 860.0]))
    assert f["pNN50"] == 100.0


def test_pnn50_threshold_is_strict():
    f = hrv_time_features(_ibi([800.0, 850.0]))  # diff exactly 50 ms
    assert f["pNN50"] == 0.0


def test_time_features_insufficient_intervals():
    f = hrv_time_features(_ibi([800.0]))
    assert np.isnan(f["SD"]) and np.isnan(f["RMSSD"]) and np.isnan(f["pNN50"])
    assert f["HR"] == pytest.approx(75.0)
    empty = hrv_time_features(_ibi([]))
    assert all(np.isnan(v) for v in empty.values())


def test_time_features_match_oracle_random_series():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n = rng.integers(3, 60)
        iv = rng.normal(850.0, 60.0, n).clip(400.0, 1800.0)
        f = hrv_time_features(_ibi(iv))
        lst = iv.tolist()
        assert f["SD"] == pytest.approx(sd_oracle(lst), rel=1e-9)
        assert f["CV"] == pytest.approx(cv_oracle(lst), rel=1e-9)
        assert f["RMSSD"] == pytest.approx(rmssd_oracle(lst), rel=1e-9)
        assert f["pNN50"] == pytest.approx(pnn50_oracle(lst), rel=1e-9)
        assert f["HR"] == pytest.approx(hr_oracle(lst), rel=1e-9)


def test_hr_mean_interval_identity():
    rng = np.random.default_rng(5)
    iv = rng.normal(700.0, 40.0, 30)
    f = hrv_time_features(_ibi(iv))
    assert f["HR"] * np.mean(iv) == pytest.approx(60000.0, rel=1e-9)


# --- Poincare ---------------------------------------------------------------------

def test_poincare_constant_series():
    f = poincare_axes(_ibi([900.0] * 8))
    assert f["L"] == pytest.approx(0.0, abs=1e-9)
    assert f["T"] == pytest.approx(0.0, abs=1e-9)


def test_poincare_matches_bruteforce_oracle():
    iv = [800.0, 810.0, 790.0, 810.0]
    f = poincare_axes(_ibi(iv))
    L, T = poincare_oracle(iv)
    assert f["L"] == pytest.approx(L, rel=1e-9)
    assert f["T"] == pytest.approx(T, rel=1e-9)


def test_poincare_alternation_is_transverse():
    iv = [800.0, 900.0] * 8
    f = poincare_axes(_ibi(iv))
    L, T = poincare_oracle(iv)
    assert f["T"] == pytest.approx(T, rel=1e-9)
    assert f["T"] > f["L"]  # alternation loads the difference axis


def test_poincare_insufficient():
    f = poincare_axes(_ibi([800.0, 820.0]))
    assert np.isnan(f["L"]) and np.isnan(f["T"])


# --- spectral ---------------------------------------------------------------------

def _modulated_ibi(f_mod: float, amp_ms: float = 50.0, mean_ms: float = 800.0,
                   duration_s: float = 50.0):
    iv, t = [], 0.0
    while t < duration_s:
        cur = mean_ms + amp_ms * math.sin(2 * math.pi * f_mod * t)
        iv.append(cur)
        t += cur / 1000.0
    return _ibi(iv)


def test_freq_features_hf_modulation():
    f = hrv_freq_features(_modulated_ibi(0.25))
    assert f["HF"] > 10.0 * f["LF"]
    assert f["LF_HF"] < 0.1


def test_freq_features_lf_modulation():
    f = hrv_freq_features(_modulated_ibi(0.10))
    assert f["LF"] > 10.0 * f["HF"]
    assert f["LF_HF"] > 10.0


def test_freq_features_constant_ibi_negligible_power():
    # 1000 ms is exactly representable, so the beat-time round trip stays exact
    const = hrv_freq_features(_ibi([1000.0] * 50))
    modulated = hrv_freq_features(_modulated_ibi(0.25))
    assert const["LF"] < 1e-6 * modulated["HF"]
    assert const["HF"] < 1e-6 * modulated["HF"]
    assert np.isnan(const["LF_HF"])  # HF is exactly zero


def test_freq_features_short_span_missing():
    f = hrv_freq_features(_ibi([800.0] * 5))
    assert np.isnan(f["LF"]) and np.isnan(f["HF"])


# --- scalar channels -------------------------------------------------------------

def test_eda_features_basic():
    f = eda_features(np.array([1.0, 2.0, 3.0]))
    assert f == {"EDA_ave": 2.0, "EDA_max": 3.0, "EDA_min": 1.0, "EDA_diff": 2.0}


def test_eda_features_constant():
    f = eda_features(np.full(10, 0.5))
    assert f["EDA_ave"] == f["EDA_max"] == f["EDA_min"] == 0.5
    assert f["EDA_diff"] == 0.0


def test_eda_features_ramp():
    f = eda_features(np.linspace(0.0, 1.0, 200))
    assert f["EDA_diff"] == pytest.approx(1.0)
    assert f["EDA_ave"] == pytest.approx(0.5, abs=1.0 / 199.0)


def test_eda_scaling_property():
    rng = np.random.default_rng(2)
    x = rng.uniform(0.5, 4.0, 200)
    a = 2.7
    base = eda_features(x)
    scaled = eda_features(a * x)
    for key in base:
        assert scaled[key] == pytest.approx(a * base[key], rel=1e-12)


def test_temp_feature():
    assert temp_feature(np.full(10, 33.0)) == 33.0
    assert temp_feature(np.array([32.0, 34.0])) == 33.0
    assert temp_feature(np.linspace(32.0, 34.0, 200)) == pytest.approx(33.0, abs=0.01)


def test_acc_features_unit_vector():
    f = acc_features(np.tile([1.0, 0.0, 0.0], (8, 1)))
    assert f["Acc_ave"] == 1.0 and f["Acc_max"] == 1.0


def test_acc_features_345_triple():
    x = np.array([[0.0, 0.0, 0.0], [0.0, 0.6, 0.8]])
    f = acc_features(x)
    assert f["Acc_ave"] == pytest.approx(0.5)
    assert f["Acc_max"] == pytest.approx(1.0)


# --- segment extraction -----------------------------------------------------------

def _segment(hr_bpm: float = 75.0, label: int = 1) -> LabeledSegment:
    interval = 60000.0 / hr_bpm
    n = int(50.0 / (interval / 1000.0))
    bvp, _ = synth.render_bvp(np.full(n, interval))
    bvp = bvp[:3200] if len(bvp) >= 3200 else np.pad(bvp, (0, 3200 - len(bvp)))
    return LabeledSegment(
        participant_id="A",
        period=Period.P1,
        annotation_time=1000.0,
        category=EmotionCategory.HAPPY,
        label=ArousalLabel(label),
        bvp_slice=bvp,
        eda_slice=np.linspace(1.0, 2.0, 200),
        temp_slice=np.full(200, 33.2),
        acc_slice=np.tile([0.1, 0.0, 0.0], (6080, 1)),
    )


def test_extract_feature_vector_constant_hr():
    vec = extract_feature_vector(_segment(75.0))
    # every window sees the same constant interval, so the window average
    # equals the single-window value
    assert vec.values["HR"] == pytest.approx(75.0, rel=0.01)
    assert vec.values["EDA_min"] == pytest.approx(1.0)
    assert vec.values["EDA_max"] == pytest.approx(2.0)
    assert vec.values["EDA_diff"] == pytest.approx(1.0)
    assert vec.values["Temp_ave"] == pytest.approx(33.2)
    assert vec.values["Acc_ave"] == pytest.approx(0.1)
    assert set(vec.values) == set(FEATURE_NAMES)


def test_window_average_is_arithmetic_mean():
    values = [70.0, 70.0, 70.0, 80.0, 80.0]
    assert np.mean(values) == pytest.approx(74.0)


def test_extract_rejects_flat_segment():
    seg = _segment()
    flat = LabeledSegment(
        **{**seg.__dict__, "bvp_slice": np.zeros(3200)}
    )
    with pytest.raises(SegmentRejectedError):
        extract_feature_vector(flat)


def test_extract_table_skips_rejected():
    good = _segment()
    flat = LabeledSegment(**{**good.__dict__, "bvp_slice": np.zeros(3200)})
    table, rejected = extract_table([good, flat])
    assert len(table) == 1
    assert len(rejected) == 1


def test_feature_vector_invariants():
    vec = extract_feature_vector(_segment(64.0))
    v = vec.values
    assert v["EDA_diff"] == pytest.approx(v["EDA_max"] - v["EDA_min"], abs=1e-12)
    assert v["L"] >= v["T"] or np.isclose(v["L"], v["T"])
    assert 0.0 <= v["pNN50"] <= 100.0
    assert v["Acc_max"] >= v["Acc_ave"] >= 0.0


def test_time_shift_invariance():
    seg = _segment()
    shifted = LabeledSegment(**{**seg.__dict__, "annotation_time": seg.annotation_time + 12345.0})
    a = extract_feature_vector(seg)
    b = extract_feature_vector(shifted)
    for name in FEATURE_NAMES:
        va, vb = a.values[name], b.values[name]
        assert (np.isnan(va) and np.isnan(vb)) or va == vb


def test_full_session_features_match_straightline_oracle():
    plan = synth.SessionPlan(participant_id="ORC", period=Period.P1, n_annotations=4, seed=3)
    session, truths = synth.render_session(plan)
    from physiodrift.signals import extract_labeled_segments

    segments = extract_labeled_segments(session)
    assert len(segments) == 4
    settings = ExtractionSettings()
    for seg, truth in zip(segments, truths):
        vec = extract_feature_vector(seg, settings)
        oracle = _oracle_all_features(seg, settings)
        for name in FEATURE_NAMES:
            got, want = vec.values[name], oracle[name]
            if np.isnan(want):
                assert np.isnan(got)
            else:
                assert got == pytest.approx(want, rel=1e-9), name
        # and the generator's bookkeeping agrees on the controlled features
        assert vec.values["HR"] == pytest.approx(truth.hr, rel=0.01)
        assert vec.values["EDA_min"] == pytest.approx(truth.eda_min, abs=1e-9)
        assert vec.values["EDA_max"] == pytest.approx(truth.eda_max, abs=1e-9)
        assert vec.values["Temp_ave"] == pytest.approx(truth.temp_ave, abs=1e-9)
        assert vec.values["Acc_ave"] == pytest.approx(truth.acc_ave, abs=1e-9)
        assert vec.values["Acc_max"] == pytest.approx(truth.acc_max, abs=1e-9)


def _oracle_all_features(seg: LabeledSegment, settings: ExtractionSettings) -> dict:
    """Straight-line recomputation: shared beat detection, independent windowing,
    pure-python feature formulas, explicit averaging."""
    from statistics import fmean

    from physiodrift.features import segment_beats

    beats = segment_beats(seg, settings).tolist()
    out = {}
    window_vals = {k: [] for k in ["SD", "CV", "RMSSD", "pNN50", "HR", "L", "T", "LF", "HF", "LF_HF"]}
    start = 0.0
    while start + settings.window_s <= len(seg.bvp_slice) / seg.bvp_rate + 1e-9:
        in_w = [b for b in beats if start <= b < start + settings.window_s]
        iv = [(b2 - b1) * 1000.0 for b1, b2 in zip(in_w, in_w[1:])]
        iv = [v for v in iv if 300.0 <= v <= 2000.0]
        window_vals["HR"].append(hr_oracle(iv) if len(iv) >= 1 else float("nan"))
        if len(iv) >= 2:
            window_vals["SD"].append(sd_oracle(iv))
            window_vals["CV"].append(cv_oracle(iv))
            window_vals["RMSSD"].append(rmssd_oracle(iv))
            window_vals["pNN50"].append(pnn50_oracle(iv))
        else:
            for k in ("SD", "CV", "RMSSD", "pNN50"):
                window_vals[k].append(float("nan"))
        if len(iv) >= 3:
            L, T = poincare_oracle(iv, settings.poincare_scale)
            window_vals["L"].append(L)
            window_vals["T"].append(T)
        else:
            window_vals["L"].append(float("nan"))
            window_vals["T"].append(float("nan"))
        # spectral features reuse the package implementation (validated
        # separately against band-discrimination oracles)
        w_ibi = beats_to_ibi(np.array([b for b in in_w]), settings.ibi_min_ms, settings.ibi_max_ms)
        freq = hrv_freq_features(w_ibi)
        for k in ("LF", "HF", "LF_HF"):
            window_vals[k].append(freq[k])
        start += settings.stride_s
    for k, vals in window_vals.items():
        out[k] = fmean(vals) if not any(math.isnan(v) for v in vals) else float("nan")

    eda = seg.eda_slice.tolist()
    out["EDA_ave"] = fmean(eda)
    out["EDA_max"] = max(eda)
    out["EDA_min"] = min(eda)
    out["EDA_diff"] = max(eda) - min(eda)
    out["Temp_ave"] = fmean(seg.temp_slice.tolist())
    mags = [math.sqrt(x * x + y * y + z * z) for x, y, z in seg.acc_slice.tolist()]
    out["Acc_ave"] = fmean(mags)
    out["Acc_max"] = max(mags)
    return out
