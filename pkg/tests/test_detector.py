import numpy as np
import pytest
from scipy.stats import binom

from patternmark import (
    GAP,
    InputError,
    VocabPartition,
    WatermarkConfig,
    alternating_patterns,
    brute_force_distribution,
    build_partition,
    detect,
    detect_greenlist_baseline,
    generate_key_sequence,
    generate_watermarked,
    make_oracle,
    make_order,
    recover_keys,
    rng_stream,
)

PART4 = VocabPartition(4, 2, np.array([0, 0, 1, 1]))


def test_recover_definition():
    assert recover_keys([2, 3, 3, 2], PART4).keys.tolist() == [1, 1, 1, 1]
    assert recover_keys([0, 2, 1], PART4).keys.tolist() == [0, 1, 0]


def test_recover_out_of_range():
    with pytest.raises(InputError):
        recover_keys([0, 4], PART4)
    with pytest.raises(InputError):
        recover_keys([0, -7], PART4)


def test_excluded_token_breaks_windows():
    part = VocabPartition(4, 2, np.array([0, 0, 1, 1]), frozenset({3}))
    # keys 0 1 0 1 | excluded | 0 1 0 1 0
    tokens = [0, 2, 1, 2, 3, 0, 2, 0, 2, 0]
    keys = recover_keys(tokens, part)
    assert len(keys) == 9
    assert keys.breaks == (4,)
    cfg = WatermarkConfig(secret_seed=b"s", m=3, fpr_threshold=0.5)
    rep = detect(tokens, cfg, part)
    # runs of 4 and 5 hold 2 + 3 alternating windows; the 2 straddling windows are not counted
    assert rep.observed_count == 5
    assert rep.effective_length == 9
    assert rep.window_count == 7


def test_gap_positions_are_dropped():
    keys = recover_keys([0, GAP, GAP, 2, 1], PART4)
    assert keys.keys.tolist() == [0, 1, 0]
    assert keys.breaks == (1,)


def test_detect_hand_example():
    cfg = WatermarkConfig(secret_seed=b"s", m=3, fpr_threshold=0.125)
    rep = detect([0, 2, 1, 3], cfg, PART4)
    assert rep.observed_count == 2
    bf = brute_force_distribution(2, 4, 3, alternating_patterns(3), exact=True)
    assert rep.p_value == pytest.approx(float(bf[2]), abs=1e-15) == pytest.approx(0.125)
    assert rep.watermarked  # inclusive threshold
    assert not detect([0, 2, 1, 3], cfg.with_(fpr_threshold=0.12), PART4).watermarked


def test_detect_degenerate():
    part = VocabPartition(4, 2, np.array([0, 0, 1, 1]), frozenset({0, 1, 2, 3}))
    cfg = WatermarkConfig(secret_seed=b"s", m=3)
    rep = detect([0, 1, 2], cfg, part)
    assert (rep.p_value, rep.watermarked, rep.observed_count) == (1.0, False, 0)
    rep = detect([0, 2], cfg, PART4)
    assert (rep.p_value, rep.watermarked) == (1.0, False)


def test_detect_mismatched_l():
    cfg = WatermarkConfig(secret_seed=b"s", l=3, A=((0, 1, 0), (0, 0, 1), (1, 0, 0)),
                          Q=(1, 0, 0), m=3, pattern_set=((0, 1, 2),))
    with pytest.raises(InputError):
        detect([0, 1, 2], cfg, PART4)


def test_saturating_detection_n100():
    cfg = WatermarkConfig(secret_seed=b"s", m=5, delta=20.0, fpr_threshold=1e-3)
    part = build_partition(b"s", 20, 2)
    oracle = make_oracle("iid", 20, 1.0, b"o")
    keys = generate_key_sequence(cfg, 100, rng_stream(b"s", "k"))
    tokens = generate_watermarked(oracle, make_order("ltr", 100), cfg, part, keys, rng_stream(b"s", "x"))
    rep = detect(tokens, cfg, part)
    assert rep.observed_count == 96
    # only the two fully alternating sequences reach 96: 2 / 2**100
    assert rep.p_value == pytest.approx(2.0**-99, rel=1e-9)
    assert rep.p_value <= 1e-20 and rep.watermarked


def test_round_trip_saturating_100_of_100():
    cfg = WatermarkConfig(secret_seed=b"rt", m=5, delta=20.0, fpr_threshold=1e-3)
    part = build_partition(b"rt", 20, 2)
    hits = 0
    for i in range(100):
        oracle = make_oracle("iid", 20, 1.0, f"rt/{i}")
        keys = generate_key_sequence(cfg, 200, rng_stream(b"rt", f"k{i}"))
        tokens = generate_watermarked(oracle, make_order("ltr", 200), cfg, part, keys, rng_stream(b"rt", f"x{i}"))
        hits += detect(tokens, cfg, part).watermarked
    assert hits == 100


@pytest.mark.parametrize("f", [0.1, 0.01])
def test_null_soundness(f):
    cfg = WatermarkConfig(secret_seed=b"null", m=4, fpr_threshold=f)
    part = build_partition(b"null", 20, 2)
    rng = np.random.default_rng(5)
    fp = sum(detect(rng.integers(0, 20, 120), cfg, part).watermarked for _ in range(10_000))
    assert fp / 10_000 <= 1.5 * f


def test_delta_zero_indistinguishable():
    cfg = WatermarkConfig(secret_seed=b"z", m=4, delta=0.0, fpr_threshold=0.1)
    part = build_partition(b"z", 20, 2)
    n, reps = 60, 10_000
    wm = raw = 0
    for i in range(reps):
        oracle = make_oracle("iid", 20, 0.5, f"z/{i}")
        keys = generate_key_sequence(cfg, n, rng_stream(b"z", f"k{i}"))
        x = generate_watermarked(oracle, make_order("ltr", n), cfg, part, keys, rng_stream(b"z", f"w{i}"))
        wm += detect(x, cfg, part).watermarked
        # plain model sampling, independent stream
        P = oracle.table(n)
        u = rng_stream(b"z", f"raw{i}").random(n)
        y = np.minimum((np.cumsum(P, axis=1) < u[:, None]).sum(axis=1), 19)
        raw += detect(y, cfg, part).watermarked
    p1, p2 = wm / reps, raw / reps
    pooled = (wm + raw) / (2 * reps)
    z = (p1 - p2) / np.sqrt(2 * pooled * (1 - pooled) / reps)
    assert abs(z) < 3.29  # two-sided, alpha = 0.001


def test_detect_is_order_invariant():
    cfg = WatermarkConfig(secret_seed=b"ord", m=5, delta=20.0)
    part = build_partition(b"ord", 20, 2)
    oracle = make_oracle("ctx", 20, 1.0, b"ord/oracle")
    keys = generate_key_sequence(cfg, 60, rng_stream(b"ord", "keys"))
    reports = []
    for j in range(10):
        order = make_order("perm", 60, rng=rng_stream(b"ord", f"perm{j}"))
        tokens = generate_watermarked(oracle, order, cfg, part, keys, rng_stream(b"ord", f"s{j}"))
        assert np.array_equal(part.assignment[tokens], keys.keys)
        reports.append(detect(tokens, cfg, part))
    assert len({(r.observed_count, r.p_value, r.watermarked) for r in reports}) == 1


def test_detect_deterministic():
    cfg = WatermarkConfig(secret_seed=b"d", m=5)
    part = build_partition(b"d", 20, 2)
    tokens = np.random.default_rng(1).integers(0, 20, 300)
    assert detect(tokens, cfg, part) == detect(tokens.copy(), cfg, part)


def test_report_digest_tracks_seed():
    part = build_partition(b"d", 20, 2)
    a = detect([1, 2, 3, 4, 5, 6], WatermarkConfig(secret_seed=b"d", m=3), part).config_digest
    b = detect([1, 2, 3, 4, 5, 6], WatermarkConfig(secret_seed=b"e", m=3), part).config_digest
    assert a != b


def test_greenlist_all_green():
    part = build_partition(b"g", 20, 2)
    green = part.part(0)
    tokens = np.resize(green, 20)
    rep = detect_greenlist_baseline(tokens, part, 0, 1e-3)
    assert rep.p_value == pytest.approx(2.0**-20, rel=1e-12)
    assert rep.watermarked


def test_greenlist_at_mean():
    part = build_partition(b"g", 20, 2)
    tokens = np.concatenate([part.part(0)[:10], part.part(1)[:10]])
    rep = detect_greenlist_baseline(tokens, part, 0, 0.01)
    assert rep.p_value == pytest.approx(binom.sf(9, 20, 0.5))
    assert rep.p_value >= 0.4 and not rep.watermarked


def test_greenlist_empty():
    rep = detect_greenlist_baseline([], build_partition(b"g", 20, 2), 0, 0.01)
    assert rep.p_value == 1.0 and not rep.watermarked
