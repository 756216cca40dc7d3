import random

import pytest

from detmac.radio import RadioEnvironment, Reception, resolve_slot


def env(margin=10.0, bias=0.0, **kw):
    return RadioEnvironment(capture_margin_db=margin,
                            sync_offset_bias_db=bias, **kw)


def contest(delta_db, margin=10.0, bias=0.0, start_a=0, start_b=0):
    """Two simultaneous frames; tx 1 is delta_db stronger than tx 2."""
    rx = [Reception(1, -50.0 + delta_db, start=start_a),
          Reception(2, -50.0, start=start_b)]
    return resolve_slot(rx, env(margin, bias))


def test_lone_frame_always_decodes():
    only = Reception(7, -90.0)
    assert resolve_slot([only], env()) is only
    assert resolve_slot([], env()) is None


def test_margin_threshold_is_inclusive():
    assert contest(10.0).tx == 1         # exactly at the margin: decoded
    assert contest(9.999999) is None
    assert contest(25.0).tx == 1
    assert contest(0.0) is None          # equal power: mutual destruction
    assert contest(-10.0).tx == 2        # the weaker id loses symmetrically
    assert contest(-9.999999) is None


def test_bias_shifts_both_edges_by_its_value():
    # favored frame is tx 1 (tie start, lower id); bias credits it
    assert contest(8.0, bias=2.0).tx == 1
    assert contest(7.999999, bias=2.0) is None
    # tx 2 now needs bias extra to overcome the credit
    assert contest(-12.0, bias=2.0).tx == 2
    assert contest(-11.999999, bias=2.0) is None


def test_translation_invariance():
    for shift in (-40.0, 0.0, 15.0, 62.5):
        a = [Reception(1, -44.0 + shift), Reception(2, -55.0 + shift)]
        got = resolve_slot(a, env())
        assert got is not None and got.tx == 1


def test_earlier_start_wins_lock_regardless_of_power():
    rx = [Reception(1, -80.0, start=0), Reception(2, -30.0, start=1)]
    # the receiver locked the weak early frame; the strong one jams it
    assert resolve_slot(rx, env()) is None
    rx = [Reception(1, -30.0, start=0), Reception(2, -80.0, start=1)]
    assert resolve_slot(rx, env()).tx == 1


def test_tie_start_locks_strongest():
    rx = [Reception(1, -60.0, start=0),
          Reception(2, -45.0, start=0),
          Reception(3, -58.0, start=0)]
    got = resolve_slot(rx, env(margin=10.0))
    assert got is not None and got.tx == 2


def test_three_way_margin_is_against_the_best_competitor():
    rx = [Reception(1, -40.0), Reception(2, -50.0), Reception(3, -49.0)]
    assert resolve_slot(rx, env(margin=9.0)).tx == 1
    assert resolve_slot(rx, env(margin=9.1)) is None


def test_monotonic_in_delta():
    prior = None
    for delta in range(-15, 16):
        got = contest(float(delta))
        ok = got is not None and got.tx == 1
        if prior is not None and prior:
            assert ok or delta < 10
        prior = ok
    # exact characterization over the sweep
    wins = [d for d in range(-15, 16)
            if (g := contest(float(d))) is not None and g.tx == 1]
    losses = [d for d in range(-15, 16)
              if (g := contest(float(d))) is not None and g.tx == 2]
    assert wins == list(range(10, 16))
    assert losses == list(range(-15, -9))


def test_environment_power_lookup():
    radio = RadioEnvironment(power_dbm={(1, 2): -40.0}, default_dbm=-70.0)
    assert radio.rx_power(1, 2) == -40.0
    assert radio.rx_power(2, 1) == -70.0
    assert radio.rx_power(1, 1) is None
    assert radio.in_range(1, 2)
    no_default = RadioEnvironment(power_dbm={(1, 2): -40.0})
    assert no_default.rx_power(2, 1) is None
    assert not no_default.in_range(2, 1)


def test_environment_validation():
    with pytest.raises(ValueError):
        RadioEnvironment(loss="sometimes")
    with pytest.raises(ValueError):
        RadioEnvironment(loss="lossy", error_rate=1.0)
    with pytest.raises(ValueError):
        RadioEnvironment(capture_margin_db=-1.0)


def test_lossy_model_needs_rng_and_matches_rate():
    radio = env(loss="lossy", error_rate=0.25)
    with pytest.raises(ValueError):
        resolve_slot([Reception(1, -50.0)], radio)
    rng = random.Random(8128)
    kept = sum(resolve_slot([Reception(1, -50.0)], radio, rng) is not None
               for _ in range(4000))
    assert 2830 <= kept <= 3170  # ~Binomial(4000, 0.75)


def test_loss_applies_only_to_decodable_frames():
    radio = env(loss="lossy", error_rate=0.999)
    rng = random.Random(11)
    # a frame that would not capture is lost regardless of the coin
    rx = [Reception(1, -50.0), Reception(2, -49.0)]
    assert resolve_slot(rx, radio, rng) is None


def test_measurement_noise_is_zero_mean():
    radio = env(noise_sigma_db=2.0)
    rngs = random.Random(5)
    samples = [radio.measure_power(2, 1) for _ in range(3)]
    assert samples == [None, None, None]  # no power table, no default
    radio = RadioEnvironment(default_dbm=-60.0, noise_sigma_db=2.0)
    vals = [radio.measure_power(2, 1, rngs) for _ in range(2000)]
    mean = sum(vals) / len(vals)
    assert abs(mean + 60.0) < 0.2
    assert radio.measure_power(2, 1) == -60.0  # no rng, no noise
