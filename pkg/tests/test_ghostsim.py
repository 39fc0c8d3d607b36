import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from antijam.errors import DegenerateRegionError, InvalidArgumentError
from antijam.ghostsim import (
    CountImage, Intrusion, Scene, compute_metrics, estimate_weight, expected_counts,
    image_metrics, measure_region_visibility, pixel_uniforms, recover, sample_counts,
    simulate_clean, simulate_pair, uniform_illumination,
)
from antijam.polarization import bell_diagonal_state, BellDiagonalParams, canonical_states

QUARTER = (np.pi / 4, np.pi / 4)
STATES = canonical_states()


def expected_oracle(scene, p_legit, p_e, r):
    """Per-pixel loop over the expected-count formula."""
    out = np.empty(scene.shape)
    for i in range(scene.height):
        for j in range(scene.width):
            b = scene.photons * scene.illumination[i, j]
            out[i, j] = (b * (1 - r) * scene.mask_true[i, j] * p_legit
                         + b * r * scene.mask_false[i, j] * p_e
                         + scene.dark_total / scene.n_pixels)
    return out


def random_scene(rng, w=7, h=5):
    illum = rng.random((h, w))
    return Scene(w, h, rng.random((h, w)) < 0.5, rng.random((h, w)) < 0.5, illum / illum.sum(),
                 photons=rng.uniform(0, 1e5), dark_total=rng.uniform(0, 1e4))


def random_bd_state(rng):
    w = rng.dirichlet(np.ones(4))
    vertices = np.array([[1, -1, 1], [-1, 1, 1], [1, 1, -1], [-1, -1, -1]]) / 4
    return bell_diagonal_state(BellDiagonalParams(*(w @ vertices)))


# --- Scene ---------------------------------------------------------------

def test_default_scene_regions_nonempty():
    s = Scene.default()
    assert s.shape == (34, 34)
    for region in (s.lambda_only, s.t_only, s.overlap, s.object_free):
        assert region.sum() > 0
    total = s.lambda_only.sum() + s.t_only.sum() + s.overlap.sum() + s.object_free.sum()
    assert total == 34 * 34


def test_scene_rejects_bad_illumination():
    m = np.zeros((2, 2), bool)
    with pytest.raises(InvalidArgumentError):
        Scene(2, 2, m, m, np.full((2, 2), 0.3))
    with pytest.raises(InvalidArgumentError):
        Scene(2, 2, m, m, np.array([[1.5, -0.5], [0, 0]]))
    with pytest.raises(InvalidArgumentError):
        Scene(3, 2, m, m, uniform_illumination(3, 2))
    with pytest.raises(InvalidArgumentError):
        Scene(2, 2, m, m, uniform_illumination(2, 2), photons=-1)


def test_scene_digest_tracks_content():
    a, b = Scene.default(), Scene.default()
    assert a.digest() == b.digest()
    assert Scene.default(dark_total=0).digest() != a.digest()


# --- expected_counts -----------------------------------------------------

def test_expected_uniform_full_mask():
    ones = np.ones((4, 5), bool)
    s = Scene(5, 4, ones, ~ones, uniform_illumination(5, 4), photons=1000, dark_total=0)
    m = expected_counts(s, STATES["psi1"], None, QUARTER)
    np.testing.assert_allclose(m, 1000 * 0.5 / 20, rtol=0, atol=1e-12)


def test_expected_r1_drops_true_object():
    s = Scene.default(dark_total=0)
    m = expected_counts(s, STATES["psi1"], Intrusion(STATES["omega1"], 1.0), QUARTER)
    assert np.all(m[s.lambda_only] == 0)
    assert np.all(m[s.t_only] > 0)


def test_expected_canonical_pixel_values():
    s = Scene.default()
    base = s.photons / s.n_pixels
    dark = s.dark_total / s.n_pixels
    m = expected_counts(s, STATES["psi1"], Intrusion(STATES["omega1"], 0.5), QUARTER)
    assert m[s.lambda_only] == pytest.approx(base * 0.25 + dark, abs=1e-12)
    assert m[s.t_only] == pytest.approx(base * 0.125 + dark, abs=1e-12)
    assert m[s.object_free] == pytest.approx(dark, abs=1e-12)


def test_expected_matches_loop_oracle():
    rng = np.random.default_rng(3)
    for _ in range(10):
        s = random_scene(rng)
        r = rng.uniform()
        from antijam.polarization import detection_probability
        rho, rho_e = random_bd_state(rng), random_bd_state(rng)
        cfg = tuple(rng.uniform(0, np.pi, 2))
        m = expected_counts(s, rho, Intrusion(rho_e, r), cfg)
        want = expected_oracle(s, detection_probability(rho, cfg), detection_probability(rho_e, cfg), r)
        np.testing.assert_allclose(m, want, rtol=1e-13, atol=1e-12)


def test_expected_requires_two_angles():
    with pytest.raises(InvalidArgumentError):
        expected_counts(Scene.default(), STATES["psi1"], None, (0.1,))


def test_monotone_in_r():
    s = Scene.default()
    prev_true = np.inf
    prev_rec = np.inf
    for r in np.linspace(0, 1, 11):
        it = Intrusion(STATES["omega1"], r)
        m1 = expected_counts(s, STATES["psi1"], it, QUARTER)
        m2 = expected_counts(s, STATES["psi2"], it, QUARTER)
        true_term = m1[s.lambda_only].mean()
        rec = np.abs(m1 - m2).sum()
        assert true_term <= prev_true + 1e-12
        assert rec <= prev_rec + 1e-9
        prev_true, prev_rec = true_term, rec


# --- cancellation identity -----------------------------------------------

def test_cancellation_identity_random_scenarios():
    rng = np.random.default_rng(11)
    from antijam.polarization import detection_probability
    for _ in range(50):
        s = random_scene(rng)
        rho1, rho2, rho_e = (random_bd_state(rng) for _ in range(3))
        r = rng.uniform()
        cfg = tuple(rng.uniform(0, np.pi, 2))
        it = Intrusion(rho_e, r)
        diff = np.abs(expected_counts(s, rho1, it, cfg) - expected_counts(s, rho2, it, cfg))
        p1, p2 = detection_probability(rho1, cfg), detection_probability(rho2, cfg)
        want = (1 - r) * s.photons * s.illumination * s.mask_true * abs(p1 - p2)
        np.testing.assert_allclose(diff, want, rtol=0, atol=1e-12)


# --- sampling ------------------------------------------------------------

def test_sample_zero_map():
    img = sample_counts(np.zeros((5, 5)), seed=1)
    assert np.all(img.counts == 0)


def test_sample_mean_large():
    img = sample_counts(np.full((1000, 1000), 8.7), seed=2024)
    assert 8.67 <= img.counts.mean() <= 8.73


def test_sample_variance_poisson():
    img = sample_counts(np.full(200_000, 30.0), seed=5)
    assert img.counts.var() == pytest.approx(30.0, rel=0.02)


def test_sample_deterministic_and_thread_independent():
    m = np.random.default_rng(0).uniform(0, 50, (120, 90))
    a = sample_counts(m, seed=9)
    b = sample_counts(m, seed=9)
    c = sample_counts(m, seed=9, threads=4)
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.counts, c.counts)
    assert not np.array_equal(a.counts, sample_counts(m, seed=10).counts)


def test_sample_pixel_order_independent():
    # each pixel depends only on its own mean and index
    m = np.full((10, 10), 12.0)
    base = sample_counts(m, seed=4).counts
    m2 = m.copy()
    m2[0, 0] = 500.0
    other = sample_counts(m2, seed=4).counts
    assert np.array_equal(base.ravel()[1:], other.ravel()[1:])


def test_pixel_uniforms_range_and_streams():
    u = pixel_uniforms(1, 0, np.arange(100_000))
    assert u.min() > 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.005
    v = pixel_uniforms(1, 1, np.arange(100_000))
    assert abs(np.corrcoef(u, v)[0, 1]) < 0.02


def test_sample_rejects_negative():
    with pytest.raises(InvalidArgumentError):
        sample_counts(np.array([1.0, -0.1]), seed=0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1e4), st.integers(0, 2**32))
def test_sample_nonnegative_integers(mean, seed):
    img = sample_counts(np.full(16, mean), seed=seed)
    assert img.counts.dtype == np.int64
    assert np.all(img.counts >= 0)


# --- simulate_pair -------------------------------------------------------

def test_blocked_state_shows_only_dark():
    s = Scene.default(dark_total=0)
    _, i2 = simulate_pair(s, STATES["psi1"], STATES["psi2"], Intrusion(STATES["omega1"], 0.0), QUARTER, seed=1)
    assert np.all(i2.counts == 0)


def test_same_state_same_expectation():
    s = Scene.default()
    it = Intrusion(STATES["omega1"], 0.3)
    a = expected_counts(s, STATES["psi1"], it, QUARTER, exposure=0)
    b = expected_counts(s, STATES["psi1"], it, QUARTER, exposure=1)
    assert np.array_equal(a, b)


def test_canonical_pair_content():
    s = Scene.default()
    i1, i2 = simulate_pair(s, STATES["psi1"], STATES["psi2"], Intrusion(STATES["omega1"], 0.5), QUARTER, seed=3)
    free1 = i1.counts[s.object_free].mean()
    free2 = i2.counts[s.object_free].mean()
    # j=1: both letters visible; j=2: T only
    assert i1.counts[s.lambda_only].mean() > free1 + 10
    assert i1.counts[s.t_only].mean() > free1 + 5
    assert i2.counts[s.t_only].mean() > free2 + 5
    assert abs(i2.counts[s.lambda_only].mean() - free2) < 3


def test_simulate_pair_deterministic():
    s = Scene.default()
    it = Intrusion(STATES["omega1"], 0.5)
    a = simulate_pair(s, STATES["psi1"], STATES["psi2"], it, QUARTER, seed=8)
    b = simulate_pair(s, STATES["psi1"], STATES["psi2"], it, QUARTER, seed=8, threads=3)
    assert all(np.array_equal(x.counts, y.counts) for x, y in zip(a, b))
    assert a[0].meta["scene"] == s.digest()


# --- recovery and weights -------------------------------------------------

def test_recover_identical_is_zero():
    img = CountImage(np.arange(12).reshape(3, 4))
    assert np.all(recover(img, img).image == 0)


def test_recover_pixel_example():
    res = recover(np.array([[5]]), np.array([[3]]))
    assert res.image[0, 0] == 2 and res.weight_used == 1


def test_recover_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        recover(np.zeros((2, 2)), np.zeros((2, 3)))


def test_recover_canonical_expectation():
    s = Scene.default()
    it = Intrusion(STATES["omega1"], 0.5)
    diff = recover(expected_counts(s, STATES["psi1"], it, QUARTER), expected_counts(s, STATES["psi2"], it, QUARTER))
    base = s.photons / s.n_pixels
    assert np.max(diff.image[s.t_only]) == pytest.approx(0, abs=1e-12)
    assert diff.image[s.lambda_only] == pytest.approx(base * 0.5 * 0.5, abs=1e-12)


def test_estimate_weight_trivial():
    a = np.arange(1, 13, dtype=float).reshape(3, 4)
    region = np.ones((3, 4), bool)
    assert estimate_weight(a, a, region) == 1
    assert estimate_weight(2 * a, a, region) == pytest.approx(2)


def test_estimate_weight_degenerate():
    region = np.ones((2, 2), bool)
    with pytest.raises(DegenerateRegionError):
        estimate_weight(np.ones((2, 2)), np.zeros((2, 2)), region)
    with pytest.raises(DegenerateRegionError):
        estimate_weight(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2), bool))


def test_estimate_weight_time_varying_intruder():
    # 200-pixel false-only region at canonical count levels, brightness ratio 1.5
    h, w = 20, 20
    tee = np.zeros((h, w), bool)
    tee[:10] = True
    s = Scene(w, h, np.zeros((h, w), bool), tee, uniform_illumination(w, h),
              photons=1e5 * (w * h) / 1156, dark_total=0)
    it = Intrusion(STATES["omega1"], 0.5, brightness=(1.5, 1.0))
    i1, i2 = simulate_pair(s, STATES["psi1"], STATES["psi2"], it, QUARTER, seed=21)
    assert 1.45 <= estimate_weight(i1, i2, tee) <= 1.55


def test_visibility_region_examples():
    region = np.ones((2, 2), bool)
    assert measure_region_visibility(np.ones((2, 2)), np.zeros((2, 2)), region) == 1
    assert measure_region_visibility(np.zeros((2, 2)), np.zeros((2, 2)), region) == 0
    with pytest.raises(DegenerateRegionError):
        measure_region_visibility(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2), bool))


def test_visibility_no_jamming_lambda():
    s = Scene.default()
    vs = []
    for seed in range(10):
        i1, i2 = simulate_pair(s, STATES["psi1"], STATES["psi2"], None, QUARTER, seed)
        vs.append(measure_region_visibility(i1, i2, s.lambda_only, background=s.object_free))
    assert 0.9 < np.mean(vs) < 1.0


def test_visibility_background_exact_on_expectation():
    s = Scene.default()
    it = Intrusion(STATES["omega1"], 0.5)
    m1 = expected_counts(s, STATES["psi1"], it, QUARTER)
    m2 = expected_counts(s, STATES["psi2"], it, QUARTER)
    assert measure_region_visibility(m1, m2, s.overlap, background=s.object_free) == pytest.approx(0.5, abs=1e-12)


# --- metrics --------------------------------------------------------------

def test_metrics_clean_dark_level():
    s = Scene.default()
    darks = [image_metrics(simulate_clean(s, STATES["psi1"], QUARTER, seed), s).mean_dark_per_pixel
             for seed in range(10)]
    assert np.mean(darks) == pytest.approx(1e4 / 1156, abs=0.15)


def test_metrics_fields_nonnegative():
    s = Scene.default()
    i1, i2 = simulate_pair(s, STATES["psi1"], STATES["psi2"], Intrusion(STATES["omega1"], 0.5), QUARTER, 2)
    m = compute_metrics(recover(i1, i2), simulate_clean(s, STATES["psi1"], QUARTER, 2), s)
    assert all(v >= 0 for v in m.as_dict().values())
    assert m.snr == pytest.approx(m.signal_mean / m.noise_level)


def test_recovered_noise_below_clean():
    s = Scene.default()
    i1, i2 = simulate_pair(s, STATES["psi1"], STATES["psi2"], Intrusion(STATES["omega1"], 0.5), QUARTER, 6)
    clean = simulate_clean(s, STATES["psi1"], QUARTER, 6)
    assert compute_metrics(recover(i1, i2), clean, s).noise_level < image_metrics(clean, s).noise_level


def test_metrics_empty_region():
    ones = np.ones((3, 3), bool)
    s = Scene(3, 3, ones, ones, uniform_illumination(3, 3))
    with pytest.raises(DegenerateRegionError):
        image_metrics(np.zeros((3, 3)), s)
