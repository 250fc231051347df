import numpy as np
import pytest
from scipy import stats as sst

from besselmp.core import DomainError, PathEnsemble, SamplePath, TimeGrid, constant_functional
from besselmp.density import DensitySpec, bes_cdf, bes_cdf_left
from besselmp.operator import h_inverse, harmonic_h, sigma0
from besselmp.schemes import (
    SchemeVariant,
    besq_exact_ensemble,
    euler_besq,
    euler_besq_block,
    euler_besq_ensemble,
    lamperti_sde,
    reflected_bm,
    reflected_bm_ensemble,
    sample_besq_exact,
    sign_flip_after_zero,
    sqrt_path,
)
from besselmp.stats import ks_critical, ks_one_sample, mean_stderr

G1 = TimeGrid.uniform(1.0, 1)


def test_null_process():
    p = sample_besq_exact(0.0, 0.0, TimeGrid.uniform(1, 50), seed=1)
    assert np.all(p.values == 0.0)
    assert p.noise_increments is None


def test_exact_rejects_negative_start():
    with pytest.raises(DomainError):
        sample_besq_exact(-1.0, 0.5, G1, seed=0)


@pytest.mark.parametrize("delta,s0", [(0.3, 0.0), (0.5, 1.0), (2.0, 0.5)])
def test_exact_mean(delta, s0):
    s = besq_exact_ensemble(s0, delta, TimeGrid.uniform(1, 4), 50000, seed=5).terminal
    m, se = mean_stderr(s)
    assert abs(m - (s0 + delta)) < 4 * se


def test_exact_delta_one_moments():
    # (x0 + sqrt(T) Z)^2: mean x0^2 + T, variance 4 x0^2 T + 2 T^2
    x0, T = 0.8, 2.0
    s = besq_exact_ensemble(x0 * x0, 1.0, TimeGrid.uniform(T, 3), 100000, seed=9).terminal
    m, se = mean_stderr(s)
    assert abs(m - (x0 * x0 + T)) < 4 * se
    var = 4 * x0 * x0 * T + 2 * T * T
    assert s.var() == pytest.approx(var, rel=0.03)


def test_exact_nonnegative_and_absorbed():
    s = besq_exact_ensemble(1.0, 0.0, TimeGrid.uniform(2, 200), 5000, seed=2).values
    assert np.all(s >= 0)
    hit = np.argmax(s == 0, axis=1)
    for k in np.flatnonzero((s == 0).any(axis=1)):
        assert np.all(s[k, hit[k]:] == 0)


@pytest.mark.parametrize("delta,x0", [(0.3, 0.0), (0.7, 1.0)])
def test_exact_marginal_matches_density(delta, x0):
    x = np.sqrt(besq_exact_ensemble(x0 * x0, delta, G1, 20000, seed=4).terminal)
    spec = DensitySpec(delta, x0, 1.0)
    d = ks_one_sample(x, lambda y: bes_cdf(spec, y), lambda y: bes_cdf_left(spec, y))
    assert d < ks_critical(x.size)


def test_determinism_and_thread_independence():
    g = TimeGrid.uniform(1, 16)
    a = besq_exact_ensemble(1.0, 0.5, g, 9000, seed=11, threads=1)
    b = besq_exact_ensemble(1.0, 0.5, g, 9000, seed=11, threads=3)
    assert a.values.tobytes() == b.values.tobytes()
    c = besq_exact_ensemble(1.0, 0.5, g, 9000, seed=12)
    assert not np.array_equal(a.values, c.values)


def test_quadratic_variation_of_m1():
    g = TimeGrid.uniform(1.0, 2000)
    s = besq_exact_ensemble(1.0, 0.5, g, 200, seed=3).values
    m = s - 1.0 - 0.5 * g.times
    qv = (np.diff(m, axis=1) ** 2).sum(axis=1)
    target = 4 * (s[:, :-1] * g.dt).sum(axis=1)
    assert np.median(np.abs(qv / target - 1)) < 0.05


def test_euler_one_step():
    g = TimeGrid([0.0, 0.5])
    out = euler_besq_block(1.0, constant_functional(1.0), g, np.array([[0.1]]))
    assert out[0, 1] == pytest.approx(1.7)


@pytest.mark.parametrize("variant", list(SchemeVariant))
def test_euler_null_path(variant):
    p = euler_besq(0.0, 0.0, None, TimeGrid.uniform(1, 64), seed=1, variant=variant)
    assert np.all(p.values == 0.0)
    assert p.noise_increments.shape == (64,)


def test_euler_truncation_keeps_internal_state():
    # the stored value is max(state, 0) but the state itself continues from below zero
    g = TimeGrid([0.0, 1.0, 2.0])
    out = euler_besq_block(1.0, constant_functional(0.0), g, np.array([[-1.0, 0.0]]))
    np.testing.assert_allclose(out[0], [1.0, 0.0, 0.0])
    out = euler_besq_block(1.0, constant_functional(0.5), g, np.array([[-1.0, 0.0]]),
                           SchemeVariant.EULER_FULL_TRUNCATION)
    np.testing.assert_allclose(out[0], [1.0, 0.0, 0.0])
    out = euler_besq_block(1.0, constant_functional(0.5), g, np.array([[-1.0, 0.0]]),
                           SchemeVariant.EULER_REFLECTION)
    np.testing.assert_allclose(out[0], [1.0, 0.5, 1.0])


def test_euler_converges_to_exact_law():
    from besselmp.stats import ks_two_sample

    ex = np.sqrt(besq_exact_ensemble(1.0, 1.0, G1, 40000, seed=1).terminal)
    ks = []
    for n in (16, 4096):
        e = euler_besq_ensemble(1.0, 1.0, None, TimeGrid.uniform(1, n), 20000, seed=2)
        ks.append(ks_two_sample(np.sqrt(e.terminal), ex))
    assert ks[1] < ks[0]
    assert ks[1] < ks_critical(20000, 0.01, 40000)


def test_sqrt_path():
    g = TimeGrid.uniform(1, 2)
    np.testing.assert_array_equal(sqrt_path(SamplePath(g, [4, 4, 4.0])).values, [2, 2, 2])
    np.testing.assert_array_equal(sqrt_path(SamplePath(g, [0, 0, 0.0])).values, [0, 0, 0])
    with pytest.raises(DomainError):
        sqrt_path(SamplePath(g, [1, -1e-3, 0.0]))
    p = SamplePath(g, [1, 4, 9.0], [0.1, 0.2])
    np.testing.assert_array_equal(sqrt_path(p).noise_increments, p.noise_increments)


def test_reflected_bm_example():
    g = TimeGrid([0.0, 1.0, 2.0])
    x, local, dw = reflected_bm(0.2, g, seed=0, dw=[-1.0, 0.5])
    np.testing.assert_allclose(x.values, [0.2, 0.0, 0.5])
    np.testing.assert_allclose(local.values, [0.0, 0.8, 0.8])


def test_reflected_bm_no_reflection():
    g = TimeGrid.uniform(1, 3)
    x, local, _ = reflected_bm(1.0, g, seed=0, dw=[0.1, -0.5, 0.2])
    np.testing.assert_allclose(local.values, 0.0)
    np.testing.assert_allclose(x.values, [1.0, 1.1, 0.6, 0.8])


def test_reflected_bm_properties_and_law():
    g = TimeGrid.uniform(1, 256)
    x, local, _ = reflected_bm_ensemble(0.3, g, 20000, seed=8)
    assert np.all(x.values >= 0)
    assert np.all(np.diff(local.values, axis=1) >= 0)
    # regulator only moves when the path sits at zero
    dl = np.diff(local.values, axis=1)
    assert np.all(x.values[:, 1:][dl > 0] == 0)
    # reflected BM at T has the law of |x0 + W_T| (folded normal)
    folded = sst.foldnorm(0.3)
    d = ks_one_sample(np.abs(0.3 + x.noise_increments.sum(axis=1)), folded.cdf)
    assert d < ks_critical(20000)


def test_reflected_bm_marginal_fine_grid():
    # grid monitoring of the minimum biases X_T by O(sqrt(dt)); use a fine grid
    x, _, _ = reflected_bm_ensemble(0.3, TimeGrid.uniform(1, 4096), 4000, seed=8)
    assert ks_one_sample(x.terminal, sst.foldnorm(0.3).cdf) < ks_critical(4000)


def test_sign_flip_examples():
    g = TimeGrid.uniform(1, 3)
    p = SamplePath(g, [1.0, 0.0, 1.0, 2.0])
    np.testing.assert_array_equal(sign_flip_after_zero(p).values, [1, 0, -1, -2])
    q = SamplePath(g, [1.0, 0.5, 1.0, 2.0])
    np.testing.assert_array_equal(sign_flip_after_zero(q).values, q.values)
    ens = PathEnsemble(g, [[1.0, 0.0, 1.0, 2.0], [0.0, 1.0, 0.0, 3.0]])
    np.testing.assert_array_equal(sign_flip_after_zero(ens).values,
                                  [[1, 0, -1, -2], [0, -1, 0, -3]])


def test_lamperti_null_start():
    p = lamperti_sde(0.0, 0.0, TimeGrid.uniform(1, 100), seed=3)
    assert np.all(p.values == 0.0)


def test_lamperti_uses_sigma0():
    p = lamperti_sde(0.7, 0.5, TimeGrid.uniform(1, 50), seed=3)
    np.testing.assert_allclose(np.diff(p.values), sigma0(0.5, p.values[:-1]) * p.noise_increments)


def test_lamperti_second_moment():
    # h^{-1}(Y) solves the martingale problem for x^2 as well: E Z_T^2 = x0^2 + delta T
    delta, x0 = 0.5, 1.0
    ens = lamperti_sde(float(harmonic_h(delta, x0)), delta, TimeGrid.uniform(1, 512), seed=4,
                       n_paths=20000)
    z = h_inverse(delta, ens.terminal)
    assert np.mean(z * z) == pytest.approx(x0 * x0 + delta, rel=0.05)


def test_lamperti_rejects_high_dimension():
    with pytest.raises(DomainError):
        lamperti_sde(0.0, 2.0, G1, seed=0)
