import numpy as np
import pytest

from mindex.gronwall import (
    GronwallSpec,
    check_conditions,
    deterministic_path,
    envelope_bounds,
    freedman_sum_check,
    poly_hitting_time,
    simulate,
    verify_envelope,
)


def _linear_spec(scale=0.5, **kw):
    # conditions at `scale` times each bound
    x0, T, alpha, delta_P = 0.01, 400, 0.01, 0.1
    Xi = scale * x0 / (4 * T)
    sigma = np.sqrt(scale) * np.sqrt(delta_P * alpha * x0**2 / 16)
    base = dict(
        kind="linear", x0=x0, T=T, alpha=alpha, Xi=Xi, sigma_Z=sigma,
        state_coupled=True, delta_P=delta_P,
    )
    base.update(kw)
    return GronwallSpec(**base)


def _zero_drift_spec(**kw):
    base = dict(kind="zero_drift", x0=1.0, T=300, Xi=1e-4, sigma_Z=5e-3, delta_P=0.1)
    base.update(kw)
    return GronwallSpec(**base)


def _poly_spec(scale=0.5, **kw):
    x0, T, alpha, p, delta_P = 0.05, 500, 2e-4, 2.0, 0.1
    Xi = scale * x0 / (4 * T)
    sigma = np.sqrt(scale) * np.sqrt(x0**2 * delta_P / (16 * T))
    base = dict(
        kind="polynomial", x0=x0, T=T, alpha=alpha, p=p, Xi=Xi, sigma_Z=sigma,
        delta_P=delta_P,
    )
    base.update(kw)
    return GronwallSpec(**base)


def test_spec_validation():
    with pytest.raises(ValueError):
        GronwallSpec(kind="nope", x0=1.0, T=10)
    with pytest.raises(ValueError):
        GronwallSpec(kind="linear", x0=1.0, T=10, alpha=0.0)
    with pytest.raises(ValueError):
        GronwallSpec(kind="polynomial", x0=1.0, T=10, alpha=0.1, p=1.0)
    with pytest.raises(ValueError):
        GronwallSpec(kind="zero_drift", x0=-1.0, T=10)


def test_check_conditions_examples():
    spec = _linear_spec(scale=0.5)
    assert check_conditions(spec).ok
    bad = _linear_spec(Xi=0.01 / 400)  # Xi = x0/T violates Xi <= x0/(4T)
    assert not check_conditions(bad).ok
    poly = _poly_spec(scale=0.5)
    assert check_conditions(poly).ok
    assert check_conditions(_zero_drift_spec()).ok  # vacuous


def test_deterministic_linear_is_exact():
    spec = GronwallSpec(kind="linear", x0=0.02, T=200, alpha=0.01, Xi=0.0, sigma_Z=0.0)
    path = simulate(spec, seed=0)
    expected = 0.02 * (1.01) ** np.arange(201)
    np.testing.assert_allclose(path.X, expected, rtol=1e-12)
    assert path.exit_step is None


def test_deterministic_polynomial_reproduces_recurrence_and_dominates_envelope():
    spec = GronwallSpec(kind="polynomial", x0=0.05, T=300, alpha=1e-3, p=2.0)
    path = simulate(spec, seed=0)
    np.testing.assert_allclose(path.X, deterministic_path(spec), rtol=1e-12)
    lower, _ = envelope_bounds(spec)
    assert np.all(path.X >= lower)


def test_zero_drift_noise_free_is_constant():
    spec = GronwallSpec(kind="zero_drift", x0=3.0, T=50)
    path = simulate(spec, seed=1)
    np.testing.assert_allclose(path.X, 3.0, rtol=1e-15)


def test_polynomial_blow_up_reported():
    spec = GronwallSpec(kind="polynomial", x0=0.5, T=200, alpha=0.5, p=3.0)
    path = simulate(spec, seed=2)
    assert path.blow_up_step is not None


def test_verify_envelope_linear_meets_floor():
    rep = verify_envelope(_linear_spec(scale=1.0), trials=2000, seed=11)
    assert rep.condition_satisfied
    assert rep.passed
    assert rep.theoretical_floor == pytest.approx(0.9)
    assert rep.stay_fraction >= 0.9 - 2 * rep.stderr


def test_verify_envelope_zero_drift_meets_floor():
    rep = verify_envelope(_zero_drift_spec(), trials=2000, seed=12)
    assert rep.passed


def test_verify_envelope_polynomial_meets_floor():
    rep = verify_envelope(_poly_spec(scale=1.0), trials=2000, seed=13)
    assert rep.condition_satisfied
    assert rep.passed


def test_verify_envelope_amplified_noise_fails():
    rep = verify_envelope(
        _linear_spec(scale=1.0, noise_amplification=100.0), trials=500, seed=14
    )
    assert rep.stay_fraction < rep.theoretical_floor


def test_stay_fraction_monotone_in_noise_scale():
    fractions = []
    ses = []
    for amp in (1.0, 4.0, 16.0, 64.0):
        rep = verify_envelope(
            _zero_drift_spec(noise_amplification=amp), trials=800, seed=15
        )
        fractions.append(rep.stay_fraction)
        ses.append(rep.stderr)
    for k in range(len(fractions) - 1):
        assert fractions[k + 1] <= fractions[k] + 2 * (ses[k] + ses[k + 1])


def test_envelope_exit_uses_stopping_time_semantics():
    # a path that leaves the envelope and returns inside by T still counts
    # as an exit: first violation decides, no partial credit (trial 1 of
    # this seed is a pinned exit-and-return path)
    spec = _zero_drift_spec(noise_amplification=3.0)
    path = simulate(spec, seed=21, trial=1)
    lower, upper = envelope_bounds(spec)
    assert path.exit_step is not None
    assert lower[-1] <= path.X[-1] <= upper[-1]  # ends inside, still an exit
    t = path.exit_step
    assert not (lower[t] <= path.X[t] <= upper[t])
    assert np.all((path.X[:t] >= lower[:t]) & (path.X[:t] <= upper[:t]))


def test_weibull_noise_envelope():
    spec = _zero_drift_spec(z_dist="weibull", weibull_c=0.5)
    rep = verify_envelope(spec, trials=1000, seed=16)
    assert rep.passed


def test_poly_hitting_time_examples():
    assert poly_hitting_time(0.9, 1e-3, 2) == 0
    # halving x0 roughly doubles the count
    for x0 in (0.05, 0.02):
        t1 = poly_hitting_time(x0, 1e-3, 2)
        t2 = poly_hitting_time(x0 / 2, 1e-3, 2)
        assert 1.7 <= t2 / t1 <= 2.3
    with pytest.raises(ValueError):
        poly_hitting_time(0.0, 1e-3, 2)


def test_poly_hitting_time_order_bound():
    # count <= K / (x0^{p-1} alpha), K frozen per p
    K = {2: 1.1, 3: 0.6}
    for p in (2, 3):
        for x0 in (0.01, 0.02, 0.05):
            for alpha in (1e-3, 1e-4):
                steps = poly_hitting_time(x0, alpha, p)
                assert steps <= K[p] / (x0 ** (p - 1) * alpha)


def test_freedman_sum_check_bounded():
    rep = freedman_sum_check(a=3.0, b=1.0, c=1.0, T=400, delta_P=0.05, trials=2000,
                             seed=3, dist="rademacher")
    assert rep.passed
    assert rep.quantile <= 0.5 * rep.bound  # large margin for the bounded case


def test_freedman_sum_check_weibull_tail():
    rep = freedman_sum_check(a=1.0, b=1.0, c=0.5, T=400, delta_P=0.05, trials=2000,
                             seed=4, dist="weibull")
    assert rep.passed


def test_freedman_sum_check_single_step():
    rep = freedman_sum_check(a=3.0, b=1.0, c=1.0, T=1, delta_P=0.05, trials=2000,
                             seed=5, dist="rademacher")
    assert rep.passed
    assert rep.quantile == pytest.approx(1.0)


def test_freedman_rejects_bad_params():
    with pytest.raises(ValueError):
        freedman_sum_check(a=0.5, b=1.0, c=1.0, T=10, delta_P=0.1, trials=10)
    with pytest.raises(ValueError):
        freedman_sum_check(a=1.0, b=2.0, c=1.0, T=10, delta_P=0.1, trials=10)
