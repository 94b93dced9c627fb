import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from switched_ioss.conditions import (
    DwellCertificate,
    certify,
    check_prop2,
    eval_eq9,
    eval_estimator_conditions,
    find_dwell_times,
    find_estimator_params,
    grid_search_eq9,
    optimal_dwell_times,
)
from switched_ioss.errors import ConditionDomainError, InfeasibleCertificateError
from switched_ioss.loader import load_family_text

from conftest import TWO_MODE_FAMILY

BUILTIN = (3.5, 0.73, 2.0, 3.5, 4.0)
COUNTEREXAMPLE = (1.75, 2.17, 1.25, 1.5, 2.5)


def test_dwell_condition_on_builtin_numbers():
    assert eval_eq9(*BUILTIN, 3.5, 4.0) == pytest.approx(-0.6973, abs=5e-4)


def test_dwell_condition_trivial_case():
    assert eval_eq9(2.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx(-1.0)


def test_counterexample_is_positive_at_every_pair():
    assert eval_eq9(*COUNTEREXAMPLE, 1.5, 1.5) > 0
    _, _, grid_min = grid_search_eq9(*COUNTEREXAMPLE, grid_n=101)
    assert grid_min > 0
    assert find_dwell_times(*COUNTEREXAMPLE) is None


@pytest.mark.parametrize(
    "args",
    [
        (0.0, 0.73, 2.0, 3.5, 4.0, 3.5, 4.0),
        (3.5, -0.1, 2.0, 3.5, 4.0, 3.5, 4.0),
        (3.5, 0.73, 0.9, 3.5, 4.0, 3.5, 4.0),
        (3.5, 0.73, 2.0, 4.0, 3.5, 3.5, 4.0),
        (3.5, 0.73, 2.0, 3.5, 4.0, 3.0, 4.0),
        (3.5, 0.73, 2.0, 3.5, 4.0, 3.5, 4.5),
    ],
)
def test_dwell_condition_domain(args):
    with pytest.raises(ConditionDomainError):
        eval_eq9(*args)


def test_find_dwell_times_on_builtin_numbers():
    found = find_dwell_times(*BUILTIN)
    assert found is not None
    dc, dh, value = found
    assert 3.5 <= dc <= 4.0
    assert dh == 3.5
    assert value < -0.69
    assert value == pytest.approx(eval_eq9(*BUILTIN, dc, dh))
    assert value <= grid_search_eq9(*BUILTIN, grid_n=401)[2] + 1e-12


def test_optimal_pair_follows_the_sign_of_the_slope():
    assert optimal_dwell_times(3.5, 4.0) == (4.0, 3.5)
    assert optimal_dwell_times(1.0, 1.0) == (1.0, 1.0)


def test_double_window_has_no_pair():
    assert find_dwell_times(1.0, 0.1, 1.0, 1.0, 2.0) is None


@settings(max_examples=1000, deadline=None)
@given(
    lambda_s=st.floats(0.01, 50.0),
    lambda_u=st.floats(0.0, 50.0),
    mu=st.floats(1.0, 10.0),
    delta=st.floats(0.05, 10.0),
    ratio=st.floats(2.0, 10.0),
)
def test_no_pair_when_window_is_twice_the_minimum(lambda_s, lambda_u, mu, delta, ratio):
    Delta = delta * ratio
    if Delta < 2 * delta:
        return
    assert find_dwell_times(lambda_s, lambda_u, mu, delta, Delta) is None
    assert grid_search_eq9(lambda_s, lambda_u, mu, delta, Delta, grid_n=11)[2] >= -1e-9


def test_sufficient_condition_i():
    result = check_prop2(1.0, 0.0, 1.0, 1.0, 1.0)
    assert result.flags["i"]
    assert result.implied_values["i"] < 0
    assert result.consistent()


def test_sufficient_conditions_all_false_for_slow_decay():
    result = check_prop2(0.01, 1.0, 2.0, 1.0, 1.5)
    assert not any(result.flags.values())
    assert result.consistent()


def test_sufficient_conditions_on_builtin_numbers():
    result = check_prop2(*BUILTIN)
    assert set(result.flags) == {"i", "ii", "iii", "iv"}
    assert not result.flags["i"]
    for key, ok in result.flags.items():
        if ok:
            assert result.implied_values[key] < 0


def _required_lambda_s(clause, lambda_u, mu, delta, r):
    """Smallest stable rate meeting ``clause`` for ``Delta = r delta``."""
    lm = math.log(mu) / delta
    if clause == "i":
        q = r * r / 2
        return q * lambda_u / (1 - q)
    if clause == "ii":
        return (lambda_u * r / 2 + lm) / (1 / r - r / 2)
    if clause == "iii":
        return (lambda_u / 2 + lm) / (1 - r / 2)
    return (lambda_u * r / 2 + lm) / (1 / r - 0.5)


@pytest.mark.parametrize("clause", ["i", "ii", "iii", "iv"])
@settings(max_examples=1000, deadline=None)
@given(
    lambda_u=st.floats(0.0, 5.0),
    mu=st.floats(1.0, 3.0),
    delta=st.floats(0.5, 5.0),
    r=st.floats(1.0, 1.99),
    factor=st.floats(1.01, 5.0),
    extra=st.floats(1e-3, 1.0),
)
def test_each_sufficient_condition_certifies_its_pair(clause, lambda_u, mu, delta, r, factor, extra):
    if clause in ("i", "ii"):
        # both clauses need Delta < sqrt(2) delta
        r = 1.0 + (r - 1.0) * 0.4 / 0.99
    if clause == "i":
        mu = 1.0
    lambda_s = _required_lambda_s(clause, lambda_u, mu, delta, r) * factor + extra
    Delta = delta * r
    result = check_prop2(lambda_s, lambda_u, mu, delta, Delta)
    assume(result.flags[clause])
    if clause == "iii":
        pairs = [(Delta, delta)]
    elif clause == "iv":
        pairs = [(delta, Delta)]
    else:
        pairs = [(a, b) for a in (delta, Delta) for b in (delta, Delta)]
    for dc, dh in pairs:
        assert eval_eq9(lambda_s, lambda_u, mu, delta, Delta, dc, dh) < 0


def test_certify_builtin(example_family, example_cert):
    assert example_cert.feasible
    assert (example_cert.delta_check, example_cert.Delta_hat) == (3.5, 4.0)
    assert example_cert.lhs9 == pytest.approx(-0.69732, abs=1e-5)
    assert example_cert.reason is None
    assert not example_cert.prop1_violated
    assert set(example_cert.sufficient_flags) == {"i", "ii", "iii", "iv"}


def test_certify_searches_when_no_pair_is_given(two_mode_family):
    cert = certify(two_mode_family)
    assert cert.feasible
    assert cert.lhs9 == pytest.approx(-0.25)


def test_certify_with_margin(example_family):
    assert certify(example_family, margin=0.5).feasible
    cert = certify(example_family, margin=1.0)
    assert not cert.feasible
    assert "not below" in cert.reason


def test_certify_rejects_double_window():
    text = TWO_MODE_FAMILY.replace("Delta = 1.5", "Delta = 2")
    cert = certify(load_family_text(text))
    assert not cert.feasible
    assert cert.prop1_violated
    assert "Prop. 1" in cert.reason


def test_certificate_dict_round_trip(example_cert):
    d = example_cert.to_dict()
    assert d["feasible"] is True
    again = DwellCertificate.from_dict(d)
    assert again == example_cert


def test_certificate_rejects_out_of_window_pair():
    with pytest.raises(ConditionDomainError):
        DwellCertificate(3.5, 0.73, 2.0, 3.5, 4.0, 3.0, 4.0, lhs9=-1.0)


# --- estimator conditions -----------------------------------------------------


def test_estimator_values_on_builtin_numbers(example_params):
    assert example_params.accepted
    expected = (-0.6964, -0.0277, -0.8125, -0.0857)
    for got, want in zip(example_params.scalar_values(), expected):
        assert got == pytest.approx(want, abs=5e-4)
    assert example_params.slack == pytest.approx(0.48)
    assert example_params.period == pytest.approx(7.2)


def test_estimator_rate_equal_to_decay_rate_is_rejected(example_family, example_cert):
    params = eval_estimator_conditions(example_family, example_cert, 3.5, 0.75, 3.0, 4.2)
    assert not params.accepted
    assert "10a_upper" in [v.name for v in params.violations]


def test_estimator_stable_phase_longer_than_dwell_is_rejected(example_family, example_cert):
    params = eval_estimator_conditions(example_family, example_cert, 3.0, 0.75, 3.6, 4.2)
    assert "13a" in [v.name for v in params.violations]


def test_estimator_growth_rate_below_family_rate_is_rejected(example_family, example_cert):
    params = eval_estimator_conditions(example_family, example_cert, 3.0, 0.5, 3.0, 4.2)
    assert "10b" in [v.name for v in params.violations]


def test_estimator_margin(example_family, example_cert):
    params = eval_estimator_conditions(example_family, example_cert, 3.0, 0.75, 3.0, 4.2, margin=0.05)
    assert [v.name for v in params.violations] == ["10b", "12"]
    assert params.to_dict()["accepted"] is False


def test_estimator_needs_a_feasible_certificate(example_family):
    bad = certify(example_family, margin=1.0)
    with pytest.raises(InfeasibleCertificateError):
        eval_estimator_conditions(example_family, bad, 3.0, 0.75, 3.0, 4.2)
    with pytest.raises(InfeasibleCertificateError):
        find_estimator_params(example_family, bad)


def test_find_estimator_params_builtin(example_family, example_cert):
    params = find_estimator_params(example_family, example_cert)
    assert params is not None
    assert params.accepted
    assert all(v < 0 for v in params.scalar_values())
    assert 0 < params.lambda_s_star < 3.5
    assert params.lambda_u_star >= 0.73
    assert 0 < params.delta_tilde <= example_cert.delta_check
    assert params.Delta_tilde >= example_cert.Delta_hat


def test_find_estimator_params_exhausts_grid():
    text = (
        TWO_MODE_FAMILY.replace("lambda_s = 2", "lambda_s = 1")
        .replace("lambda_u = 0.5", "lambda_u = 0.99")
        .replace("Delta = 1.5", "Delta = 1")
    )
    family = load_family_text(text)
    cert = certify(family)
    assert cert.feasible
    assert math.isclose(cert.lhs9, -0.005)
    assert find_estimator_params(family, cert) is None
