from collections import Counter

import numpy as np
import pytest

from momenta.basis_builder import (
    InvariantSet,
    Mode,
    evaluate_set,
    expected_counts,
    invariant_assignment,
    minimal_flexible_set,
    specific_flexible_basis,
)
from momenta.catalog import (
    CATALOG,
    CUBIC_SCALE,
    DISCRIMINATION_SETS,
    SetComparison,
    compare_fields,
    cubic_a,
    cubic_b,
    cubic_moments,
    cubic_unit,
    get_catalog_set,
)
from momenta.independence import assign_random, jacobian_rank
from momenta.irreducible import random_irreducible
from momenta.moments import Flavor, PolynomialField, spherical_moments, volumetric_moments
from momenta.tensor_core import Rotation3, multi_indices, multiplicities


def _check_published_values(name, which, moments):
    catalog_set = get_catalog_set(name)
    published = catalog_set.values_a if which == "a" else catalog_set.values_b
    assignment = invariant_assignment(moments)
    for member, (coeff, power) in zip(catalog_set.members, published):
        value = member.pattern.evaluate(assignment)
        if coeff == 0:
            assert abs(value) <= 1e-12 * CUBIC_SCALE ** len(member.pattern.factors)
        else:
            assert value / CUBIC_SCALE**power == pytest.approx(coeff, rel=1e-6)


@pytest.mark.parametrize("name", DISCRIMINATION_SETS)
@pytest.mark.parametrize("which", ["a", "b"])
def test_published_values(name, which):
    f = cubic_a() if which == "a" else cubic_b()
    _check_published_values(name, which, volumetric_moments(f, 3))


def test_expected_values():
    pure = get_catalog_set("irreducible-order3-pure")
    assert pure.expected_values("a")[-1] == pytest.approx(1418.0 * CUBIC_SCALE**10)
    assert pure.expected_values("b")[-1] == pytest.approx(1152.0 * CUBIC_SCALE**10)
    with pytest.raises(ValueError, match="No published values"):
        get_catalog_set("minimal-lm3").expected_values("a")


def test_evaluate_set_matches_published_values():
    pure = get_catalog_set("irreducible-order3-pure")
    values = evaluate_set(pure.invariant_set(), volumetric_moments(cubic_b(), 3))
    assert np.allclose(values, pure.expected_values("b"), rtol=1e-6, atol=0.0)


def test_get_catalog_set():
    assert get_catalog_set("minimal-lm3").mode == Mode.MINIMAL
    with pytest.raises(ValueError, match="Unknown catalog set 'nope'"):
        get_catalog_set("nope")


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_sets_are_independent(name):
    catalog_set = CATALOG[name]
    symbols = {s for p in catalog_set.patterns for s in p.factors}
    rank = jacobian_rank(catalog_set.patterns, assign_random(symbols, seed=2))
    if name == "homogeneous-order3-7":
        assert rank < len(catalog_set.members)
    elif catalog_set.mode == Mode.MINIMAL:
        # The minimal flexible set is complete but not independent.
        dof = expected_counts(catalog_set.lmax, catalog_set.flavor, Mode.SPECIFIC).total
        assert rank == dof < len(catalog_set.members)
    else:
        assert rank == len(catalog_set.members)
    assert all(p.graph().is_connected() for p in catalog_set.patterns)


@pytest.mark.parametrize(
    "name, flavor, mode",
    [
        ("specific-lm3-robust22", Flavor.VOLUMETRIC, Mode.SPECIFIC),
        ("specific-lm3-robust33", Flavor.VOLUMETRIC, Mode.SPECIFIC),
        ("specific-lm3-spherical", Flavor.SPHERICAL, Mode.SPECIFIC),
        ("minimal-lm3", Flavor.VOLUMETRIC, Mode.MINIMAL),
        ("minimal-lm3-spherical", Flavor.SPHERICAL, Mode.MINIMAL),
    ],
)
def test_catalog_set_sizes(name, flavor, mode):
    catalog_set = CATALOG[name]
    assert catalog_set.flavor == flavor
    assert catalog_set.invariant_set().counts() == expected_counts(3, flavor, mode)


@pytest.mark.parametrize(
    "name, build",
    [
        ("specific-lm3-robust22", lambda: specific_flexible_basis(3)),
        ("specific-lm3-robust33", lambda: specific_flexible_basis(3, robust=(3, 3))),
        ("specific-lm3-spherical", lambda: specific_flexible_basis(3, Flavor.SPHERICAL)),
        ("minimal-lm3", lambda: minimal_flexible_set(3)),
        ("minimal-lm3-spherical", lambda: minimal_flexible_set(3, Flavor.SPHERICAL)),
    ],
)
def test_generated_set_agrees_with_catalog(name, build):
    catalog_set = get_catalog_set(name)
    generated = build()
    assert generated.robust == catalog_set.robust
    # Same invariants up to graph isomorphism, possibly in another order.
    assert Counter(p.canonical_key() for p in generated.patterns) == Counter(
        p.canonical_key() for p in catalog_set.patterns
    )
    assert Counter(m.role for m in generated.members) == Counter(
        m.role for m in catalog_set.members
    )


def test_catalog_set_json_round_trip():
    s = get_catalog_set("specific-lm3-robust33").invariant_set()
    again = InvariantSet.from_json(s.to_json())
    assert again.patterns == s.patterns
    assert str(again.robust) == "H3,3"


def test_cubic_units():
    assert volumetric_moments(cubic_a(), 3)[3][(1, 2, 0)] == pytest.approx(cubic_unit(Flavor.VOLUMETRIC))
    assert spherical_moments(cubic_a(), 3)[3][(1, 2, 0)] == pytest.approx(cubic_unit(Flavor.SPHERICAL))
    assert cubic_moments(cubic_b(), Flavor.SPHERICAL).flavor == Flavor.SPHERICAL
    assert cubic_moments(cubic_b()).lmax == 3


def test_compare_cubics():
    comparisons = compare_fields(cubic_a(), cubic_b())
    assert [c.catalog_set.name for c in comparisons] == list(DISCRIMINATION_SETS)
    homogeneous_7, homogeneous_6, pure = comparisons
    assert not homogeneous_7.distinguished()
    assert not homogeneous_6.distinguished()
    assert pure.distinguished()
    assert pure.differing_members() == [3]
    assert pure.relative_differences()[3] > 1e-3


def test_compare_cubics_on_the_sphere():
    comparisons = compare_fields(cubic_a(), cubic_b(), Flavor.SPHERICAL)
    assert not comparisons[0].distinguished()
    assert comparisons[2].differing_members() == [3]


def test_compare_rotated_field():
    f = cubic_a()
    r = Rotation3.random(np.random.default_rng(3), proper=False)
    for comparison in compare_fields(f, f.rotated(r)):
        assert not comparison.distinguished()


def _harmonic(t):
    """The harmonic polynomial t_ijk.. x_i x_j x_k .. of a traceless tensor."""
    return PolynomialField(
        tuple(
            (m * c, mi)
            for m, c, mi in zip(multiplicities(t.order), t.coeffs, multi_indices(t.order))
        )
    )


def _random_harmonics(rng):
    return [_harmonic(random_irreducible(order, order, rng).data) for order in range(4)]


def _spherical_descriptor(s, terms):
    return evaluate_set(s, spherical_moments(sum(terms, PolynomialField()), 3))


def test_spherical_descriptor_of_rotated_fields():
    s = specific_flexible_basis(3, Flavor.SPHERICAL)
    rng = np.random.default_rng(31)
    for k in range(20):
        f = sum(_random_harmonics(rng), PolynomialField())
        r = Rotation3.random(rng, proper=k % 2 == 0)
        values = evaluate_set(s, spherical_moments(f, 3))
        rotated = evaluate_set(s, spherical_moments(f.rotated(r), 3))
        atol = 1e-10 * max(1.0, float(np.abs(values).max()))
        assert np.allclose(rotated, values, rtol=1e-8, atol=atol), k


def test_spherical_mixed_members_fix_relative_orientation():
    s = specific_flexible_basis(3, Flavor.SPHERICAL)
    pure = np.array([m.role == "pure" for m in s.members])
    rng = np.random.default_rng(32)
    for k in range(20):
        terms = _random_harmonics(rng)
        # Turning only the degree-1 component keeps every part's pure invariants.
        turned = list(terms)
        turned[1] = terms[1].rotated(Rotation3.random(rng))
        a = _spherical_descriptor(s, terms)
        b = _spherical_descriptor(s, turned)
        atol = 1e-10 * max(1.0, float(np.abs(a).max()))
        assert np.allclose(a[pure], b[pure], rtol=1e-8, atol=atol), k
        assert not np.allclose(a[~pure], b[~pure], rtol=1e-6, atol=atol), k


def test_set_comparison_relative_differences():
    catalog_set = get_catalog_set("irreducible-order3-pure")
    c = SetComparison(
        catalog_set,
        np.array([1.0, 0.0, 2.0, 5.0]),
        np.array([1.0, 0.0, 2.5, 5.0]),
        np.array([1.0, 1.0, 1.0, 1e-20]),
    )
    assert c.differing_members() == [2]
    assert c.differing_members(tol=1.0) == []
    assert not c.distinguished(tol=1.0)
