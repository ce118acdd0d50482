"""Published invariant formulas and the two cubic test functions.

The two cubics have the same moments up to order 2 (all zero) and homogeneous
invariants of order 3 that coincide, yet they are not related by a rotation. Pure
invariants of the rank-3 irreducible part tell them apart through the member with
exponent 10.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from momenta.basis_builder import InvariantMember, InvariantSet, Mode, invariant_assignment
from momenta.formula import parse_polynomial
from momenta.moments import (
    Flavor,
    MomentSet,
    PolynomialField,
    spherical_moments,
    volumetric_moments,
)
from momenta.patterns import ContractionPattern, TensorSymbol
from momenta.tensor_core import SymTensor3

logger = logging.getLogger(__name__)

CUBIC_A = "3*x*y^2 - 3*x*z^2 - 3*sqrt(2)*y^2*z + sqrt(2)*z^3"
CUBIC_B = "3*x*y^2 - 3*x*z^2 + y^3 - 3*y^2*z - 3*y*z^2 + z^3"

# Unit of the order-3 ball moments of both cubics.
CUBIC_SCALE = 8.0 * math.pi / 315.0

# (coefficient, power): the value is coefficient * CUBIC_SCALE ** power.
ScaledValue = Tuple[float, int]


def cubic_a() -> PolynomialField:
    return parse_polynomial(CUBIC_A)


def cubic_b() -> PolynomialField:
    return parse_polynomial(CUBIC_B)


def _member(factors: str, labels: str) -> InvariantMember:
    pattern = ContractionPattern.parse(factors.split(), labels)
    role = "pure" if pattern.is_pure else "mixed"
    return InvariantMember(pattern, role, pattern.symbols)


def _members(rows: Sequence[Tuple[str, str]]) -> Tuple[InvariantMember, ...]:
    return tuple(_member(factors, labels) for factors, labels in rows)


def _power(symbol: str, n: int) -> str:
    return " ".join([symbol] * n)


_M3_HOMOGENEOUS = [
    (_power("M3", 2), "(1,1,2)(2,3,3)"),
    (_power("M3", 2), "(1,2,3)(1,2,3)"),
    (_power("M3", 4), "(1,1,2)(2,3,4)(3,5,5)(4,6,6)"),
    (_power("M3", 4), "(1,1,2)(2,3,4)(3,5,6)(4,5,6)"),
    (_power("M3", 4), "(1,2,3)(1,2,4)(3,5,6)(4,5,6)"),
]

_H33_PURE = [
    (_power("H3,3", 2), "(1,2,3)(1,2,3)"),
    (_power("H3,3", 4), "(1,2,3)(1,2,4)(3,5,6)(4,5,6)"),
    (_power("H3,3", 6), "(1,2,3)(2,3,4)(1,4,5)(5,6,7)(7,8,9)(6,8,9)"),
    (
        _power("H3,3", 10),
        "(1,2,3)(2,3,4)(1,4,5)(5,6,7)(6,7,8)(8,9,10)(9,10,11)(11,12,13)(13,14,15)(12,14,15)",
    ),
]

_PURE_UP_TO_3 = [
    ("H0,0", "()"),
    (_power("H1,1", 2), "(1)(1)"),
    ("H2,0", "()"),
    (_power("H2,2", 2), "(1,2)(1,2)"),
    (_power("H2,2", 3), "(1,2)(2,3)(1,3)"),
    (_power("H3,1", 2), "(1)(1)"),
] + _H33_PURE

_SPHERICAL_PURE_UP_TO_3 = [
    ("H0,0", "()"),
    (_power("H1,1", 2), "(1)(1)"),
    (_power("H2,2", 2), "(1,2)(1,2)"),
    (_power("H2,2", 3), "(1,2)(2,3)(1,3)"),
] + _H33_PURE


def _vector_with_h22(vector: str) -> List[Tuple[str, str]]:
    return [
        (f"{vector} {vector} H2,2", "(1)(2)(1,2)"),
        (f"{vector} {vector} H2,2 H2,2", "(1)(2)(1,3)(2,3)"),
    ]


def _vector_with_h33(vector: str) -> List[Tuple[str, str]]:
    return [
        (f"{vector} {vector} {vector} H3,3", "(1)(2)(3)(1,2,3)"),
        (f"{vector} {vector} H3,3 H3,3", "(1)(2)(1,3,4)(2,3,4)"),
    ]


_H22_WITH_H33 = [
    ("H2,2 H3,3 H3,3", "(1,2)(2,3,4)(1,3,4)"),
    ("H2,2 H2,2 H3,3 H3,3", "(1,2)(2,3)(1,4,5)(3,4,5)"),
    ("H2,2 H2,2 H3,3 H3,3", "(1,2)(3,4)(1,2,5)(3,4,5)"),
]


@dataclass(frozen=True)
class CatalogSet:
    """A published invariant set.

    Attributes:
        name: Short name used on the command line.
        description: One line describing the set.
        mode: The kind of set.
        flavor: The moments the set is evaluated on.
        lmax: The largest moment order used.
        members: The invariants, in the published order.
        robust: The anchoring part of a specific basis.
        values_a: Values of the members for the ball moments of CUBIC_A, if known.
        values_b: Values of the members for the ball moments of CUBIC_B, if known.
    """

    name: str
    description: str
    mode: Mode
    flavor: Flavor
    lmax: int
    members: Tuple[InvariantMember, ...]
    robust: Optional[TensorSymbol] = None
    values_a: Optional[Tuple[ScaledValue, ...]] = None
    values_b: Optional[Tuple[ScaledValue, ...]] = None

    @property
    def patterns(self) -> List[ContractionPattern]:
        return [m.pattern for m in self.members]

    def invariant_set(self) -> InvariantSet:
        return InvariantSet(self.mode, self.flavor, self.lmax, self.robust, 0, list(self.members))

    def expected_values(self, which: str) -> np.ndarray:
        values = {"a": self.values_a, "b": self.values_b}[which]
        if values is None:
            raise ValueError(f"No published values of {self.name} for cubic {which}")
        return np.array([coeff * CUBIC_SCALE**power for coeff, power in values])


def _catalog() -> Dict[str, CatalogSet]:
    h22 = TensorSymbol.irreducible(2, 2)
    h33 = TensorSymbol.irreducible(3, 3)
    homogeneous_7 = _M3_HOMOGENEOUS + [
        (_power("M3", 4), "(1,1,2)(2,3,4)(3,4,5)(5,6,6)"),
        (_power("M3", 6), "(1,1,2)(2,3,4)(3,4,5)(5,6,7)(6,7,8)(8,9,9)"),
    ]
    homogeneous_6 = _M3_HOMOGENEOUS + [
        (_power("M3", 4), "(1,2,3)(1,4,5)(2,5,6)(3,4,6)"),
    ]
    pure_values = ((14.0, 2), (92.0, 4), (32.0, 6))
    sets = [
        CatalogSet(
            "homogeneous-order3-7",
            "Seven homogeneous invariants of the order-3 moment tensor",
            Mode.LANGBEIN,
            Flavor.VOLUMETRIC,
            3,
            _members(homogeneous_7),
            values_a=((0, 0), (14.0, 2), (0, 0), (0, 0), (92.0, 4), (0, 0), (0, 0)),
            values_b=((0, 0), (14.0, 2), (0, 0), (0, 0), (92.0, 4), (0, 0), (0, 0)),
        ),
        CatalogSet(
            "homogeneous-order3-6",
            "Six independent homogeneous invariants of the order-3 moment tensor",
            Mode.LANGBEIN,
            Flavor.VOLUMETRIC,
            3,
            _members(homogeneous_6),
            values_a=((0, 0), (14.0, 2), (0, 0), (0, 0), (92.0, 4), (6.0, 4)),
            values_b=((0, 0), (14.0, 2), (0, 0), (0, 0), (92.0, 4), (6.0, 4)),
        ),
        CatalogSet(
            "irreducible-order3-pure",
            "The four pure invariants of the rank-3 part of the order-3 moment tensor",
            Mode.SPECIFIC,
            Flavor.VOLUMETRIC,
            3,
            _members(_H33_PURE),
            values_a=pure_values + ((1418.0, 10),),
            values_b=pure_values + ((1152.0, 10),),
        ),
        CatalogSet(
            "specific-lm3-robust22",
            "Specific basis up to order 3 anchored on the part (2,2)",
            Mode.SPECIFIC,
            Flavor.VOLUMETRIC,
            3,
            _members(
                _PURE_UP_TO_3
                + _vector_with_h22("H1,1")
                + _vector_with_h22("H3,1")
                + _H22_WITH_H33
            ),
            robust=h22,
        ),
        CatalogSet(
            "specific-lm3-robust33",
            "Specific basis up to order 3 anchored on the part (3,3)",
            Mode.SPECIFIC,
            Flavor.VOLUMETRIC,
            3,
            _members(
                _PURE_UP_TO_3
                + _vector_with_h33("H1,1")
                + _vector_with_h33("H3,1")
                + _H22_WITH_H33
            ),
            robust=h33,
        ),
        CatalogSet(
            "specific-lm3-spherical",
            "Specific basis of a spherical function up to order 3 anchored on (2,2)",
            Mode.SPECIFIC,
            Flavor.SPHERICAL,
            3,
            _members(_SPHERICAL_PURE_UP_TO_3 + _vector_with_h22("H1,1") + _H22_WITH_H33),
            robust=h22,
        ),
        CatalogSet(
            "minimal-lm3",
            "Minimal flexible set up to order 3",
            Mode.MINIMAL,
            Flavor.VOLUMETRIC,
            3,
            _members(
                _PURE_UP_TO_3
                + _vector_with_h33("H3,1")
                + [("H1,1 H3,1", "(1)(1)")]
                + _vector_with_h33("H1,1")
                + _vector_with_h22("H3,1")
                + _H22_WITH_H33
                + _vector_with_h22("H1,1")
            ),
        ),
        CatalogSet(
            "minimal-lm3-spherical",
            "Minimal flexible set of a spherical function up to order 3",
            Mode.MINIMAL,
            Flavor.SPHERICAL,
            3,
            _members(
                _SPHERICAL_PURE_UP_TO_3
                + _vector_with_h22("H1,1")
                + _H22_WITH_H33
                + _vector_with_h33("H1,1")
            ),
        ),
    ]
    return {s.name: s for s in sets}


CATALOG = _catalog()


def get_catalog_set(name: str) -> CatalogSet:
    try:
        return CATALOG[name]
    except KeyError:
        raise ValueError(
            f"Unknown catalog set {name!r}, available: {', '.join(CATALOG)}"
        ) from None


# Sets compared by the discrimination demo, in report order.
DISCRIMINATION_SETS = (
    "homogeneous-order3-7",
    "homogeneous-order3-6",
    "irreducible-order3-pure",
)


def cubic_moments(f: PolynomialField, flavor: Flavor = Flavor.VOLUMETRIC) -> MomentSet:
    if flavor == Flavor.SPHERICAL:
        return spherical_moments(f, 3)
    return volumetric_moments(f, 3)


def cubic_unit(flavor: Flavor) -> float:
    """The scale of the order-3 moments of the cubics. Sphere integrals of degree-6
    monomials are 9 times the ball integrals."""
    if flavor == Flavor.SPHERICAL:
        return 9.0 * CUBIC_SCALE
    return CUBIC_SCALE


@dataclass
class SetComparison:
    """Values of one catalog set for two fields.

    Attributes:
        catalog_set: The compared set.
        values_a: Member values for the first field.
        values_b: Member values for the second field.
        scales: Per member, the product of the norms of its factors. Differences are
            measured relative to it, so members vanishing for both fields compare equal.
    """

    catalog_set: CatalogSet
    values_a: np.ndarray
    values_b: np.ndarray
    scales: np.ndarray

    def relative_differences(self) -> np.ndarray:
        return np.abs(self.values_a - self.values_b) / self.scales

    def differing_members(self, tol: float = 1e-8) -> List[int]:
        """0-based indices of the members that tell the fields apart."""
        return [int(i) for i in np.nonzero(self.relative_differences() > tol)[0]]

    def distinguished(self, tol: float = 1e-8) -> bool:
        return bool(self.differing_members(tol))


def _factor_scale(
    pattern: ContractionPattern, *assignments: Mapping[TensorSymbol, SymTensor3]
) -> float:
    scale = 1.0
    for s in pattern.factors:
        scale *= max(max(a[s].norm() for a in assignments), 1e-300)
    return scale


def compare_fields(
    f: PolynomialField,
    g: PolynomialField,
    flavor: Flavor = Flavor.VOLUMETRIC,
    names: Sequence[str] = DISCRIMINATION_SETS,
) -> List[SetComparison]:
    """Evaluate catalog sets on the order-3 moments of two fields."""
    assignment_f = invariant_assignment(cubic_moments(f, flavor))
    assignment_g = invariant_assignment(cubic_moments(g, flavor))
    result = []
    for name in names:
        catalog_set = get_catalog_set(name)
        patterns = catalog_set.patterns
        result.append(
            SetComparison(
                catalog_set,
                np.array([p.evaluate(assignment_f) for p in patterns]),
                np.array([p.evaluate(assignment_g) for p in patterns]),
                np.array([_factor_scale(p, assignment_f, assignment_g) for p in patterns]),
            )
        )
        logger.debug("Compared %s: %s", name, result[-1].relative_differences())
    return result
