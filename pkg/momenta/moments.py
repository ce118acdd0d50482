"""Moment tensors of scalar functions over the unit ball and the unit sphere."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from momenta.tensor_core import Rotation3, SymTensor3, multi_indices, rotate
from momenta.utils import SCHEMA, check_schema

logger = logging.getLogger(__name__)

Exponents = Tuple[int, int, int]

DEFAULT_MAX_ORDER = 8
MIN_GRID_RESOLUTION = 8
VOXEL_MAGIC = b"MOMV"
VOXEL_HEADER_SIZE = 16


class FlavorMismatch(ValueError):
    """Raised when volumetric and spherical data are mixed up."""


class Flavor(Enum):
    VOLUMETRIC = "volumetric"
    SPHERICAL = "spherical"

    @staticmethod
    def from_string(s: str) -> "Flavor":
        s = s.lower()
        if s in ("volumetric", "vol", "v", "ball"):
            return Flavor.VOLUMETRIC
        elif s in ("spherical", "sph", "s", "sphere"):
            return Flavor.SPHERICAL
        else:
            raise ValueError(f"Unsupported flavor: {s}")

    def __str__(self):
        return str(self.value)


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


@lru_cache(maxsize=None)
def sphere_monomial_integral(a: int, b: int, c: int) -> float:
    """Integral of x^a y^b z^c over the unit sphere."""
    if a % 2 or b % 2 or c % 2:
        return 0.0
    num = _double_factorial(a - 1) * _double_factorial(b - 1) * _double_factorial(c - 1)
    return 4.0 * math.pi * num / _double_factorial(a + b + c + 1)


def ball_monomial_integral(a: int, b: int, c: int) -> float:
    """Integral of x^a y^b z^c over the unit ball."""
    return sphere_monomial_integral(a, b, c) / (a + b + c + 3)


_VARIABLES = ("x", "y", "z")


@dataclass(frozen=True)
class PolynomialField:
    """A polynomial in x, y, z, kept as a canonical tuple of (coefficient, exponents)
    terms: duplicates merged, zero terms dropped, sorted by descending degree and then
    descending exponents."""

    terms: Tuple[Tuple[float, Exponents], ...] = ()

    def __post_init__(self):
        merged: Dict[Exponents, float] = {}
        for coeff, exps in self.terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != 3 or any(e < 0 for e in exps):
                raise ValueError(f"Invalid exponents: {exps}")
            if not math.isfinite(float(coeff)):
                raise ValueError(f"Coefficient must be finite, got {coeff}")
            merged[exps] = merged.get(exps, 0.0) + float(coeff)
        canonical = sorted(
            ((c, e) for e, c in merged.items() if c != 0.0),
            key=lambda t: (-sum(t[1]), -t[1][0], -t[1][1]),
        )
        object.__setattr__(self, "terms", tuple(canonical))

    @staticmethod
    def constant(value: float) -> "PolynomialField":
        return PolynomialField(((value, (0, 0, 0)),))

    @staticmethod
    def variable(name: str) -> "PolynomialField":
        if name not in _VARIABLES:
            raise ValueError(f"Unknown variable: {name}")
        exps = tuple(1 if v == name else 0 for v in _VARIABLES)
        return PolynomialField(((1.0, exps),))

    @property
    def degree(self) -> int:
        return max((sum(e) for _, e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(e == (0, 0, 0) for _, e in self.terms)

    def constant_value(self) -> float:
        if not self.is_constant():
            raise ValueError(f"Not a constant: {self}")
        return sum(c for c, _ in self.terms)

    def __add__(self, other: "PolynomialField") -> "PolynomialField":
        return PolynomialField(self.terms + other.terms)

    def __neg__(self) -> "PolynomialField":
        return PolynomialField(tuple((-c, e) for c, e in self.terms))

    def __pos__(self) -> "PolynomialField":
        return self

    def __sub__(self, other: "PolynomialField") -> "PolynomialField":
        return self + (-other)

    def __mul__(self, other: Union["PolynomialField", float]) -> "PolynomialField":
        if not isinstance(other, PolynomialField):
            return PolynomialField(tuple((c * float(other), e) for c, e in self.terms))
        return PolynomialField(
            tuple(
                (c1 * c2, (e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2]))
                for c1, e1 in self.terms
                for c2, e2 in other.terms
            )
        )

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "PolynomialField":
        if n < 0:
            raise ValueError(f"Negative powers are not polynomials: {n}")
        result = PolynomialField.constant(1.0)
        for _ in range(n):
            result = result * self
        return result

    def evaluate(self, x, y, z) -> np.ndarray:
        x, y, z = np.asarray(x, float), np.asarray(y, float), np.asarray(z, float)
        result = np.zeros(np.broadcast(x, y, z).shape)
        for c, (a, b, e) in self.terms:
            result = result + c * x**a * y**b * z**e
        return result

    def rotated(self, rotation: Rotation3) -> "PolynomialField":
        """The polynomial f(A^-1 x), exactly."""
        m = rotation.matrix
        # (A^T x)_i = sum_j A_ji x_j
        linear = [
            PolynomialField(
                tuple((m[j, i], tuple(int(k == j) for k in range(3))) for j in range(3))
            )
            for i in range(3)
        ]
        result = PolynomialField()
        for c, (a, b, e) in self.terms:
            result = result + (linear[0] ** a) * (linear[1] ** b) * (linear[2] ** e) * c
        return result

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for c, exps in self.terms:
            factors = [repr(c)]
            for name, e in zip(_VARIABLES, exps):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            parts.append("*".join(factors))
        return " + ".join(parts).replace("+ -", "- ")


@dataclass(frozen=True, eq=False)
class SampledField:
    """Sampled input data.

    Attributes:
        kind: VOLUMETRIC for a voxel grid over [-1, 1]^3 (values indexed [ix, iy, iz],
            voxel centers at -1 + (i + 0.5) * 2 / n) or SPHERICAL for a list of
            directions with quadrature weights.
        values: The grid or the per-sample values.
        thetas: Polar angles of the samples (spherical only).
        phis: Azimuthal angles of the samples (spherical only).
        weights: Quadrature weights of the samples, summing to 4*pi (spherical only).
    """

    kind: Flavor
    values: np.ndarray
    thetas: Optional[np.ndarray] = None
    phis: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if self.kind == Flavor.VOLUMETRIC:
            n = values.shape[0] if values.ndim == 3 else 0
            if values.shape != (n, n, n):
                raise ValueError(f"A voxel grid must be a cube, got shape {values.shape}")
            if n < MIN_GRID_RESOLUTION:
                raise ValueError(
                    f"Grid resolution must be at least {MIN_GRID_RESOLUTION}, got {n}"
                )
            return
        if self.thetas is None or self.phis is None or self.weights is None:
            raise ValueError("Spherical samples need thetas, phis and weights")
        arrays = [np.asarray(a, dtype=float).reshape(-1) for a in (self.thetas, self.phis, self.weights)]
        if any(a.shape != values.reshape(-1).shape for a in arrays):
            raise ValueError("Spherical sample arrays must have the same length")
        object.__setattr__(self, "values", values.reshape(-1))
        for name, arr in zip(("thetas", "phis", "weights"), arrays):
            object.__setattr__(self, name, arr)
        total = float(np.sum(arrays[2]))
        if abs(total - 4.0 * math.pi) > 1e-6:
            raise ValueError(f"Spherical weights must sum to 4*pi, got {total}")

    @property
    def resolution(self) -> int:
        if self.kind != Flavor.VOLUMETRIC:
            raise FlavorMismatch("Spherical samples have no grid resolution")
        return self.values.shape[0]

    @staticmethod
    def voxel_centers(n: int) -> np.ndarray:
        return -1.0 + (np.arange(n) + 0.5) * (2.0 / n)

    @staticmethod
    def rasterize(f: PolynomialField, n: int) -> "SampledField":
        """Sample `f` at the voxel centers of an n^3 grid."""
        centers = SampledField.voxel_centers(n)
        x, y, z = np.meshgrid(centers, centers, centers, indexing="ij")
        return SampledField(Flavor.VOLUMETRIC, f.evaluate(x, y, z))

    @staticmethod
    def spherical_grid(
        f: Union[PolynomialField, Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]],
        n_theta: int = 32,
        n_phi: int = 64,
    ) -> "SampledField":
        """Gauss-Legendre nodes in cos(theta) times uniform nodes in phi."""
        nodes, gl_weights = np.polynomial.legendre.leggauss(n_theta)
        thetas = np.arccos(nodes)
        phis = 2.0 * math.pi * np.arange(n_phi) / n_phi
        tt, pp = np.meshgrid(thetas, phis, indexing="ij")
        weights = np.repeat(gl_weights, n_phi) * (2.0 * math.pi / n_phi)
        tt, pp = tt.reshape(-1), pp.reshape(-1)
        x, y, z = _unit_vectors(tt, pp)
        evaluate = f.evaluate if isinstance(f, PolynomialField) else f
        return SampledField(Flavor.SPHERICAL, evaluate(x, y, z), tt, pp, weights)

    @staticmethod
    def from_voxel_file(path: str) -> "SampledField":
        """Read a voxel file: "MOMV", little-endian u32 n, padding up to 16 bytes,
        then n^3 little-endian float32 values with x varying fastest."""
        with open(path, "rb") as f:
            data = f.read()
        if len(data) < VOXEL_HEADER_SIZE or data[:4] != VOXEL_MAGIC:
            raise ValueError(f"Not a voxel file (bad magic): {path}")
        n = int(np.frombuffer(data, dtype="<u4", count=1, offset=4)[0])
        expected = VOXEL_HEADER_SIZE + 4 * n**3
        if len(data) != expected:
            raise ValueError(
                f"Voxel file {path} has {len(data)} bytes, expected {expected} for n={n}"
            )
        values = np.frombuffer(data, dtype="<f4", offset=VOXEL_HEADER_SIZE)
        # C order of (z, y, x) puts x fastest.
        grid = values.reshape(n, n, n).transpose(2, 1, 0).astype(float)
        return SampledField(Flavor.VOLUMETRIC, grid)

    def to_voxel_file(self, path: str) -> None:
        n = self.resolution
        header = VOXEL_MAGIC + np.array([n], dtype="<u4").tobytes()
        header += b"\0" * (VOXEL_HEADER_SIZE - len(header))
        payload = self.values.transpose(2, 1, 0).astype("<f4").tobytes()
        with open(path, "wb") as f:
            f.write(header + payload)

    @staticmethod
    def from_sample_file(path: str) -> "SampledField":
        """Read spherical samples, one `theta phi value weight` line each."""
        table = np.loadtxt(path, dtype=float, ndmin=2, comments="#")
        if table.shape[1] != 4:
            raise ValueError(
                f"Sample file {path} must have 4 columns (theta phi value weight),"
                f" got {table.shape[1]}"
            )
        return SampledField(
            Flavor.SPHERICAL, table[:, 2], table[:, 0], table[:, 1], table[:, 3]
        )


def _unit_vectors(thetas: np.ndarray, phis: np.ndarray) -> Tuple[np.ndarray, ...]:
    st = np.sin(thetas)
    return st * np.cos(phis), st * np.sin(phis), np.cos(thetas)


@dataclass(frozen=True, eq=False)
class MomentSet:
    """Moment tensors of orders 0..lmax of one function."""

    flavor: Flavor
    tensors: Mapping[int, SymTensor3] = field(default_factory=dict)

    def __post_init__(self):
        flavor = self.flavor
        if isinstance(flavor, str):
            flavor = Flavor.from_string(flavor)
        object.__setattr__(self, "flavor", flavor)
        tensors = {int(k): v for k, v in sorted(self.tensors.items())}
        if list(tensors) != list(range(len(tensors))):
            raise ValueError(f"Moment orders must be 0..lmax, got {list(tensors)}")
        for order, t in tensors.items():
            if t.order != order:
                raise ValueError(f"Moment of order {order} holds a tensor of order {t.order}")
        object.__setattr__(self, "tensors", tensors)

    @property
    def lmax(self) -> int:
        return len(self.tensors) - 1

    def __getitem__(self, order: int) -> SymTensor3:
        return self.tensors[order]

    @staticmethod
    def zeros(lmax: int, flavor: Flavor = Flavor.VOLUMETRIC) -> "MomentSet":
        return MomentSet(flavor, {k: SymTensor3.zeros(k) for k in range(lmax + 1)})

    def truncated(self, lmax: int) -> "MomentSet":
        if lmax > self.lmax:
            raise ValueError(f"Cannot truncate moments up to {self.lmax} to {lmax}")
        return MomentSet(self.flavor, {k: self.tensors[k] for k in range(lmax + 1)})

    def rotated(self, rotation: Rotation3) -> "MomentSet":
        return MomentSet(self.flavor, {k: rotate(t, rotation) for k, t in self.tensors.items()})

    def allclose(self, other: "MomentSet", rtol: float = 1e-10, atol: float = 1e-12) -> bool:
        return (
            self.flavor == other.flavor
            and self.lmax == other.lmax
            and all(self[k].allclose(other[k], rtol, atol) for k in self.tensors)
        )

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "kind": "moments",
            "flavor": str(self.flavor),
            "lmax": self.lmax,
            "tensors": {str(k): t.coeffs.tolist() for k, t in self.tensors.items()},
        }

    @staticmethod
    def from_json(obj: dict) -> "MomentSet":
        check_schema(obj, "moments", ("flavor", "lmax", "tensors"))
        tensors = {int(k): SymTensor3(int(k), v) for k, v in obj["tensors"].items()}
        result = MomentSet(Flavor.from_string(obj["flavor"]), tensors)
        if result.lmax != int(obj["lmax"]):
            raise ValueError(f"lmax {obj['lmax']} does not match the stored tensors")
        return result


def _check_lmax(lmax: int, max_order: int) -> None:
    if not 0 <= lmax <= max_order:
        raise ValueError(f"lmax must be in [0, {max_order}], got {lmax}")


def volumetric_moments(
    f: PolynomialField,
    lmax: int,
    *,
    max_order: int = DEFAULT_MAX_ORDER,
    radially_constant: bool = False,
) -> MomentSet:
    """Exact moments of a polynomial over the unit ball.

    With `radially_constant`, the moments of f(x/|x|) are computed instead, the
    extension of f from the sphere that is constant along rays."""
    _check_lmax(lmax, max_order)
    tensors = {}
    for order in range(lmax + 1):
        coeffs = []
        for a, b, c in multi_indices(order):
            total = 0.0
            for coeff, (p, q, r) in f.terms:
                if radially_constant:
                    total += coeff * sphere_monomial_integral(a + p, b + q, c + r) / (order + 3)
                else:
                    total += coeff * ball_monomial_integral(a + p, b + q, c + r)
            coeffs.append(total)
        tensors[order] = SymTensor3(order, coeffs)
    return MomentSet(Flavor.VOLUMETRIC, tensors)


def spherical_moments(
    source: Union[PolynomialField, SampledField],
    lmax: int,
    *,
    max_order: int = DEFAULT_MAX_ORDER,
) -> MomentSet:
    """Moments over the unit sphere, exact for polynomials and by quadrature for
    spherical samples."""
    _check_lmax(lmax, max_order)
    if isinstance(source, SampledField):
        if source.kind != Flavor.SPHERICAL:
            raise FlavorMismatch("Spherical moments need spherical samples, got a voxel grid")
        x, y, z = _unit_vectors(source.thetas, source.phis)
        w = source.values * source.weights
        return MomentSet(Flavor.SPHERICAL, _sum_moments(x, y, z, w, lmax))
    tensors = {}
    for order in range(lmax + 1):
        coeffs = [
            sum(
                coeff * sphere_monomial_integral(a + p, b + q, c + r)
                for coeff, (p, q, r) in source.terms
            )
            for a, b, c in multi_indices(order)
        ]
        tensors[order] = SymTensor3(order, coeffs)
    return MomentSet(Flavor.SPHERICAL, tensors)


def _sum_moments(x, y, z, w, lmax: int) -> Dict[int, SymTensor3]:
    powers = [[np.ones_like(v)] for v in (x, y, z)]
    for pw, v in zip(powers, (x, y, z)):
        for _ in range(lmax):
            pw.append(pw[-1] * v)
    tensors = {}
    for order in range(lmax + 1):
        coeffs = [
            float(np.sum(w * powers[0][a] * powers[1][b] * powers[2][c]))
            for a, b, c in multi_indices(order)
        ]
        tensors[order] = SymTensor3(order, coeffs)
    return tensors


def moments_from_grid(
    grid: SampledField,
    lmax: int,
    *,
    rescale: bool = False,
    max_order: int = DEFAULT_MAX_ORDER,
) -> MomentSet:
    """Midpoint-rule moments of a voxel grid over [-1, 1]^3.

    Voxels whose centers lie outside the unit ball are dropped. With `rescale`, all
    voxels are used and coordinates are divided by the largest center radius of a
    voxel with a non-zero value, so the support is mapped into the unit ball."""
    _check_lmax(lmax, max_order)
    if grid.kind != Flavor.VOLUMETRIC:
        raise FlavorMismatch("Grid moments need a voxel grid, got spherical samples")
    n = grid.resolution
    centers = SampledField.voxel_centers(n)
    x, y, z = np.meshgrid(centers, centers, centers, indexing="ij")
    radius = np.sqrt(x**2 + y**2 + z**2)
    dv = (2.0 / n) ** 3
    values = grid.values
    if rescale:
        support = values != 0.0
        r_max = float(radius[support].max()) if np.any(support) else 1.0
        logger.debug("Rescaling grid coordinates by %s", r_max)
        x, y, z = x / r_max, y / r_max, z / r_max
        dv /= r_max**3
        mask = np.ones(values.shape, dtype=bool)
    else:
        mask = radius <= 1.0
        if np.any(values[~mask] != 0.0):
            logger.warning(
                "The grid has non-zero values outside the unit ball, they are ignored"
                " (use rescaling to map the support into the ball)"
            )
    return MomentSet(
        Flavor.VOLUMETRIC,
        _sum_moments(x[mask], y[mask], z[mask], values[mask] * dv, lmax),
    )


@dataclass
class TraceReport:
    """Relative deviations from the trace relation, per order >= 2."""

    flavor: Flavor
    deviations: Dict[int, float]

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values(), default=0.0)

    def holds(self, tol: float = 1e-10) -> bool:
        return self.max_deviation <= tol


def trace_factor(order: int, flavor: Flavor) -> float:
    """Ratio between the trace of an order-l moment and the order-(l-2) moment for
    functions that do not depend on the radius."""
    if flavor == Flavor.SPHERICAL:
        return 1.0
    return (order + 1) / (order + 3)


def check_trace_relation(moments: MomentSet, flavor: Optional[Flavor] = None) -> TraceReport:
    """Compare the trace of every moment with the moment two orders below. The
    relation only holds for functions that do not depend on the radius."""
    flavor = flavor or moments.flavor
    deviations = {}
    for order in range(2, moments.lmax + 1):
        lhs = moments[order].trace().coeffs
        rhs = trace_factor(order, flavor) * moments[order - 2].coeffs
        scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)))
        deviations[order] = float(np.max(np.abs(lhs - rhs)) / scale) if scale > 0 else 0.0
    return TraceReport(flavor, deviations)
