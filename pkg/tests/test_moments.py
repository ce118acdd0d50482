import logging
import math

import numpy as np
import pytest

from momenta.catalog import CUBIC_SCALE, cubic_a, cubic_b
from momenta.formula import parse_polynomial
from momenta.moments import (
    Flavor,
    FlavorMismatch,
    MomentSet,
    PolynomialField,
    SampledField,
    ball_monomial_integral,
    check_trace_relation,
    moments_from_grid,
    sphere_monomial_integral,
    spherical_moments,
    trace_factor,
    volumetric_moments,
)
from momenta.tensor_core import Rotation3, SymTensor3
from momenta.utils import SchemaError


def test_flavor_from_string():
    assert Flavor.from_string("Spherical") == Flavor.SPHERICAL
    assert Flavor.from_string("ball") == Flavor.VOLUMETRIC
    assert str(Flavor.VOLUMETRIC) == "volumetric"
    with pytest.raises(ValueError, match="Unsupported flavor"):
        Flavor.from_string("cube")


def test_monomial_integrals():
    assert sphere_monomial_integral(0, 0, 0) == pytest.approx(4 * math.pi)
    assert sphere_monomial_integral(2, 0, 0) == pytest.approx(4 * math.pi / 3)
    assert sphere_monomial_integral(1, 2, 0) == 0.0
    assert ball_monomial_integral(0, 0, 0) == pytest.approx(4 * math.pi / 3)
    assert ball_monomial_integral(2, 2, 2) == pytest.approx(4 * math.pi / 945)


def test_polynomial_field_arithmetic():
    x = PolynomialField.variable("x")
    y = PolynomialField.variable("y")
    p = (x + y) ** 2 - x * y * 2.0
    assert p == x**2 + y**2
    assert p.degree == 2
    assert (p - p).is_zero()
    assert 2.0 * x == x + x
    with pytest.raises(ValueError):
        PolynomialField.variable("w")
    with pytest.raises(ValueError):
        x ** (-1)


def test_polynomial_field_evaluate():
    f = cubic_a()
    assert f.evaluate(1.0, 1.0, 0.0) == pytest.approx(3.0)
    values = f.evaluate(np.zeros(4), np.zeros(4), np.ones(4))
    assert np.allclose(values, math.sqrt(2.0))


def test_polynomial_field_rotated():
    rng = np.random.default_rng(1)
    r = Rotation3.random(rng)
    f = cubic_b()
    g = f.rotated(r)
    point = rng.standard_normal(3)
    # g(A p) = f(p)
    assert g.evaluate(*(r.matrix @ point)) == pytest.approx(float(f.evaluate(*point)))


def test_volumetric_moment_of_constant():
    moments = volumetric_moments(PolynomialField.constant(1.0), 0)
    assert moments.lmax == 0
    assert moments[0].value == pytest.approx(4 * math.pi / 3)


def test_volumetric_moments_of_cubic():
    moments = volumetric_moments(cubic_a(), 3)
    assert moments[3][(1, 2, 0)] == pytest.approx(CUBIC_SCALE, rel=1e-12)
    # Odd function: even orders vanish.
    assert np.allclose(moments[0].coeffs, 0.0)
    assert np.allclose(moments[2].coeffs, 0.0)


def test_cubics_have_vanishing_low_moments():
    for f in (cubic_a(), cubic_b()):
        moments = volumetric_moments(f, 3)
        for order in range(3):
            assert np.allclose(moments[order].coeffs, 0.0, atol=1e-15)


def test_moments_commute_with_rotation():
    rng = np.random.default_rng(2)
    f = parse_polynomial("x^2*y - 3*z + x*y*z + 1")
    for proper in (True, False):
        r = Rotation3.random(rng, proper=proper)
        direct = volumetric_moments(f.rotated(r), 4)
        assert direct.allclose(volumetric_moments(f, 4).rotated(r), rtol=1e-9, atol=1e-12)
        sphere = spherical_moments(f.rotated(r), 4)
        assert sphere.allclose(spherical_moments(f, 4).rotated(r), rtol=1e-9, atol=1e-12)


def test_lmax_range():
    with pytest.raises(ValueError, match="lmax"):
        volumetric_moments(PolynomialField.constant(1.0), 9)
    with pytest.raises(ValueError, match="lmax"):
        spherical_moments(PolynomialField.constant(1.0), -1)


def test_spherical_trace_relation():
    f = parse_polynomial("x^3 - 2*x*y + z^2 + 0.5")
    report = check_trace_relation(spherical_moments(f, 6))
    assert report.flavor == Flavor.SPHERICAL
    assert report.holds(1e-10)
    assert sorted(report.deviations) == [2, 3, 4, 5, 6]


@pytest.mark.parametrize("order", [2, 3, 4, 5])
def test_volumetric_trace_relation_for_radially_constant(order):
    f = parse_polynomial("x^3 - 2*x*y + z^2 + 0.5")
    moments = volumetric_moments(f, order, radially_constant=True)
    report = check_trace_relation(moments)
    assert report.holds(1e-10)
    assert trace_factor(order, Flavor.VOLUMETRIC) == pytest.approx((order + 1) / (order + 3))


def test_volumetric_trace_relation_fails_for_radial_dependence():
    report = check_trace_relation(volumetric_moments(cubic_a(), 5))
    assert not report.holds(1e-6)


def test_constant_satisfies_volumetric_trace_relation():
    assert check_trace_relation(volumetric_moments(PolynomialField.constant(1.0), 4)).holds()


def test_moment_set_validation():
    with pytest.raises(ValueError, match="0..lmax"):
        MomentSet(Flavor.VOLUMETRIC, {0: SymTensor3.scalar(1.0), 2: SymTensor3.zeros(2)})
    with pytest.raises(ValueError, match="holds a tensor of order"):
        MomentSet(Flavor.VOLUMETRIC, {0: SymTensor3.zeros(1)})


def test_moment_set_truncated_and_zeros():
    moments = volumetric_moments(cubic_b(), 4)
    assert moments.truncated(2).lmax == 2
    with pytest.raises(ValueError):
        moments.truncated(5)
    zeros = MomentSet.zeros(3, Flavor.SPHERICAL)
    assert zeros.lmax == 3
    assert zeros.flavor == Flavor.SPHERICAL


def test_moment_set_json():
    moments = volumetric_moments(cubic_a(), 3)
    again = MomentSet.from_json(moments.to_json())
    assert again.flavor == Flavor.VOLUMETRIC
    for order in range(4):
        assert np.array_equal(again[order].coeffs, moments[order].coeffs)
    obj = moments.to_json()
    obj["schema"] = "other/2"
    with pytest.raises(SchemaError, match="Unsupported schema"):
        MomentSet.from_json(obj)


def test_grid_moments_of_constant():
    grid = SampledField.rasterize(PolynomialField.constant(1.0), 48)
    moments = moments_from_grid(grid, 2)
    assert moments[0].value == pytest.approx(4 * math.pi / 3, rel=0.02)
    assert np.allclose(moments[1].coeffs, 0.0, atol=1e-12)


def test_grid_moments_of_cubic():
    f = cubic_a()
    exact = volumetric_moments(f, 3)[3]
    approx = moments_from_grid(SampledField.rasterize(f, 64), 3)[3]
    assert (approx - exact).norm() <= 0.1 * exact.norm()


def test_grid_warns_about_values_outside_ball(caplog):
    grid = SampledField.rasterize(PolynomialField.constant(1.0), 8)
    with caplog.at_level(logging.WARNING, logger="momenta"):
        moments_from_grid(grid, 0)
    assert "outside the unit ball" in caplog.text


def test_grid_rescale():
    n = 40
    centers = SampledField.voxel_centers(n)
    x, y, z = np.meshgrid(centers, centers, centers, indexing="ij")
    values = (np.sqrt(x**2 + y**2 + z**2) <= 0.5).astype(float)
    grid = SampledField(Flavor.VOLUMETRIC, values)
    plain = moments_from_grid(grid, 0)[0].value
    rescaled = moments_from_grid(grid, 0, rescale=True)[0].value
    assert plain == pytest.approx(4 * math.pi / 3 / 8, rel=0.08)
    assert rescaled == pytest.approx(4 * math.pi / 3, rel=0.1)


def test_sampled_field_validation():
    with pytest.raises(ValueError, match="cube"):
        SampledField(Flavor.VOLUMETRIC, np.zeros((8, 8, 4)))
    with pytest.raises(ValueError, match="at least 8"):
        SampledField(Flavor.VOLUMETRIC, np.zeros((4, 4, 4)))
    with pytest.raises(ValueError, match="4\\*pi"):
        SampledField(Flavor.SPHERICAL, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2))
    with pytest.raises(ValueError, match="thetas"):
        SampledField(Flavor.SPHERICAL, np.ones(2))


def test_flavor_mismatch_between_inputs():
    grid = SampledField.rasterize(PolynomialField.constant(1.0), 8)
    samples = SampledField.spherical_grid(PolynomialField.constant(1.0), 4, 8)
    with pytest.raises(FlavorMismatch):
        spherical_moments(grid, 2)
    with pytest.raises(FlavorMismatch):
        moments_from_grid(samples, 2)


def test_voxel_file_layout(tmp_path):
    n = 8
    values = np.zeros(n**3, dtype="<f4")
    values[1] = 2.0  # x = 1, y = 0, z = 0
    values[n] = 3.0  # x = 0, y = 1, z = 0
    header = b"MOMV" + np.array([n], dtype="<u4").tobytes() + b"\0" * 8
    path = tmp_path / "grid.vox"
    path.write_bytes(header + values.tobytes())
    grid = SampledField.from_voxel_file(str(path))
    assert grid.resolution == n
    assert grid.values[1, 0, 0] == 2.0
    assert grid.values[0, 1, 0] == 3.0

    out = tmp_path / "again.vox"
    grid.to_voxel_file(str(out))
    assert out.read_bytes() == path.read_bytes()


def test_voxel_file_errors(tmp_path):
    path = tmp_path / "bad.vox"
    path.write_bytes(b"NOPE" + b"\0" * 12)
    with pytest.raises(ValueError, match="bad magic"):
        SampledField.from_voxel_file(str(path))
    path.write_bytes(b"MOMV" + np.array([8], dtype="<u4").tobytes() + b"\0" * 8 + b"\0" * 4)
    with pytest.raises(ValueError, match="expected"):
        SampledField.from_voxel_file(str(path))
    with pytest.raises(OSError):
        SampledField.from_voxel_file(str(tmp_path / "missing.vox"))


def test_spherical_quadrature_is_exact_for_polynomials():
    f = parse_polynomial("x^3 - 2*x*y + z^2 + 0.5")
    samples = SampledField.spherical_grid(f)
    assert spherical_moments(samples, 4).allclose(spherical_moments(f, 4), rtol=1e-10, atol=1e-12)


def test_sample_file(tmp_path):
    f = cubic_b()
    samples = SampledField.spherical_grid(f, 12, 24)
    table = np.column_stack([samples.thetas, samples.phis, samples.values, samples.weights])
    path = tmp_path / "samples.txt"
    np.savetxt(path, table, fmt="%.17g", header="theta phi value weight")
    loaded = SampledField.from_sample_file(str(path))
    assert loaded.kind == Flavor.SPHERICAL
    assert spherical_moments(loaded, 3).allclose(spherical_moments(f, 3), rtol=1e-10, atol=1e-12)


def test_sample_file_wrong_columns(tmp_path):
    path = tmp_path / "samples.txt"
    path.write_text("0.1 0.2 0.3\n")
    with pytest.raises(ValueError, match="4 columns"):
        SampledField.from_sample_file(str(path))
