import csv
import numpy as np
import pytest
from app.helpers.Exceptions import CoverageGap, InvalidCover, NonDifferentiable
from app.helpers.Quadrature import SphereGrid
from app.models.Sphere import BandCover, CapCover, PartitionOfUnity, SphereFunction, SpherePoint, tapered_ramp
from app.schemas.Scenario import PartitionSpec
from app.services.SphereService import DEFAULT_CAP_RADIUS, SphereService

GRID = SphereGrid(16, 32)


def test_quadrature_integrates_against_normalized_area():
    assert GRID.integrate(np.ones(GRID.size)) == pytest.approx(1.0)
    assert GRID.integrate(SphereFunction.q3().on_grid(GRID)) == pytest.approx(0.0, abs=1e-14)
    # mean of q3^2 over the sphere is 1/3
    assert GRID.integrate(GRID.t ** 2) == pytest.approx(1.0 / 3.0)
    with pytest.raises(ValueError):
        SphereGrid(0, 8)


def test_bracket_of_coordinates(sphere_service):
    q1, q2, q3 = SphereFunction.q1(), SphereFunction.q2(), SphereFunction.q3()
    bracket = sphere_service.poisson_bracket(q1, q2).on_grid(GRID)
    assert np.allclose(bracket, -2.0 * GRID.t, atol=1e-12)
    assert np.allclose(sphere_service.poisson_bracket(q3, q3).on_grid(GRID), 0.0)


def test_bracket_is_antisymmetric_and_leibniz(sphere_service):
    q1, q2, q3 = SphereFunction.q1(), SphereFunction.q2(), SphereFunction.q3()
    fg = sphere_service.poisson_bracket(q1, q3).on_grid(GRID)
    gf = sphere_service.poisson_bracket(q3, q1).on_grid(GRID)
    assert np.allclose(fg, -gf, atol=1e-12)
    lhs = sphere_service.poisson_bracket(q1 * q3, q2).on_grid(GRID)
    rhs = (
        q1.on_grid(GRID) * sphere_service.poisson_bracket(q3, q2).on_grid(GRID)
        + q3.on_grid(GRID) * sphere_service.poisson_bracket(q1, q2).on_grid(GRID)
    )
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_sup_norm_refinement_reaches_the_pole(sphere_service):
    q3 = SphereFunction.q3()
    coarse = sphere_service.sup_norm(q3, GRID)
    assert coarse < 1.0
    assert sphere_service.sup_norm(q3, GRID, refine=True) == pytest.approx(1.0, abs=1e-12)
    assert sphere_service.phi_functional(SphereFunction.q1(), SphereFunction.q2(), GRID) == pytest.approx(2.0 * coarse)


def test_indicator_has_no_derivatives():
    upper = SphereFunction.indicator(lambda t, p: t > 0, name="north")
    assert np.array_equal(upper.on_grid(GRID), (GRID.t > 0).astype(float))
    with pytest.raises(NonDifferentiable):
        upper.partial_t(GRID.t, GRID.phi)


def test_rotation_shifts_azimuth():
    q1 = SphereFunction.q1()
    rotated = q1.rotated(0.5 * np.pi)
    assert np.allclose(rotated.on_grid(GRID), -SphereFunction.q2().on_grid(GRID), atol=1e-12)


def test_band_cover_validation(sphere_service):
    with pytest.raises(InvalidCover):
        sphere_service.band_cover(1, 0.2)
    with pytest.raises(InvalidCover):
        sphere_service.band_cover(3, 0.0)
    with pytest.raises(InvalidCover):
        sphere_service.band_cover(2, 5.0)
    cover = sphere_service.band_cover(4, 0.2)
    assert cover.intervals[0][0] == -1.0 and cover.intervals[-1][1] == 1.0
    assert all(b0 > a1 for (_, b0), (a1, _) in zip(cover.intervals, cover.intervals[1:]))


def test_band_partition_invariants(sphere_service):
    p = sphere_service.band_partition(sphere_service.band_cover(4, 0.2))
    residuals = sphere_service.validate_partition(p, SphereGrid(64, 8))
    assert residuals["min_value"] >= 0.0
    assert residuals["sum_deviation"] <= 1e-12
    assert residuals["outside_support"] == 0.0
    assert all(f.is_periodic() for f in p.functions)


def test_band_partition_rejects_gaps(sphere_service):
    with pytest.raises(InvalidCover):
        sphere_service.band_partition(BandCover([(-1.0, 0.0), (0.1, 1.0)]))


def test_mismatched_cover_is_rejected(sphere_service):
    cover = sphere_service.band_cover(3, 0.2)
    with pytest.raises(InvalidCover):
        PartitionOfUnity([SphereFunction.constant(1.0)], cover)


def test_cap_partition_on_tetrahedron(sphere_service):
    p = sphere_service.cap_partition(radius=1.25, grid=GRID)
    residuals = sphere_service.validate_partition(p, SphereGrid(32, 64))
    assert residuals["min_value"] >= 0.0
    assert residuals["sum_deviation"] <= 1e-12
    assert residuals["outside_support"] == 0.0
    assert p.cover.area_fraction() < 0.5


def test_small_antipodal_caps_leave_a_gap(sphere_service):
    centers = [SpherePoint(1.0, 0.0), SpherePoint(-1.0, 0.0)]
    with pytest.raises(CoverageGap) as info:
        sphere_service.cap_partition(centers, 0.5, GRID)
    assert info.value.coverage == 0.0
    assert abs(info.value.worst_point[0]) < 0.9


def test_nu_c_vanishes_for_bands_and_not_for_caps(sphere_service):
    bands = sphere_service.band_partition(sphere_service.band_cover(3, 0.4))
    flat = sphere_service.nu_c(bands, GRID)
    assert flat["value"] == 0.0 and flat["point"] is None
    caps = sphere_service.cap_partition(grid=GRID)
    result = sphere_service.nu_c(caps, GRID)
    assert result["value"] > 0.0 and result["exact"]
    t, phi = result["point"]
    b = sphere_service.bracket_tensor(caps, GRID)
    idx = int(np.flatnonzero((GRID.t == t) & (GRID.phi == phi))[0])
    x, y = np.array(result["x"]), np.array(result["y"])
    assert result["value"] == pytest.approx(abs(x @ b[idx] @ y))


def test_bracket_tensor_is_antisymmetric(sphere_service):
    caps = sphere_service.cap_partition(grid=GRID)
    b = sphere_service.bracket_tensor(caps, GRID)
    assert np.allclose(b, -np.transpose(b, (0, 2, 1)))


def test_fibonacci_centers_and_covering_radius(sphere_service):
    centers = sphere_service.fibonacci_centers(12)
    assert len(centers) == 12 and all(-1.0 < c.t < 1.0 for c in centers)
    tetra = sphere_service.covering_radius(sphere_service.tetrahedral_centers())
    exact = float(np.arccos(1.0 / 3.0))
    assert exact - 0.03 <= tetra <= exact + 1e-9
    assert sphere_service.covering_radius(centers) < tetra


def test_partition_from_spec(sphere_service):
    bands = sphere_service.partition_from_spec(PartitionSpec(type="bands", N=3))
    assert bands.n == 3 and bands.cover.kind == "bands"
    caps = sphere_service.partition_from_spec(PartitionSpec(type="caps", N=6), GRID)
    assert caps.n == 6 and caps.cover.radius > sphere_service.covering_radius(caps.cover.centers)
    with pytest.raises(ValueError):
        PartitionSpec(type="bands", N=1)
    with pytest.raises(ValueError):
        PartitionSpec(type="caps", N=3, centers=[(0.0, 0.0)])


def test_voronoi_cells_partition_the_sphere(sphere_service):
    cells = sphere_service.voronoi_cells(sphere_service.tetrahedral_centers())
    values = np.stack([c.on_grid(GRID) for c in cells])
    assert np.array_equal(values.sum(axis=0), np.ones(GRID.size))
    # equal areas by symmetry, up to the resolution of the grid
    assert np.allclose([GRID.integrate(v) for v in values], 0.25, atol=0.05)


def test_registration_probabilities(sphere_service):
    p = sphere_service.band_partition(sphere_service.band_cover(4, 0.2))
    probs = sphere_service.registration_probabilities(p, SphereFunction.constant(1.0), GRID)
    assert probs.sum() == pytest.approx(1.0)
    assert probs[0] == pytest.approx(probs[-1], abs=1e-12)
    north = sphere_service.registration_probabilities(p, SphereFunction.of_t(lambda t: 1.0 + t), GRID)
    assert north[-1] > north[0]
    with pytest.raises(ValueError):
        sphere_service.registration_probabilities(p, SphereFunction.q3(), GRID)


def test_classical_registration_povm(sphere_service):
    p = sphere_service.band_partition(sphere_service.band_cover(3, 0.4))
    povm = SphereService.classical_registration_povm(p, GRID)
    assert povm.is_diagonal and povm.n == 3 and povm.dim == GRID.size


def test_export_partition_csv(sphere_service, tmp_path):
    p = sphere_service.band_partition(sphere_service.band_cover(3, 0.4))
    path = SphereService.export_partition_csv(p, GRID, str(tmp_path / "bands.csv"))
    with open(path, encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["t", "phi", "f_1", "f_2", "f_3"]
    assert len(rows) == GRID.size + 1
    assert sum(float(v) for v in rows[1][2:]) == pytest.approx(1.0)


def test_sphere_point_coordinates():
    north = SpherePoint.from_cartesian([0.0, 0.0, 2.0])
    assert north.t == 1.0
    p = SpherePoint(-0.3, 7.0)
    assert 0.0 <= p.phi < 2.0 * np.pi
    back = SpherePoint.from_cartesian(p.cartesian())
    assert back.t == pytest.approx(p.t) and back.phi == pytest.approx(p.phi)
    assert np.linalg.norm(p.cartesian()) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        SpherePoint(1.5, 0.0)


def test_band_cover_of_three_has_one_central_band(sphere_service):
    cover = sphere_service.band_cover(3, 0.4)
    assert sum(1 for a, b in cover.intervals if a < 0.0 < b) == 1
    t = np.linspace(-1.0, 1.0, 2001)
    assert np.all(np.any([(t >= a) & (t <= b) for a, b in cover.intervals], axis=0))


def test_tapered_ramp():
    s = np.array([-0.2, 0.0, 0.05, 0.1, 0.3])
    values = tapered_ramp(s, 0.1)
    assert values[0] == 0.0 and values[1] == 0.0
    assert values[2] == pytest.approx(0.025 - 0.1 / (2.0 * np.pi))
    assert values[3] == pytest.approx(0.05) and values[4] == pytest.approx(0.25)
    assert np.all(np.diff(tapered_ramp(np.linspace(-0.1, 0.5, 200), 0.1)) >= 0.0)


def test_default_caps_are_displaceable_and_own_their_centres(sphere_service):
    p = sphere_service.cap_partition()
    assert p.cover.radius == DEFAULT_CAP_RADIUS
    assert p.cover.area_fraction() < 0.5
    for j, c in enumerate(p.cover.centers):
        assert p.functions[j].at(c) == pytest.approx(1.0)
    with pytest.raises(InvalidCover):
        sphere_service.cap_partition(radius=4.0)


def test_nu_c_is_invariant_under_relabelling(sphere_service):
    caps = sphere_service.cap_partition(grid=GRID)
    order = [2, 0, 3, 1]
    permuted = PartitionOfUnity(
        [caps.functions[i] for i in order], CapCover([caps.cover.centers[i] for i in order], caps.cover.radius)
    )
    assert sphere_service.nu_c(permuted, GRID)["value"] == pytest.approx(sphere_service.nu_c(caps, GRID)["value"], rel=1e-9)


def test_nu_c_of_default_caps_is_stable_under_refinement(sphere_service):
    caps = sphere_service.cap_partition()
    coarse = sphere_service.nu_c(caps, SphereGrid(64, 128))["value"]
    fine = sphere_service.nu_c(caps, SphereGrid(128, 256))["value"]
    assert coarse > 0.0
    assert abs(fine - coarse) <= 0.02 * fine
