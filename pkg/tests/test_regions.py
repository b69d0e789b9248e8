import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcselect.regions import (
    Ball,
    BallComplement,
    HalfLine,
    Orthant,
    OrthantComplement,
    format_region_spec,
    parse_region_spec,
)


def test_contains_examples():
    assert Orthant([1, 1]).contains([1, 1])
    assert Ball([0, 0], 2).contains([0, 2])
    assert not Orthant([1, 1]).contains([2, 0.5])


def test_interior_examples():
    assert not Orthant([1, 1]).interior_contains([1, 1])
    assert Ball([0, 0], 2).interior_contains([0, 0])
    assert BallComplement([0, 0], 1).interior_contains([3, 0])


def test_distance_examples():
    assert Orthant([1, 1]).dist_to_complement([2, 3]) == 1.0
    assert Ball([0, 0], 2).dist_to_complement([0, 0]) == 2.0
    assert Orthant([1, 1]).dist_to_complement([0.5, 3]) == 0.0
    assert HalfLine(0.5).dist_to_complement(2.0) == 1.5
    # (c - z)+ = (1, 2) -> l1 3, l2 sqrt(5), linf 2
    oc = OrthantComplement([1, 1])
    assert oc.dist_to_complement([0, -1], 1) == 3.0
    assert oc.dist_to_complement([0, -1], 2) == pytest.approx(np.sqrt(5))
    assert oc.dist_to_complement([0, -1], np.inf) == 2.0


def test_boundary_point_examples():
    np.testing.assert_array_equal(Orthant([1, -0.2]).boundary_point(), [1, -0.2])
    np.testing.assert_array_equal(Ball([2, 2], 1.5).boundary_point(), [3.5, 2])
    np.testing.assert_array_equal(HalfLine(0).boundary_point(), [0.0])


def test_errors():
    with pytest.raises(ValueError):
        Ball([0, 0], 0.0)
    with pytest.raises(ValueError):
        BallComplement([0, 0], -1.0)
    with pytest.raises(ValueError):
        Ball([0, 0], 1).dist_to_complement([0, 0], 1)
    with pytest.raises(ValueError):
        Orthant([0, 0]).dist_to_complement([0, 0], 3)
    with pytest.raises(ValueError):
        Orthant([0, 0]).contains([0, 0, 0])


def _grid_distance(region, z, lim=4.0, step=0.02):
    """Brute-force inf over complement grid points of ||z - s||_2."""
    g = np.arange(-lim, lim + step / 2, step)
    S = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
    outside = ~region.contains(S)
    if not region.contains(z):
        return 0.0
    return float(np.min(np.linalg.norm(S[outside] - z, axis=1)))


@pytest.mark.parametrize(
    "region",
    [
        Orthant([0.3, -0.4]),
        OrthantComplement([0.5, 0.2]),
        Ball([0.1, -0.2], 1.3),
        BallComplement([0.2, 0.1], 0.9),
    ],
    ids=["orthant", "orthant_complement", "ball", "ball_complement"],
)
def test_distance_matches_grid_oracle(region):
    rng = np.random.default_rng(11)
    for z in rng.uniform(-2.5, 2.5, size=(40, 2)):
        # Grid points can miss the true nearest point by half a cell diagonal.
        assert region.dist_to_complement(z) == pytest.approx(_grid_distance(region, z), abs=0.03)


def test_batch_and_single_agree():
    region = Ball([2.0, 2.0, 2.0], 1.5)
    Y = np.random.default_rng(0).normal(2, 1.5, size=(50, 3))
    batch = region.dist_to_complement(Y)
    singles = [region.dist_to_complement(y) for y in Y]
    np.testing.assert_array_equal(batch, singles)
    np.testing.assert_array_equal(region.contains(Y), [region.contains(y) for y in Y])


def test_region_spec_round_trip():
    for region in [
        Orthant([1.0, -0.2]),
        OrthantComplement([0.25, 3.0]),
        Ball([2.0, 2.0], 1.5),
        BallComplement([0.1, 0.3, 0.7], 4.0),
        HalfLine(0.1),
    ]:
        back = parse_region_spec(format_region_spec(region))
        assert type(back) is type(region)
        np.testing.assert_array_equal(back.boundary_point(), region.boundary_point())


def test_region_spec_comments_and_errors():
    text = "# target\nkind=ball   # sphere\ncenter=2,2\nradius=1.5\n"
    region = parse_region_spec(text)
    assert isinstance(region, Ball) and region.radius == 1.5
    with pytest.raises(ValueError):
        parse_region_spec("kind=cube\ncutoffs=1,2")
    with pytest.raises(ValueError):
        parse_region_spec("kind=ball\ncenter=1,2")


# --- properties ---------------------------------------------------------

coords = st.floats(-5, 5, allow_nan=False)
radii = st.floats(0.1, 4)
NORMS = (1, 2, np.inf)


@st.composite
def regions_and_points(draw):
    d = draw(st.integers(1, 4))
    vec = lambda: np.array(draw(st.lists(coords, min_size=d, max_size=d)))  # noqa: E731
    kind = draw(st.sampled_from(["orthant", "orthant_c", "ball", "ball_c"]))
    if kind == "orthant":
        region = Orthant(vec())
    elif kind == "orthant_c":
        region = OrthantComplement(vec())
    elif kind == "ball":
        region = Ball(vec(), draw(radii))
    else:
        region = BallComplement(vec(), draw(radii))
    return region, vec(), vec()


@settings(max_examples=300, deadline=None)
@given(regions_and_points())
def test_distance_implies_interior_implies_contains(case):
    region, z, _ = case
    norms = NORMS if isinstance(region, (Orthant, OrthantComplement)) else (2,)
    for norm in norms:
        if region.dist_to_complement(z, norm) > 0:
            assert region.interior_contains(z)
    if region.interior_contains(z):
        assert region.contains(z)


@settings(max_examples=300, deadline=None)
@given(regions_and_points())
def test_boundary_point_on_boundary(case):
    region = case[0]
    r = region.boundary_point()
    assert region.contains(r)
    assert not region.interior_contains(r)
    assert region.dist_to_complement(r) == 0.0


@settings(max_examples=300, deadline=None)
@given(regions_and_points())
def test_distance_is_one_lipschitz(case):
    region, a, b = case
    norms = NORMS if isinstance(region, (Orthant, OrthantComplement)) else (2,)
    for norm in norms:
        gap = abs(region.dist_to_complement(a, norm) - region.dist_to_complement(b, norm))
        assert gap <= np.linalg.norm(a - b, ord=norm) + 1e-9
