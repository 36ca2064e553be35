"""
Test Field Simulators and Stencil Datasets
"""
import numpy as np
import pytest

from modcomb.errors import DimensionMismatchError, InvalidParameterError, SimulationBlowUpError
from modcomb.systems.simulators import (
    Grid1D,
    Grid2D,
    TrajectorySet,
    generate_dataset,
    initial_fields,
    neighborhoods_1d,
    reaction_term,
    simulate_diffusion_2d,
    simulate_reaction_diffusion_1d,
    stencil_dataset,
)


def test_grid_geometry():
    """Test spacing, node positions and the explicit stability number"""
    grid = Grid1D(n=20, dt=0.001)

    assert grid.dz == pytest.approx(0.05)
    assert grid.z[0] == pytest.approx(0.05) and grid.z[-1] == pytest.approx(1.0)
    assert grid.cfl(1.0) == pytest.approx(0.4)
    assert Grid2D(points=11).dz == pytest.approx(0.1)
    with pytest.raises(InvalidParameterError):
        Grid1D(n=2)


def test_pure_diffusion_spreads_a_spike():
    """Test one explicit step of the second difference"""
    grid = Grid1D(n=20, dt=0.001)
    u0 = np.zeros(20)
    u0[5] = 1.0

    traj = simulate_reaction_diffusion_1d(grid, mu=1.0, eta=0.0, u0=u0, steps=1)
    u1 = traj.states[0, 1]

    assert u1[5] == pytest.approx(0.2)
    assert u1[4] == pytest.approx(0.4) and u1[6] == pytest.approx(0.4)
    assert u1.sum() == pytest.approx(1.0)


def test_boundary_and_rest_state_preserved():
    """Test that the right boundary stays zero and zero stays zero"""
    grid = Grid1D(n=20, dt=0.001)
    u0 = np.ones(20)

    traj = simulate_reaction_diffusion_1d(grid, mu=1.0, eta=0.25, u0=u0, steps=10)
    assert np.all(traj.states[0, :, -1] == 0.0)

    rest = simulate_reaction_diffusion_1d(grid, mu=1.0, eta=0.25, u0=np.zeros(20), steps=10)
    assert np.all(rest.states == 0.0)


def test_reaction_term_wells():
    """Test the zeros of the double-well reaction term"""
    np.testing.assert_allclose(reaction_term([-1.0, 0.0, 1.0], 0.25), 0.0)
    assert reaction_term(0.5, 1.0) == pytest.approx(4.0 * 0.5 * (0.25 - 1.0))


def test_unstable_step_blows_up():
    """Test that divergence is reported with the failing step"""
    grid = Grid1D(n=20, dt=1.0)
    u0 = initial_fields('uniform', 1, 20, seed=0)

    with pytest.raises(SimulationBlowUpError) as info:
        simulate_reaction_diffusion_1d(grid, mu=1.0, eta=0.0, u0=u0, steps=500)
    assert 1 <= info.value.step <= 500


def test_initial_field_length_checked():
    """Test that the initial field must match the grid"""
    with pytest.raises(DimensionMismatchError):
        simulate_reaction_diffusion_1d(Grid1D(n=20), 1.0, 0.0, np.zeros(19), 1)


def test_diffusion_2d_spike():
    """Test one step along the first axis only"""
    grid = Grid2D(points=11, dt=0.001)
    u0 = np.zeros((11, 11))
    u0[5, 5] = 1.0

    field = simulate_diffusion_2d(grid, mu1=1.0, mu2=0.0, u0=u0, steps=1).states[0, 1].reshape(11, 11)

    assert field[5, 5] == pytest.approx(0.8)
    assert field[4, 5] == pytest.approx(0.1) and field[6, 5] == pytest.approx(0.1)
    assert field[5, 4] == 0.0


def test_diffusion_2d_symmetry():
    """Test that equal coefficients keep a symmetric field symmetric"""
    grid = Grid2D(points=11, dt=0.001)
    rng = np.random.default_rng(0)
    a = rng.uniform(0.0, 1.0, (11, 11))

    traj = simulate_diffusion_2d(grid, 1.0, 1.0, a + a.T, steps=5)
    fields = traj.states[0].reshape(6, 11, 11)

    for field in fields:
        assert np.array_equal(field, field.T)
    assert np.all(fields[:, 0, :] == 0.0) and np.all(fields[:, :, -1] == 0.0)


def test_trajectory_set_validation():
    """Test shape and finiteness checks on trajectory arrays"""
    with pytest.raises(DimensionMismatchError):
        TrajectorySet(states=np.zeros((3, 4)))
    with pytest.raises(InvalidParameterError):
        TrajectorySet(states=np.full((1, 2, 3), np.nan))


def test_snapshot_pairs_are_trajectory_major():
    """Test consecutive pairs of whole states"""
    traj = simulate_reaction_diffusion_1d(Grid1D(n=10), 1.0, 0.0, initial_fields('uniform', 2, 10, seed=1), steps=3)

    data = generate_dataset(traj)

    assert data.count == 6
    np.testing.assert_array_equal(data.inputs[3], traj.states[1, 0])
    np.testing.assert_array_equal(data.targets[3], traj.states[1, 1])


def test_stencil_dataset_shapes_and_rate_targets():
    """Test neighbourhood samples and the diffusion rate they encode"""
    grid = Grid1D(n=20, dt=0.001)
    traj = simulate_reaction_diffusion_1d(grid, 1.0, 0.0, initial_fields('uniform', 2, 20, seed=2), steps=3)

    full = stencil_dataset(traj, grid, target='rate')
    inner = stencil_dataset(traj, grid, target='state', margin=1)

    assert full.inputs.shape == (2 * 3 * 19, 3)
    assert inner.count == 2 * 3 * 17
    expected = full.inputs @ np.array([1.0, -2.0, 1.0]) / grid.dz ** 2
    np.testing.assert_allclose(full.targets[:, 0], expected, rtol=1e-9, atol=1e-6)


def test_neighbourhoods_use_zero_ghost_on_the_left():
    """Test the left ghost value and the last interior point"""
    hoods = neighborhoods_1d(np.array([1.0, 2.0, 3.0, 0.0]))

    assert hoods.tolist() == [[0.0, 1.0, 2.0], [1.0, 2.0, 3.0], [2.0, 3.0, 0.0]]


def test_pure_diffusion_maximum_principle():
    """Test that without reaction the field never leaves its initial range and max|u| never grows"""
    grid = Grid1D(n=20, dt=0.001)
    u0 = initial_fields('normal', 10, 20, seed=3)
    u0[:, -1] = 0.0

    traj = simulate_reaction_diffusion_1d(grid, mu=1.0, eta=0.0, u0=u0, steps=50)

    lower = np.minimum(u0.min(axis=1), 0.0)[:, None, None]
    upper = np.maximum(u0.max(axis=1), 0.0)[:, None, None]
    assert np.all(traj.states >= lower - 1e-12)
    assert np.all(traj.states <= upper + 1e-12)
    peaks = np.abs(traj.states).max(axis=2)
    assert np.all(np.diff(peaks, axis=1) <= 1e-12)
