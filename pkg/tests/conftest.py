import numpy as np
import pytest

from pwzs import compounding, simulator


@pytest.fixture(scope="session")
def small_scene():
    """Tiny simulated scene shared by fast integration tests."""
    spec = simulator.PhantomSpec(
        height=48, width=64, cysts=((24, 32, 10, 0.0),), seed=99
    )
    clean = simulator.make_phantom(spec)
    noise = simulator.NoiseModel()
    angles = np.linspace(-16, 16, 9)
    stack = simulator.simulate_stack(clean, angles, noise, seed=99)
    return {"spec": spec, "clean": clean, "noise": noise, "stack": stack}


@pytest.fixture(scope="session")
def small_working_stack(small_scene):
    idx = compounding.select_angles(small_scene["stack"].angles_deg, 5)
    return small_scene["stack"].subset(idx)


def rand_stack(seed, k=5, h=6, w=7):
    """Random valid angle stack for property tests."""
    rng = np.random.default_rng(seed)
    return compounding.AngleStack(
        frames=rng.random((k, h, w)) + 0.01,
        angles_deg=tuple(np.linspace(-10, 10, k)),
    )
