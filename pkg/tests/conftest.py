import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rotation(rng):
    # uniform via QR of a Gaussian matrix, sign-fixed to det +1
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def trace(scenario, policy=None, perturb=None, **kw):
    """Run one episode and record ``(visit, node, target, world, ctx)`` after every step.

    ``perturb(world, tree, ctx, target, records)`` may return a replacement world.
    """
    from homemanip.behavior.tasks import DEFAULT_POLICY
    from homemanip.sim.runner import run_episode

    records = []

    def hook(world, tree, ctx, target):
        records.append((len(tree.history), tree.current, target, world, ctx))
        if perturb is not None:
            return perturb(world, tree, ctx, target, records)
        return None

    result = run_episode(scenario, policy=policy or DEFAULT_POLICY, on_step=hook, **kw)
    return result, records
