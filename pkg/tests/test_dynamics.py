import numpy as np
import pytest

from mdaccel.dynamics import (
    DynamicsParams,
    IntegratorDivergenceError,
    OverdampedBatch,
    WalkerState,
    step_langevin,
    step_overdamped,
    substream,
    walker_rng,
)
from mdaccel.potentials import make_flat, make_quadratic_bowl, make_tilted_1d


def test_zero_temperature_limit_flat_potential():
    flat = make_flat(1)
    params = DynamicsParams(beta=1e12, dt=1e-3)
    w = WalkerState(np.array([0.3]), walker_rng(5))
    for _ in range(50):
        x0 = w.position.copy()
        step_overdamped(w, flat, params)
        assert abs(w.position[0] - x0[0]) <= 1e-5


def test_ou_stationary_variance():
    # V = x^2/2: stationary variance of the overdamped process is 1/beta
    bowl = make_quadratic_bowl(dim=1, curvature=1.0)
    beta = 2.0
    params = DynamicsParams(beta=beta, dt=5e-3)
    n = 4000
    gens = [substream(11, i) for i in range(n)]
    batch = OverdampedBatch(bowl, params, np.zeros((n, 1)), gens)
    for _ in range(2000):  # ~10 relaxation times
        batch.step()
    x = batch.x[:, 0]
    var = x.var()
    # discrete-time chain has variance (1/beta)/(1 - dt/2) at this step size
    expected = (1.0 / beta) / (1.0 - params.dt / 2.0)
    se = expected * np.sqrt(2.0 / n)
    assert abs(var - expected) < 3 * se


def test_fixed_seed_reproducible():
    bowl = make_quadratic_bowl(dim=2)
    params = DynamicsParams(beta=1.0, dt=1e-3)
    out = []
    for _ in range(2):
        w = WalkerState(np.array([0.5, -0.5]), walker_rng(123, 7))
        for _ in range(100):
            step_overdamped(w, bowl, params)
        out.append(w.position.copy())
    assert np.array_equal(out[0], out[1])


def test_clock_accumulates():
    flat = make_flat(1)
    params = DynamicsParams(beta=1.0, dt=1e-3)
    w = WalkerState(np.array([0.0]), walker_rng(0))
    for _ in range(10):
        step_overdamped(w, flat, params)
    assert w.clock == pytest.approx(10 * params.dt)


def test_divergence_error():
    tilted = make_tilted_1d(slope=1.0)

    class Bad:
        name = "bad"
        dim = 1

        def energy(self, x):
            return tilted.energy(x)

        def grad(self, x):
            return np.full_like(np.atleast_1d(x), np.inf)

        def hess(self, x):
            return tilted.hess(x)

    w = WalkerState(np.array([0.0]), walker_rng(1))
    with pytest.raises(IntegratorDivergenceError):
        step_overdamped(w, Bad(), DynamicsParams(beta=1.0, dt=1e-3))


def test_langevin_equipartition():
    bowl = make_quadratic_bowl(dim=1, curvature=1.0)
    beta = 2.0
    params = DynamicsParams(beta=beta, dt=1e-2, gamma=1.0)
    rng = walker_rng(3)
    w = WalkerState(np.array([0.0]), rng, momentum=np.array([0.0]))
    ke = []
    for k in range(60000):
        step_langevin(w, bowl, params)
        if k > 5000 and k % 10 == 0:
            ke.append(0.5 * w.momentum[0] ** 2)
    ke = np.array(ke)
    target = 1.0 / (2.0 * beta)
    se = ke.std() / np.sqrt(len(ke) / 20.0)  # crude autocorrelation discount
    assert abs(ke.mean() - target) < 3 * se + 0.01 * target


def test_langevin_deterministic_limit_energy_drift():
    # no noise, no friction: BAOAB reduces to velocity Verlet, energy drift O(dt^2)
    bowl = make_quadratic_bowl(dim=1, curvature=1.0)
    drifts = []
    for dt in (1e-2, 5e-3):
        params = DynamicsParams(beta=1e30, dt=dt, gamma=0.0)
        w = WalkerState(np.array([1.0]), walker_rng(0), momentum=np.array([0.0]))
        e0 = float(bowl.energy(w.position)) + 0.5 * w.momentum[0] ** 2
        emax = 0.0
        for _ in range(int(round(10.0 / dt))):
            step_langevin(w, bowl, params)
            e = float(bowl.energy(w.position)) + 0.5 * w.momentum[0] ** 2
            emax = max(emax, abs(e - e0))
        drifts.append(emax)
    assert drifts[0] < 1e-3
    assert drifts[1] < drifts[0] / 2.0  # shrinks at least linearly, dt^2 in practice


def test_langevin_high_friction_matches_overdamped_statistics():
    bowl = make_quadratic_bowl(dim=1, curvature=1.0)
    beta = 1.0
    gamma = 5.0
    # overdamped limit after time rescaling: position variance -> 1/beta.
    # position relaxation slows like gamma, so this is a qualitative check
    params = DynamicsParams(beta=beta, dt=5e-3, gamma=gamma)
    rng = walker_rng(9)
    w = WalkerState(np.array([0.0]), rng, momentum=np.array([0.0]))
    xs = []
    for k in range(300000):
        step_langevin(w, bowl, params)
        if k % 20 == 0:
            xs.append(w.position[0])
    var = np.var(xs)
    assert abs(var - 1.0 / beta) < 0.25


def test_ergodic_average_quadratic():
    bowl = make_quadratic_bowl(dim=1, curvature=1.0)
    beta = 4.0
    params = DynamicsParams(beta=beta, dt=5e-3)
    w = WalkerState(np.array([0.0]), walker_rng(21))
    acc = 0.0
    n = 200000
    for _ in range(n):
        step_overdamped(w, bowl, params)
        acc += w.position[0] ** 2
    assert abs(acc / n - 1.0 / beta) < 0.15 / beta


def test_batch_matches_single_walkers_bitwise():
    # the scheduling-independence contract: a lane's trajectory does not
    # depend on which other lanes share the batch
    bowl = make_quadratic_bowl(dim=2)
    params = DynamicsParams(beta=1.5, dt=1e-3)
    starts = np.array([[0.1, 0.2], [-0.3, 0.4], [0.0, 0.0]])
    batch = OverdampedBatch(bowl, params, starts.copy(),
                            [substream(77, i) for i in range(3)])
    for _ in range(500):
        batch.step()
    for i in range(3):
        w = WalkerState(starts[i].copy(), substream(77, i))
        for _ in range(500):
            step_overdamped(w, bowl, params)
        assert np.array_equal(batch.x[i], w.position)


def test_batch_partial_stepping_keeps_lane_streams():
    bowl = make_quadratic_bowl(dim=1)
    params = DynamicsParams(beta=1.0, dt=1e-3)
    batch = OverdampedBatch(bowl, params, np.zeros((2, 1)),
                            [substream(5, i) for i in range(2)])
    # advance lane 0 alone, then lane 1 alone: same as advancing each solo
    for _ in range(100):
        batch.step(np.array([0]))
    for _ in range(100):
        batch.step(np.array([1]))
    for i in range(2):
        w = WalkerState(np.zeros(1), substream(5, i))
        for _ in range(100):
            step_overdamped(w, bowl, params)
        assert np.array_equal(batch.x[i], w.position)


def test_substream_independence_and_determinism():
    a = substream(42, 0).standard_normal(4)
    b = substream(42, 1).standard_normal(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, substream(42, 0).standard_normal(4))


def test_params_validation():
    with pytest.raises(ValueError):
        DynamicsParams(beta=0.0, dt=1e-3)
    with pytest.raises(ValueError):
        DynamicsParams(beta=1.0, dt=0.0)
    p = DynamicsParams(beta=2.0, dt=1e-3)
    assert p.with_beta(4.0).beta == 4.0
    assert p.noise_scale == pytest.approx(np.sqrt(2 * 1e-3 / 2.0))
