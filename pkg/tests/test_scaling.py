import logging
import math
import pytest
import pytest_asyncio

import numpy as np

from dualitykit import (
    BranchingAnnihilatingSpec,
    CountChainSpec,
    DualityDataError,
    DualityNumericError,
    DualityPreconditionError,
    MomentChain,
    SdeSpec,
    check_duality_generators,
    create_runner,
    duality_residual_matrix,
    simulate_count_chain,
    simulate_dual_count_chain,
    simulate_ba_dual,
    simulate_wf_sde,
    simulate_kingman_block,
    async_mc_moment_duality,
    async_rescaling_experiment,
    async_monotone_limit_check,
    moment_duality_generators,
    moment_truncation_error,
    batch_count_chain,
    batch_dual_count_chain,
    batch_ba_dual,
    batch_wf_sde,
    batch_kingman_block,
)
from dualitykit.duality_pathsim import hypergeometric_table
from dualitykit.duality_scaling import (
    _count_rates,
    _dual_count_rates,
)

_LOGGER = logging.getLogger(__name__)

N_SE = 4.0


class TestContext:
    def __init__(self):
        self.runner = None

    async def cleanup(self):
        if self.runner:
            await self.runner.async_close()
            assert self.runner.closed == True


@pytest_asyncio.fixture
async def context():
    # Prepare
    ctx = TestContext()

    # pass objects to tests
    yield ctx

    # cleanup
    await ctx.cleanup()


def jump_generator(N: int, rates: np.ndarray, jumps: tuple[int, ...]) -> np.ndarray:
    """Dense generator on 0..N from per-state jump rates"""
    L = np.zeros((N + 1, N + 1))
    for k in range(N + 1):
        for rate, jump in zip(rates[k], jumps):
            if rate > 0:
                L[k, k + jump] += rate
                L[k, k] -= rate
    return L


@pytest.mark.parametrize(
    "name, N, r, b",
    [
        ("neutral",   5, 2.0, 0.0),
        ("selection", 6, 3.0, 0.5),
        ("pure",      4, 0.0, 1.0),
    ]
)
def test_count_chain_generator_duality(name, N, r, b):
    spec = CountChainSpec.create(N=N, r=r, b=b, horizon=1.0, k0=0)
    k = np.arange(N + 1, dtype=float)
    LX = jump_generator(N, _count_rates(spec, k), (1, -1))
    LY = jump_generator(N, _dual_count_rates(spec, k), (1, -1, -2))
    H = hypergeometric_table(N, "-1")

    report = check_duality_generators(LX, LY, H)
    assert report.residual <= 1e-12
    assert report.passed


def test_kingman_absorption_time():
    n0 = 5
    counts, hit = batch_kingman_block(n0, 1e9, 20000, np.random.default_rng(1))

    assert np.all(counts == 1)
    assert np.all(np.isfinite(hit))
    # E[T] = sum over n of 1/C(n,2) = 2(1 - 1/n0)
    se = np.std(hit, ddof=1) / math.sqrt(hit.size)
    assert abs(np.mean(hit) - 2 * (1 - 1 / n0)) <= N_SE * se


def test_kingman_block_single():
    assert simulate_kingman_block(1, 10.0, seed=1) == 1
    assert 1 <= simulate_kingman_block(10, 0.1, seed=1) <= 10

    with pytest.raises(DualityDataError):
        simulate_kingman_block(0, 1.0, seed=1)
    with pytest.raises(DualityDataError):
        batch_kingman_block(3, -1.0, 10, np.random.default_rng(1))


def test_ba_parity():
    # without branching only pairs annihilate
    spec = BranchingAnnihilatingSpec.create(beta=0.0, alpha=1.0, n0=5, horizon=10.0)
    values = batch_ba_dual(spec, 2000, np.random.default_rng(2))

    assert np.all(values % 2 == 1)
    assert np.all(values <= 5)
    assert simulate_ba_dual(spec, seed=2) % 2 == 1


def test_ba_cap():
    spec = BranchingAnnihilatingSpec.create(beta=5.0, alpha=0.0, n0=1, horizon=10.0, cap=20)

    with pytest.raises(DualityNumericError):
        batch_ba_dual(spec, 10, np.random.default_rng(3))
    with pytest.raises(DualityNumericError):
        simulate_ba_dual(spec, seed=3)


def test_count_chain_martingale():
    # neutral chain: up and down rates agree, the count is a martingale
    spec = CountChainSpec.create(N=20, r=10.0, b=0.0, horizon=0.5, k0=6)
    values = batch_count_chain(spec, 20000, np.random.default_rng(4)).astype(float)

    assert np.all((values >= 0) & (values <= 20))
    se = np.std(values, ddof=1) / math.sqrt(values.size)
    assert abs(np.mean(values) - 6) <= N_SE * se


def test_dual_count_chain_bounds():
    spec = CountChainSpec.create(N=10, r=5.0, b=1.0, horizon=1.0, k0=4)
    values = batch_dual_count_chain(spec, 2000, np.random.default_rng(5))

    assert np.all((values >= 0) & (values <= 10))

    state, path = simulate_dual_count_chain(spec, seed=5, record=True)
    assert path[0] == (0.0, 4)
    assert path[-1][1] == state
    assert all(t1 < t2 for (t1, _), (t2, _) in zip(path, path[1:]))

    state, path = simulate_count_chain(spec, seed=5, record=True)
    assert all(abs(k2 - k1) == 1 for (_, k1), (_, k2) in zip(path, path[1:]))


def test_sde_martingale():
    spec = SdeSpec.create(alpha=0.5, beta=0.0, x0=0.3, horizon=0.5, dt=1e-4)
    values, clamped, steps = batch_wf_sde(spec, 5000, np.random.default_rng(6))

    assert steps == 5000 * 5000
    assert np.all((values >= 0.0) & (values <= 1.0))
    se = np.std(values, ddof=1) / math.sqrt(values.size)
    assert abs(np.mean(values) - 0.3) <= N_SE * se

    # E[X_t(1 - X_t)] decays at rate 1
    h = values * (1 - values)
    se = np.std(h, ddof=1) / math.sqrt(h.size)
    assert abs(np.mean(h) - 0.21 * math.exp(-0.5)) <= N_SE * se + 1e-3


def test_sde_zero_horizon():
    spec = SdeSpec.create(alpha=0.5, beta=0.5, x0=0.4, horizon=0.0)
    assert simulate_wf_sde(spec, seed=1) == 0.4


@pytest.mark.parametrize("M", [5, 10, 20])
def test_moment_truncation_error(M):
    LX, LY, H = moment_duality_generators(M, 6)

    assert LX.n == M + 1
    assert LY.n == 6
    residual = duality_residual_matrix(LX, LY, H)
    assert residual == pytest.approx(moment_truncation_error(M, 6), abs=1e-12)


def test_moment_truncation_vanishes():
    # moments up to order 3 are exact on the grid
    assert np.all(moment_truncation_error(10, 3) == 0.0)

    errors = [np.max(np.abs(moment_truncation_error(M, 6))) for M in (5, 10, 20, 40)]
    assert errors == sorted(errors, reverse=True)

    with pytest.raises(DualityDataError):
        moment_duality_generators(0, 3)


@pytest.mark.asyncio
@pytest.mark.usefixtures("context")
@pytest.mark.parametrize(
    "name, x0, n0, t",
    [
        ("center", 0.5, 3, 0.5),
        ("low",    0.2, 2, 1.0),
    ]
)
async def test_mc_moment_duality(name, x0, n0, t, request):
    context = request.getfixturevalue("context")
    context.runner = create_runner(threads=2)

    report = await async_mc_moment_duality(context.runner, x0, n0, t, replicas=4000, seed=1, dt=1e-3, n_se=N_SE)

    assert report.labels == ["E[X_t^n0]", "E[x0^N_t]"]
    assert report.passed, report.estimates
    assert report.extra["n0"] == n0


@pytest.mark.asyncio
@pytest.mark.usefixtures("context")
@pytest.mark.parametrize(
    "name, x0, n0, exp_except",
    [
        ("x0 high",  1.5, 2, DualityDataError),
        ("n0 zero",  0.5, 0, DualityDataError),
    ]
)
async def test_mc_moment_duality_errors(name, x0, n0, exp_except, request):
    context = request.getfixturevalue("context")
    context.runner = create_runner(threads=1)

    with pytest.raises(exp_except):
        await async_mc_moment_duality(context.runner, x0, n0, 0.5, replicas=10, seed=1)


@pytest.mark.asyncio
@pytest.mark.usefixtures("context")
async def test_rescaling_zero_time(request):
    context = request.getfixturevalue("context")
    context.runner = create_runner(threads=2)

    table = await async_rescaling_experiment(
        context.runner, [10, 20], "-1", alpha=0.5, beta=0.5, x0=0.5, n0=2, t=0.0,
        replicas=200, seed=1, n_se=N_SE,
    )

    assert table.passed
    assert [row.N for row in table.rows] == [10, 20]
    for row in table.rows:
        assert row.gap == 0.0
        assert row.hyp_gap == 0.0
        assert row.limit_gap == 0.0
    assert table.fitted_c == 0.0
    assert set(table.hypotheses) >= {"q = -1", "r_N/N -> alpha", "b_N -> beta"}


@pytest.mark.asyncio
@pytest.mark.usefixtures("context")
async def test_rescaling_experiment(request):
    context = request.getfixturevalue("context")
    context.runner = create_runner(threads=2)

    table = await async_rescaling_experiment(
        context.runner, [20, 40], "-1", alpha=0.5, beta=0.5, x0=0.3, n0=2, t=0.3,
        replicas=2000, seed=7, dt=1e-3, n_se=N_SE,
    )

    assert table.passed, table.rows
    assert table.fitted_c >= 0.0
    assert table.limit_identity_gap <= N_SE * table.limit_identity_se
    for row in table.rows:
        assert row.hyp_gap <= N_SE * row.hyp_se


@pytest.mark.asyncio
@pytest.mark.usefixtures("context")
@pytest.mark.parametrize(
    "name, N_list, q, alpha, x0, n0, schedules, exp_hypothesis",
    [
        ("decreasing", [40, 20], "-1", 0.5,  0.3, 2,  {},                                                  "N_list strictly increasing"),
        ("single",     [20],     "-1", 0.5,  0.3, 2,  {},                                                  "N_list strictly increasing"),
        ("q",          [20, 40], "0",  0.5,  0.3, 2,  {},                                                  "q = -1"),
        ("alpha",      [20, 40], "-1", -1.0, 0.3, 2,  {},                                                  "alpha >= 0"),
        ("x0",         [20, 40], "-1", 0.5,  1.5, 2,  {},                                                  "x0 in [0, 1]"),
        ("n0",         [20, 40], "-1", 0.5,  0.3, 50, {},                                                  "n0 fixed, 1 <= n0 <= N"),
        ("time",       [20, 40], "-1", 0.5,  0.3, 2,  {"time_scale": lambda N: -1.0},                      "t_N >= 0"),
        ("r diverges", [20, 40], "-1", 0.5,  0.3, 2,  {"r_schedule": lambda N: 0.5 * N + N * N / 100},     "r_N/N -> alpha"),
        ("b diverges", [20, 40], "-1", 0.5,  0.3, 2,  {"b_schedule": lambda N: 0.5 + N},                   "b_N -> beta"),
    ]
)
async def test_rescaling_hypotheses(name, N_list, q, alpha, x0, n0, schedules, exp_hypothesis, request):
    context = request.getfixturevalue("context")
    context.runner = create_runner(threads=1)

    with pytest.raises(DualityPreconditionError) as e_info:
        await async_rescaling_experiment(
            context.runner, N_list, q, alpha=alpha, beta=0.5, x0=x0, n0=n0, t=0.3,
            replicas=10, seed=1, **schedules,
        )
    assert e_info.value.witness == exp_hypothesis


@pytest.mark.asyncio
@pytest.mark.usefixtures("context")
@pytest.mark.parametrize(
    "name, chain, low, high, z_grid",
    [
        ("kingman",       "kingman",       2, 6,     [1, 2, 3, 4]),
        ("wright-fisher", "wright-fisher", 0.2, 0.7, [0.1, 0.5, 0.9]),
    ]
)
async def test_monotone_limit_check(name, chain, low, high, z_grid, request):
    context = request.getfixturevalue("context")
    context.runner = create_runner(threads=2)

    report = await async_monotone_limit_check(
        context.runner, chain, low, high, t=0.5, z_grid=z_grid,
        replicas=2000, seed=1, dt=1e-3, n_se=N_SE,
    )

    assert report.chain == MomentChain(chain)
    assert report.ordered
    assert report.witness is None
    assert len(report.low_tail) == len(z_grid)


@pytest.mark.asyncio
@pytest.mark.usefixtures("context")
@pytest.mark.parametrize(
    "name, low, high, q, exp_except",
    [
        ("q",         2, 6, "1/2", DualityPreconditionError),
        ("unordered", 6, 2, "0",   DualityDataError),
    ]
)
async def test_monotone_limit_errors(name, low, high, q, exp_except, request):
    context = request.getfixturevalue("context")
    context.runner = create_runner(threads=1)

    with pytest.raises(exp_except):
        await async_monotone_limit_check(context.runner, "kingman", low, high, t=0.5, z_grid=[1], replicas=10, seed=1, q=q)
