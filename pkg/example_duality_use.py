import asyncio
import logging
import sys

from dataclasses import asdict

import numpy as np

from dualitykit import (
    DualityMatrix,
    check_duality_discrete,
    complete_graph_rates,
    cone_dual,
    create_runner,
    async_mc_moment_duality,
    is_q_dual_mechanism,
    sample_graphical_representation,
    siegmund_dual,
    standard_mechanisms,
    verify_strong_pathwise,
)

# Setup logging to StdOut
logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)
logger = logging.getLogger(__name__)


async def main():
    runner = None
    try:
        # Absorbed simple random walk on {0,1,2,3} and its diagonal self-duality
        P = np.array([
            [1.0, 0.0, 0.0, 0.0],
            [0.5, 0.0, 0.5, 0.0],
            [0.0, 0.5, 0.0, 0.5],
            [0.0, 0.0, 0.0, 1.0],
        ])
        H = DualityMatrix.create(np.diag([0.0, 1.0, 1.0, 0.0]))
        logger.info(f"self-duality residual: {check_duality_discrete(P, P, H)}")

        # Siegmund dual of a monotone birth-death kernel; the last state is the cemetery
        monotone = np.array([
            [0.5, 0.5, 0.0],
            [0.25, 0.5, 0.25],
            [0.0, 0.5, 0.5],
        ])
        dual = siegmund_dual(monotone)
        logger.info(f"siegmund dual (cemetery {dual.cemetery}):\n{dual.matrix.entries}")

        # Cone dual for a two-state chain and a duality function with three extremal columns
        H_cone = np.array([[2.0, 0.0, 1.0, 0.0], [0.0, 2.0, 1.0, 2.0]])
        L = np.array([[-1.0, 1.0], [1.0, -1.0]])
        cone = cone_dual(L, H_cone)
        logger.info(f"cone dual: extremal={cone.extremal_indices}, lambda={cone.lam}")
        logger.info(f"    generator:\n{cone.dual}")

        # Basic mechanisms and one exact pathwise duality on the complete graph
        mechanisms = standard_mechanisms()
        for f, g, q in [("R", "C", 0), ("R", "A", -1), ("BA", "BA", -1), ("R", "D", 0)]:
            report = is_q_dual_mechanism(mechanisms[f], mechanisms[g], q)
            logger.info(f"    {f}/{g} q={q}: {asdict(report)}")

        rates = complete_graph_rates(4, {"V": 1.0})
        G = sample_graphical_representation(4, rates, 1.0, seed=42)
        report = verify_strong_pathwise(None, None, 0, G, {"V": mechanisms["R"]}, {"V": mechanisms["C"]})
        logger.info(f"pathwise duality over {report.pairs_checked} pairs, {report.events} arrows: {report.passed}")

        # Wright-Fisher diffusion against Kingman's block count
        runner = create_runner()
        report = await async_mc_moment_duality(runner, x0=0.5, n0=3, t=0.5, replicas=20_000, seed=7)
        logger.info(f"moment duality: {report.estimates} +/- {report.standard_errors}, passed={report.passed}")

    except Exception as e:
        logger.info(f"Unexpected exception: {e}")

    finally:
        if runner:
            await runner.async_close()


asyncio.run(main())  # main loop
