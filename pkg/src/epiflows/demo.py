"""Bundled example systems for the CLI and tests.

``five_node_system`` is a small endemic benchmark: its spread rates are far
above the healing rates, so the healthy state is unstable and trajectories
settle onto a strictly positive equilibrium. ``synthetic_county_system``
builds a county-scale mobility network from a gravity model on random
coordinates, suitable for arrival-time experiments.
"""
from __future__ import annotations

import numpy as np

from .dynamics import EpidemicParams, SystemState
from .network import FlowNetwork, build_network

# Column-stochastic routing for the five-node benchmark (columns renormalized
# so each sums to 1 exactly).
_FIVE_NODE_ROUTING = np.array(
    [
        [0.0,   0.212, 0.275, 0.25,  0.212],
        [0.249, 0.0,   0.26,  0.299, 0.338],
        [0.246, 0.198, 0.0,   0.204, 0.178],
        [0.285, 0.29,  0.259, 0.0,   0.272],
        [0.22,  0.299, 0.206, 0.247, 0.0],
    ]
)

_FIVE_NODE_RATES = {
    "beta":  np.array([0.065, 0.044, 0.089, 0.096, 0.038]),
    "sigma": np.array([0.079, 0.053, 0.057, 0.093, 0.007]),
    "delta": np.array([0.001, 0.001, 0.008, 0.008, 0.009]),
    "alpha": np.array([0.01,  0.008, 0.005, 0.008, 0.001]),
}

_FIVE_NODE_GAMMA = np.array([0.002, 0.002, 0.002, 0.002, 0.005])

_FIVE_NODE_S0 = np.array([0.549, 0.715, 0.603, 0.545, 0.424])


def five_node_system() -> tuple[FlowNetwork, EpidemicParams]:
    """Five-node endemic benchmark network and rates.

    Flows are reverse-engineered from the routing matrix and outflow
    fractions: balance forces the per-node outflow volumes to be the
    routing matrix's Perron vector, which fixes the population ratios.
    """
    w = _FIVE_NODE_ROUTING / _FIVE_NODE_ROUTING.sum(axis=0, keepdims=True)
    evals, evecs = np.linalg.eig(w)
    outflow = np.abs(np.real(evecs[:, np.argmin(np.abs(evals - 1.0))]))
    populations = outflow / _FIVE_NODE_GAMMA
    populations *= 1e5 / populations.min()
    flows = w * (_FIVE_NODE_GAMMA * populations)[None, :]
    network = build_network(
        node_ids=[f"n{i + 1}" for i in range(5)],
        populations=populations,
        flows=flows,
    )
    return network, EpidemicParams(**_FIVE_NODE_RATES)


def five_node_initial_state() -> SystemState:
    """Mixed susceptible/exposed start used by the five-node demo runs."""
    s = _FIVE_NODE_S0.copy()
    return SystemState(s=s, e=1.0 - s, x=np.zeros(5), r=np.zeros(5))


def synthetic_county_system(
    n: int = 87, seed: int = 0
) -> tuple[FlowNetwork, EpidemicParams, int]:
    """Gravity-model mobility network over random planar coordinates.

    Flows decay exponentially with distance and are symmetrized, so they are
    balanced by construction. Rates vary mildly across nodes; the returned
    origin index is the node nearest the lower-left corner.
    """
    rng = np.random.default_rng(seed)
    points = rng.uniform(0.0, 1.0, size=(n, 2))
    populations = np.exp(rng.normal(10.5, 0.8, size=n))
    gaps = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
    flows = np.sqrt(populations[:, None] * populations[None, :]) * np.exp(-gaps / 0.09)
    np.fill_diagonal(flows, 0.0)
    flows = 0.5 * (flows + flows.T)
    outflow_fraction = flows.sum(axis=0) / populations
    flows *= 0.03 / outflow_fraction.mean()

    network = build_network(
        node_ids=[f"c{i:02d}" for i in range(n)],
        populations=populations,
        flows=flows,
    )
    params = EpidemicParams(
        alpha=np.full(n, 1.0 / 60.0),
        beta=rng.uniform(0.20, 0.34, n),
        sigma=rng.uniform(0.16, 0.24, n),
        delta=rng.uniform(0.11, 0.15, n),
    )
    origin = int(np.argmin(points.sum(axis=1)))
    return network, params, origin


def seeded_initial_state(n: int, origin: int, exposed: float = 2e-3) -> SystemState:
    """Healthy everywhere except a small exposed fraction at the origin."""
    state = np.zeros((4, n))
    state[0] = 1.0
    state[0, origin] = 1.0 - exposed
    state[1, origin] = exposed
    return SystemState.from_matrix(state)
