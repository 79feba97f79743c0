from importlib import resources

import numpy as np
import pytest

from co2therm import (
    AirKnowns,
    PhysicalParams,
    ThermalKnowns,
    build_network,
    load_benchmark,
    tree_cotree_decompose,
)

TINY_INFER = """
[infer]
window_size = 12
step = 6
forecast_horizon = 6
iterations = 500
burn_in = 250
seed = 11
predictive_draws = 20
thin = 5
"""


@pytest.fixture(scope="session")
def benchmark_setup():
    return load_benchmark()


@pytest.fixture(scope="session")
def tiny_config_dir(tmp_path_factory):
    """Desk-toy benchmark config: short run, few iterations, fast polish."""
    root = tmp_path_factory.mktemp("tinycfg")
    pkg = resources.files("co2therm.configs")
    text = pkg.joinpath("benchmark.toml").read_text()
    head, _ = text.split("[infer]", 1)
    tail = head.split("[sweep]")[0]
    tail = tail.replace("duration_min = 240.0", "duration_min = 40.0")
    tiny = tail + TINY_INFER + """
[sweep]
window_sizes = [8]
noise_pairs = [[5.0, 0.1]]
eval_start_min = 20.0
eval_end_min = 30.0
mode = "final_only"
"""
    (root / "benchmark.toml").write_text(tiny)
    for name in ("benchmark_network.json", "benchmark_priors.json"):
        (root / name).write_text(pkg.joinpath(name).read_text())
    return root


@pytest.fixture(scope="session")
def tiny_setup(tiny_config_dir):
    return load_benchmark(tiny_config_dir / "benchmark.toml")


@pytest.fixture(scope="session")
def benchmark_dataset(benchmark_setup):
    return benchmark_setup.regenerate()


def single_zone_flush_network(volume=30.0):
    """One interior zone flushed by ambient air: In -> R -> Out."""
    cfg = {
        "zones": [
            {"id": "R", "volume": volume},
            {"id": "In", "kind": "boundary"},
            {"id": "Out", "kind": "boundary"},
        ],
        "flow_edges": [
            {"id": "In-R", "from": "In", "to": "R"},
            {"id": "R-Out", "from": "R", "to": "Out"},
        ],
        "thermal_edges": [
            {"id": "R-In", "a": "R", "b": "In"},
            {"id": "R-Out", "a": "R", "b": "Out"},
        ],
        "constrained": ["R"],
        "preferred_independent": ["In-R"],
    }
    net = build_network(cfg)
    return net, tree_cotree_decompose(net, net.preferred_independent)


@pytest.fixture
def flush_network():
    return single_zone_flush_network()


@pytest.fixture
def table3_knowns():
    air = AirKnowns(q_exh=1.0e-5, c_exh=50000.0, ambient_co2=400.0)
    thermal = ThermalKnowns(cp_air=1000.0, rho_air=1.2, q_ppl=100.0,
                            ambient_temp=20.0)
    return air, thermal


def flush_params(occupancy=1.0, flow=0.01, resistance=2.0, capacitance=24000.0):
    # Second thermal edge carries a huge resistance so the closed-form
    # single-loss-path steady states stay exact to rounding.
    return PhysicalParams(occupancy=[occupancy], independent_flows=[flow],
                          resistances=[resistance, 1e12],
                          capacitances=[capacitance])


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
