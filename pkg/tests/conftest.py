import itertools
import math

import numpy as np
import pytest

from dolroute.submodular import BasisFamily, CoverageObjective, GroundSet, NodePartition


def random_instance(rng, n_routes=5, n_nodes=12, n_parts=3, gammas=(0.001, 0.5, 1.0), route_len=(2, 6)):
    """Random coverage instance; routes may revisit and overlap."""
    nodes = list(range(n_nodes))
    perm = rng.permutation(n_nodes)
    cuts = sorted(rng.choice(np.arange(1, n_nodes), size=n_parts - 1, replace=False))
    sets = [frozenset(int(v) for v in s) for s in np.split(perm, cuts)]
    routes = []
    for _ in range(n_routes):
        k = int(rng.integers(route_len[0], route_len[1] + 1))
        routes.append(tuple(int(v) for v in rng.choice(nodes, size=k, replace=True)))
    obj = CoverageObjective(GroundSet(tuple(routes)), NodePartition(tuple(sets)), BasisFamily(gammas))
    w = rng.uniform(0.0, 2.0, size=obj.shape)
    return obj, w


def brute_value(obj, selection, w):
    """Straight-line evaluation of the weighted coverage objective."""
    total = 0.0
    for i, block in enumerate(obj.partition.sets):
        psi = 0
        for t in selection:
            psi += len(set(obj.ground.routes[t]) & block)
        for j, g in enumerate(obj.basis.gammas):
            total += w[i][j] * math.fsum(g ** (a - 1) for a in range(1, psi + 1))
    return total


def brute_opt(obj, w, system):
    """Best independent set by exhaustive search."""
    n = len(obj.ground)
    best = 0.0
    for r in range(n + 1):
        for s in itertools.combinations(range(n), r):
            if system.is_independent(list(s)):
                best = max(best, brute_value(obj, s, w))
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
