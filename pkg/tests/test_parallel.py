import numpy as np
import pytest

from stochheat.parallel import default_workers, map_replicas, replica_rng


def draw(ids, rngs):
    return [float(r.standard_normal()) for r in rngs]


@pytest.mark.parametrize("workers", [2, 3, 8])
def test_worker_count_invariance(workers):
    ref = map_replicas(draw, 97, seed=11, workers=1, chunk=10)
    assert map_replicas(draw, 97, seed=11, workers=workers, chunk=10) == ref


def test_streams_and_seeds_are_independent():
    a = map_replicas(draw, 20, seed=0)
    assert a != map_replicas(draw, 20, seed=0, stream=1)
    assert a != map_replicas(draw, 20, seed=1)
    assert a[:5] == map_replicas(draw, 5, seed=0)


def test_replica_rng_matches_map():
    vals = map_replicas(draw, 3, seed=4, stream=2)
    assert vals[2] == replica_rng(4, 2, 2).standard_normal()


def test_wrong_length_raises():
    with pytest.raises(RuntimeError):
        map_replicas(lambda ids, rngs: [0.0], 5, seed=0, chunk=5)


def test_default_workers_positive():
    assert default_workers() >= 1
    assert np.isscalar(map_replicas(draw, 1, 0)[0])
