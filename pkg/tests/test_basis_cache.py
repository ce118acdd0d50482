import time

import pytest

from momenta.basis_builder import specific_flexible_basis
from momenta.basis_cache import BasisCache, BasisKey


@pytest.fixture
def cache(tmp_path):
    c = BasisCache(str(tmp_path / "cache"))
    yield c
    c.close()


def _key(lmax=1, seed=0):
    return BasisKey(lmax, "volumetric", "specific", "", seed, 1e-8)


def test_put_and_get(cache):
    s = specific_flexible_basis(1)
    assert cache.get(_key()) is None
    cache.put(_key(), s)
    again = cache.get(_key())
    assert again is not None
    assert again.patterns == s.patterns
    assert cache.count() == 1


def test_key_fields_are_distinct(cache):
    cache.put(_key(), specific_flexible_basis(1))
    assert cache.get(_key(seed=1)) is None
    assert cache.get(BasisKey(1, "volumetric", "specific", "", 0, 1e-8, "bounds")) is None


def test_put_replaces(cache):
    cache.put(_key(), specific_flexible_basis(0))
    cache.put(_key(), specific_flexible_basis(1))
    assert cache.count() == 1
    assert len(cache.get(_key())) == 2


def test_remove(cache):
    cache.put(_key(), specific_flexible_basis(1))
    assert cache.remove(_key())
    assert not cache.remove(_key())
    assert cache.count() == 0


def test_purge_removes_least_recently_used(cache):
    s = specific_flexible_basis(0)
    for seed in range(3):
        cache.put(_key(seed=seed), s)
        time.sleep(0.01)
    # Touch the oldest entry.
    cache.get(_key(seed=0))
    assert cache.keys() == [_key(seed=1), _key(seed=2), _key(seed=0)]
    assert cache.purge(max_entries=1) == 2
    assert cache.keys() == [_key(seed=0)]
    assert cache.purge(max_entries=1) == 0
    assert cache.purge() == 1
    assert cache.count() == 0


def test_cache_persists(tmp_path):
    directory = str(tmp_path / "cache")
    first = BasisCache(directory)
    first.put(_key(), specific_flexible_basis(1))
    first.close()
    second = BasisCache(directory)
    assert second.count() == 1
    second.close()
