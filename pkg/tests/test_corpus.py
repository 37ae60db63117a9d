import numpy as np
import pytest

from mvtrace import corpus
from mvtrace.errors import DomainError
from mvtrace.manifold import TargetManifold


@pytest.mark.parametrize("family", corpus.FAMILIES)
@pytest.mark.parametrize("d,manifold", [(1, "sphere:3"), (2, "circle"), (1, "euclidean:2")])
def test_generate_is_deterministic_and_valid(family, d, manifold):
    a = corpus.generate(family, 42, d=d, n=16, manifold=manifold)
    b = corpus.generate(family, 42, d=d, n=16, manifold=manifold)
    assert a.to_json() == b.to_json()
    assert a.counts == (16,) * d and np.allclose(a.origin, -1.0) and a.h == 0.125
    m = TargetManifold.from_id(manifold)
    assert np.all(m.contains(a.values))
    if m.curved:
        # every value stays within the angle cap of the tail, far from antipodal
        assert np.all(a.tail_distances() <= corpus.MAX_ANGLE + 1e-12)


def components_1d(mask):
    return int(np.sum(np.diff(np.r_[0, mask.astype(int), 0]) == 1))


@pytest.mark.parametrize("seed", range(10))
def test_multi_bump_has_separate_components(seed):
    u = corpus.generate("multi-bump", seed, d=1, n=32)
    assert components_1d(u.tail_distances() > 0) == 3
    u5 = corpus.generate("multi-bump", seed, d=1, n=32, n_bumps=5)
    assert components_1d(u5.tail_distances() > 0) == 5


def test_family_shapes():
    assert np.all(corpus.generate("constant", 1, d=2, n=8).tail_distances() == 0)
    step = corpus.generate("two-valued-step", 1, d=1, n=16)
    dist = step.tail_distances()
    assert np.all(dist[:8] > 0) and np.all(dist[8:] == 0)
    assert np.all(step.values[:8] == step.values[0])
    single = corpus.generate("single-bump", 3, d=2, n=16)
    assert 0 < np.count_nonzero(single.tail_distances()) < 256
    smooth = corpus.generate("smooth-sampled", 3, d=1, n=32)
    # compact support inside the window: the outermost cells equal the tail
    assert smooth.tail_distances()[0] == 0 and smooth.tail_distances()[-1] == 0


def test_unknown_family_and_impossible_bumps():
    with pytest.raises(corpus.UnknownFamily):
        corpus.generate("zigzag", 1)
    with pytest.raises(DomainError):
        corpus.generate("multi-bump", 1, n=8, n_bumps=3)


def test_corpus_children_differ_and_repeat():
    one = corpus.generate_corpus(7, n=16)
    two = corpus.generate_corpus(7, n=16)
    assert list(one) == list(corpus.FAMILIES)
    assert all(one[f].to_json() == two[f].to_json() for f in one)
    other = corpus.generate_corpus(8, ("single-bump",), n=16)
    assert other["single-bump"].to_json() != one["single-bump"].to_json()
