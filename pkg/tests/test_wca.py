import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sdmvsum import numerics as nx
from sdmvsum import wca
from sdmvsum.gradcheck import central_difference, rel_error
from sdmvsum.numerics import DimensionError, Graph

from oracles import cross_attention_loops
from wca_cases import (random_params, single_key_outputs, softmax_entropy, unscaled_variant_case,
                       zero_similarity_case)


def cos(x, y):
    g = Graph(np.float64)
    return wca.cosine_similarity(g.constant(x), g.constant(y)).value


def test_cosine_examples():
    v = np.array([[0.6, 0.8]])
    assert cos(v, v)[0, 0] == pytest.approx(1.0)
    assert cos([[1.0, 0.0]], [[0.0, 3.0]])[0, 0] == 0.0
    s = cos([[1.0, 0.0], [1.0, 1.0]], [[0.0, 1.0]])
    # scalar dot / norm oracle
    expected = [[0.0], [1.0 / np.sqrt(2.0)]]
    assert np.allclose(s, expected, atol=1e-12)
    assert np.allclose(s, [[0.0], [0.70711]], atol=1e-5)


def test_cosine_dimension_mismatch():
    with pytest.raises(DimensionError):
        cos(np.ones((2, 3)), np.ones((2, 4)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 3), elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, (2, 3), elements=st.floats(-1e3, 1e3)))
def test_cosine_entries_bounded(x, y):
    s = cos(x, y)
    assert np.all(np.abs(s) <= 1 + 1e-9)


def test_pe_examples():
    pe = wca.sinusoidal_pe(4, 4)
    assert pe[0].tolist() == [0.0, 1.0, 0.0, 1.0]
    assert pe[2, 0] == pytest.approx(np.sin(2.0), abs=1e-12)
    assert pe[2, 0] == pytest.approx(0.90930, abs=1e-5)
    big = wca.sinusoidal_pe(50, 16)
    assert np.all(np.abs(big) <= 1)
    with pytest.raises(ValueError):
        wca.sinusoidal_pe(3, 5)


def test_matches_scalar_loop_oracle(rng):
    for heads, (n, m, d) in [(1, (2, 2, 4)), (2, (3, 4, 8)), (4, (5, 1, 8))]:
        p = random_params(rng, d, heads)
        x, y = rng.standard_normal((n, d)), rng.standard_normal((m, d))
        pe = wca.sinusoidal_pe(n, d)
        out = wca.apply(p, x, y, pe)
        ref = cross_attention_loops(x, y, p.w_q, p.w_k, p.w_v, p.w_o, pe)
        assert np.allclose(out, ref, atol=1e-5)
        out2 = wca.apply(p, x, y, pe, use_similarity=False)
        ref2 = cross_attention_loops(x, y, p.w_q, p.w_k, p.w_v, p.w_o, pe, weighting="sqrt")
        assert np.allclose(out2, ref2, atol=1e-5)


def test_single_key_ignores_similarity(rng):
    for _ in range(10):
        a, b = single_key_outputs(rng)
        assert np.array_equal(a, b)


def test_zero_similarity_gives_uniform_attention(rng):
    for _ in range(10):
        out, expected = zero_similarity_case(rng)
        assert np.allclose(out, expected, atol=1e-5)


def test_unscaled_variant_matches_reference_and_skips_similarity(rng):
    before = wca.SIMILARITY_CALLS
    for _ in range(10):
        out, ref = unscaled_variant_case(rng)
        assert np.allclose(out, ref, atol=1e-5)
    assert wca.SIMILARITY_CALLS == before


def test_output_shape_independent_of_keys(rng):
    p = random_params(rng, 8, 2)
    x = rng.standard_normal((5, 8))
    for m in (1, 3, 11):
        assert wca.apply(p, x, rng.standard_normal((m, 8))).shape == (5, 8)


def test_key_permutation_invariance(rng):
    for _ in range(20):
        p = random_params(rng, 8, 2)
        x, y = rng.standard_normal((4, 8)), rng.standard_normal((6, 8))
        perm = rng.permutation(6)
        assert np.allclose(wca.apply(p, x, y), wca.apply(p, x, y[perm]), atol=1e-5)


def test_entropy_nondecreasing_as_similarity_shrinks(rng):
    for _ in range(50):
        a = rng.uniform(0.1, 3.0, (3, 6))
        s = rng.uniform(0.1, 1.0, (3, 6))
        ent = [softmax_entropy(a * (c * s)) for c in (1.0, 0.5, 0.1, 0.0)]
        for lo, hi in zip(ent, ent[1:]):
            assert np.all(hi >= lo - 1e-12)
        assert np.allclose(ent[-1], np.log(6))


def test_errors():
    p = random_params(np.random.default_rng(0), 8, 2)
    with pytest.raises(DimensionError):
        wca.apply(p, np.ones((3, 8)), np.ones((2, 6)))
    with pytest.raises(DimensionError):
        wca.apply(p, np.ones((3, 6)), np.ones((2, 6)))
    with pytest.raises(DimensionError):
        wca.param_shapes("x", 8, 3)
    with pytest.raises(DimensionError):
        wca.apply(p, np.ones((3, 8)), np.ones((2, 8)), pe=np.zeros((2, 8)))


@pytest.mark.parametrize("use_similarity", [True, False])
def test_gradients_match_finite_differences(rng, use_similarity):
    n, m, d, h = 4, 3, 8, 2
    p = random_params(rng, d, h)
    x, y = rng.standard_normal((n, d)), rng.standard_normal((m, d))
    pe = wca.sinusoidal_pe(n, d)
    names = [f"wca.{k}{i}" for k in "qkv" for i in range(h)] + ["wca.out"]
    arrays_ = p.w_q + p.w_k + p.w_v + [p.w_o]

    def run(with_grad):
        g = Graph(np.float64)
        blk = wca.to_tensors(g, p, trainable=with_grad)
        out = wca.wca_forward(blk, g.constant(x), g.constant(y), pe, use_similarity)
        loss = nx.sum_all(out)
        return g.backward(loss) if with_grad else float(loss.value[0, 0])

    analytic = run(True)
    for name, arr in zip(names, arrays_):
        numeric = central_difference(lambda: run(False), arr, 1e-6)
        assert rel_error(analytic[name], numeric).max() < 1e-4, name
