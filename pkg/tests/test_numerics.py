import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from attnroute.numerics import ShapeError, cosine, layernorm, matmul, sdpa, softmax_rows

f32 = np.float32
finite = st.floats(-50, 50, allow_nan=False, width=32)


def t(rows):
    return np.array([rows], dtype=f32)


def test_matmul_identity():
    x = np.random.default_rng(0).standard_normal((2, 3, 4)).astype(f32)
    eye = np.eye(4, dtype=f32)[None]
    np.testing.assert_array_equal(matmul(x, eye), x)


def test_matmul_hand_case():
    # 1*5+2*7, 1*6+2*8 / 3*5+4*7, 3*6+4*8
    out = matmul(t([[1, 2], [3, 4]]), t([[5, 6], [7, 8]]))
    np.testing.assert_array_equal(out, t([[19, 22], [43, 50]]))


def test_matmul_zero_annihilates():
    x = np.random.default_rng(1).standard_normal((1, 3, 3)).astype(f32)
    assert not matmul(np.zeros((1, 3, 3), f32), x).any()


def test_matmul_rejects_bad_shapes():
    with pytest.raises(ShapeError, match=r"\(1, 2, 3\).*\(1, 2, 3\)"):
        matmul(np.zeros((1, 2, 3), f32), np.zeros((1, 2, 3), f32))
    with pytest.raises(ShapeError, match="batch"):
        matmul(np.zeros((2, 2, 3), f32), np.zeros((3, 3, 2), f32))
    # batch of 1 broadcasts
    assert matmul(np.ones((3, 2, 3), f32), np.ones((1, 3, 2), f32)).shape == (3, 2, 2)


def test_softmax_examples():
    np.testing.assert_array_equal(softmax_rows(t([[0, 0]])), t([[0.5, 0.5]]))
    big = softmax_rows(t([[1000, 0]]))
    assert np.all(np.isfinite(big))
    assert big[0, 0, 0] == pytest.approx(1.0) and big[0, 0, 1] == pytest.approx(0.0, abs=1e-30)
    out = softmax_rows(t([[math.log(1), math.log(2), math.log(3)]]))
    np.testing.assert_allclose(out, t([[1 / 6, 2 / 6, 3 / 6]]), atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(arrays(f32, st.tuples(st.integers(1, 3), st.integers(1, 5), st.integers(1, 8)), elements=finite))
def test_softmax_rows_sum_to_one(x):
    out = softmax_rows(x)
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out.sum(-1), 1.0, atol=1e-6)


def test_sdpa_single_token_returns_v():
    rng = np.random.default_rng(2)
    q, k, v = (rng.standard_normal((1, 1, 4)).astype(f32) for _ in range(3))
    np.testing.assert_array_equal(sdpa(q, k, v, 1), v)


def test_sdpa_identical_keys_average_values():
    rng = np.random.default_rng(3)
    q = rng.standard_normal((1, 3, 4)).astype(f32)
    k = np.repeat(rng.standard_normal((1, 1, 4)).astype(f32), 5, axis=1)
    v = rng.standard_normal((1, 5, 4)).astype(f32)
    out = sdpa(q, k, v, 2)
    np.testing.assert_allclose(out, np.broadcast_to(v.mean(1, keepdims=True), out.shape), atol=1e-6)


def _naive_attention_2tok(q, k, v):
    """Straight-line single-head attention for 2 tokens, d=2, in float64."""
    scale = 1 / math.sqrt(2)
    out = []
    for qi in q:
        l0 = (qi[0] * k[0][0] + qi[1] * k[0][1]) * scale
        l1 = (qi[0] * k[1][0] + qi[1] * k[1][1]) * scale
        m = max(l0, l1)
        e0, e1 = math.exp(l0 - m), math.exp(l1 - m)
        p0, p1 = e0 / (e0 + e1), e1 / (e0 + e1)
        out.append([p0 * v[0][0] + p1 * v[1][0], p0 * v[0][1] + p1 * v[1][1]])
    return out


def test_sdpa_matches_naive_oracle():
    q = [[0.5, -1.0], [2.0, 0.25]]
    k = [[1.0, 0.0], [-0.5, 1.5]]
    v = [[3.0, -2.0], [0.5, 4.0]]
    expected = _naive_attention_2tok(q, k, v)
    np.testing.assert_allclose(sdpa(t(q), t(k), t(v), 1)[0], expected, rtol=1e-6)


def test_sdpa_rejects_indivisible_heads():
    x = np.zeros((1, 2, 6), f32)
    with pytest.raises(ShapeError, match="divisible"):
        sdpa(x, x, x, 4)


def test_sdpa_query_permutation_equivariance():
    rng = np.random.default_rng(4)
    q = rng.standard_normal((1, 6, 8)).astype(f32)
    k = rng.standard_normal((1, 9, 8)).astype(f32)
    v = rng.standard_normal((1, 9, 8)).astype(f32)
    perm = rng.permutation(6)
    np.testing.assert_allclose(sdpa(q[:, perm], k, v, 2), sdpa(q, k, v, 2)[:, perm], atol=1e-6)


def test_sdpa_is_not_invariant_to_query_scaling():
    # softmax does not absorb a uniform rescaling of the logits
    rng = np.random.default_rng(5)
    q, k, v = (rng.standard_normal((1, 4, 4)).astype(f32) for _ in range(3))
    assert not np.allclose(sdpa(q, k, v, 1), sdpa(3 * q, k, v, 1))


def test_kernels_are_deterministic():
    rng = np.random.default_rng(6)
    q, k, v = (rng.standard_normal((1, 40, 32)).astype(f32) for _ in range(3))
    a = sdpa(q, k, v, 4)
    b = sdpa(q.copy(), k.copy(), v.copy(), 4)
    assert a.tobytes() == b.tobytes()
    assert layernorm(q).tobytes() == layernorm(q.copy()).tobytes()


def test_layernorm_zero_mean_unit_var():
    x = np.random.default_rng(7).standard_normal((1, 5, 16)).astype(f32) * 3 + 1
    y = layernorm(x)
    np.testing.assert_allclose(y.mean(-1), 0, atol=1e-6)
    np.testing.assert_allclose(y.var(-1), 1, atol=1e-3)


def test_cosine_endpoints_are_exact():
    x = np.random.default_rng(8).standard_normal(300).astype(f32)
    assert cosine(x, x) == (1.0, False)
    assert cosine(x, -x) == (-1.0, False)
    assert cosine(x, np.zeros_like(x)) == (0.0, True)
