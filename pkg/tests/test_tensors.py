"""Tensor type invariants and unfolding correctness against index oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repscope.tensors import (
    ActTensor4,
    RepMatrix,
    flatten,
    refold,
    unfold_channel,
    unfold_sample,
)


def seq_tensor(n, c, h, w, start=1.0, tag="raw"):
    """Tensor whose element at (n,c,h,w) is its row-major ordinal."""
    data = np.arange(start, start + n * c * h * w).reshape(n, c, h, w)
    return ActTensor4(data, tag)


dims_strategy = st.tuples(st.integers(1, 4), st.integers(1, 4),
                          st.integers(1, 4), st.integers(1, 4))


class TestActTensor4:
    def test_rejects_wrong_ndim(self):
        with pytest.raises(ValueError, match="4 dimensions"):
            ActTensor4(np.zeros((2, 3)))

    def test_rejects_zero_dim(self):
        with pytest.raises(ValueError, match=">= 1"):
            ActTensor4(np.zeros((2, 0, 3, 3)))

    def test_rejects_nonfinite(self):
        data = np.ones((1, 1, 2, 2))
        data[0, 0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            ActTensor4(data)

    def test_post_relu_rejects_negative(self):
        with pytest.raises(ValueError, match="negative"):
            ActTensor4(np.array([[-1.0, 1.0]]).reshape(1, 1, 1, 2), "post_relu")

    def test_rejects_unknown_tag(self):
        with pytest.raises(ValueError, match="source_tag"):
            ActTensor4(np.ones((1, 1, 1, 1)), "mystery")

    def test_data_is_frozen(self):
        t = seq_tensor(1, 1, 2, 2)
        with pytest.raises(ValueError):
            t.data[0, 0, 0, 0] = 9.0


class TestUnfoldings:
    def test_unfold_channel_shape(self):
        m = unfold_channel(seq_tensor(2, 3, 2, 2))
        assert (m.rows, m.cols) == (3, 8)
        assert m.axis_tag == "by_channel"

    def test_unfold_channel_singleton(self):
        t = ActTensor4(np.array([[[[5.0]]]]))
        m = unfold_channel(t)
        assert m.data.tolist() == [[5.0]]

    def test_unfold_channel_indexing_oracle(self):
        # dims (2,2,1,2), data 1..8 row-major: channel rows gather every
        # (n,h,w) element of that channel.
        t = seq_tensor(2, 2, 1, 2)
        m = unfold_channel(t)
        assert m.data.tolist() == [[1, 2, 5, 6], [3, 4, 7, 8]]

    def test_unfold_channel_matches_bruteforce(self):
        t = seq_tensor(3, 4, 2, 3, start=0.5)
        n, c, h, w = t.dims
        m = unfold_channel(t)
        for ci in range(c):
            expected = [t.data[ni, ci, hi, wi]
                        for ni in range(n) for hi in range(h) for wi in range(w)]
            assert m.data[ci].tolist() == expected

    def test_unfold_sample_indexing_oracle(self):
        t = seq_tensor(2, 2, 1, 2)
        m = unfold_sample(t)
        assert m.data.tolist() == [[1, 2, 3, 4], [5, 6, 7, 8]]
        assert m.axis_tag == "by_sample"

    def test_unfold_sample_single_sample_identity(self):
        t = seq_tensor(1, 5, 1, 1)
        assert unfold_sample(t).data.tolist() == [[1, 2, 3, 4, 5]]

    def test_unfold_sample_refold_roundtrip(self):
        t = seq_tensor(2, 3, 2, 2, tag="post_relu")
        back = refold(unfold_sample(t), t.dims, t.source_tag)
        assert np.array_equal(back.data, t.data)
        assert back.source_tag == "post_relu"

    def test_unfold_channel_refold_roundtrip(self):
        t = seq_tensor(2, 3, 4, 2)
        back = refold(unfold_channel(t), t.dims)
        assert np.array_equal(back.data, t.data)

    def test_flatten_layout(self):
        t = seq_tensor(2, 1, 1, 2)
        m = flatten(t)
        assert (m.rows, m.cols) == (1, 4)
        assert m.data.tolist() == [[1, 2, 3, 4]]

    def test_flatten_conserves_sum(self):
        t = seq_tensor(2, 3, 2, 2)
        assert flatten(t).data.sum() == t.data.sum()

    def test_refold_rejects_wrong_dims(self):
        t = seq_tensor(2, 2, 1, 2)
        with pytest.raises(ValueError, match="element count"):
            refold(unfold_sample(t), (2, 2, 2, 2))


@settings(max_examples=80, deadline=None)
@given(dims=dims_strategy, data=st.data())
def test_unfoldings_preserve_multiset(dims, data):
    """Every unfolding preserves the element multiset (sum, min, max)."""
    n, c, h, w = dims
    values = data.draw(st.lists(
        st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False, width=64),
        min_size=n * c * h * w, max_size=n * c * h * w))
    t = ActTensor4(np.array(values).reshape(dims))
    for m in (unfold_channel(t), unfold_sample(t), flatten(t)):
        assert m.data.size == t.size
        assert sorted(m.data.ravel()) == sorted(t.data.ravel())


@settings(max_examples=40, deadline=None)
@given(dims=dims_strategy)
def test_unfold_refold_identity(dims):
    rng = np.random.default_rng(7)
    t = ActTensor4(rng.uniform(0, 1, dims), "post_relu")
    for unfolder in (unfold_channel, unfold_sample, flatten):
        back = refold(unfolder(t), dims, "post_relu")
        assert np.array_equal(back.data, t.data)


def test_repmatrix_rejects_bad_tag():
    with pytest.raises(ValueError, match="axis_tag"):
        RepMatrix(np.ones((2, 2)), "sideways")
