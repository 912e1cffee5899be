import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rfmlsim.classifier import predict_top1
from rfmlsim.errors import InvalidInputError
from rfmlsim.metrics import (
    confusion_matrix,
    difference_in_logits,
    difference_in_logits_batch,
    ej_n0_db,
    percentile_summary,
    top1_accuracy,
)

logit_rows = arrays(np.float64, st.integers(2, 11), elements=st.floats(-50, 50))


class TestDifferenceInLogits:
    @pytest.mark.parametrize("logits, source, expected", [
        ([3.0, 1.0, 2.0], 0, 1.0),
        ([3.0, 1.0, 2.0], 1, -2.0),
        ([0.5, 0.5], 0, 0.0),
    ])
    def test_examples(self, logits, source, expected):
        assert difference_in_logits(logits, source) == expected

    def test_needs_two_classes(self):
        with pytest.raises(InvalidInputError):
            difference_in_logits([1.0], 0)

    def test_source_range(self):
        with pytest.raises(InvalidInputError):
            difference_in_logits([1.0, 2.0], 2)

    @given(logit_rows, st.data())
    def test_sign_matches_top1(self, logits, data):
        source = data.draw(st.integers(0, logits.size - 1))
        delta = difference_in_logits(logits, source)
        winner = int(predict_top1(logits[None])[0])
        if delta > 0:
            assert winner == source
        if delta < 0:
            assert winner != source

    @given(arrays(np.float64, (6, 4), elements=st.floats(-20, 20)), st.data())
    def test_batch_matches_scalar(self, logits, data):
        sources = np.array(data.draw(st.lists(st.integers(0, 3), min_size=6, max_size=6)))
        batch = difference_in_logits_batch(logits, sources)
        assert np.allclose(batch, [difference_in_logits(l, s) for l, s in zip(logits, sources)])


class TestAccuracy:
    def test_top1(self):
        assert top1_accuracy([0, 1, 2, 2], [0, 1, 1, 2]) == 0.75

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            top1_accuracy([], [])

    def test_confusion(self):
        cm = confusion_matrix([0, 1, 1, 2], [0, 1, 2, 2], 3)
        assert cm.tolist() == [[1, 0, 0], [0, 1, 0], [0, 1, 1]]
        assert cm.sum() == 4

    def test_ej_n0(self):
        assert ej_n0_db(20.0, 10.0) == 10.0
        assert ej_n0_db(0.0, 10.0) == -10.0


class TestPercentiles:
    def test_linear_interpolation(self):
        s = percentile_summary([1.0, 2.0, 3.0, 4.0])
        assert (s.mean, s.p25, s.p50, s.p75) == (2.5, 1.75, 2.5, 3.25)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=100))
    def test_ordering(self, values):
        s = percentile_summary(values)
        assert s.p25 <= s.p50 <= s.p75
        assert min(values) <= s.p25 and s.p75 <= max(values)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            percentile_summary([])
