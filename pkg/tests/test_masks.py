"""Bitmask helpers."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cascademc.masks import (
    in_service_bool,
    mask_from_ordinals,
    ordinals_from_mask,
    popcount,
    tripped_bool,
)


def test_mask_round_trip_examples():
    assert mask_from_ordinals([]) == 0
    assert mask_from_ordinals([0]) == 1
    assert mask_from_ordinals([0, 3]) == 9
    assert ordinals_from_mask(9) == (0, 3)
    assert popcount(9) == 2


def test_bool_views():
    mask = mask_from_ordinals([1, 4])
    t = tripped_bool(mask, 6)
    assert t.tolist() == [False, True, False, False, True, False]
    s = in_service_bool(mask, 6)
    assert np.array_equal(s, ~t)


def test_wide_masks_beyond_64_components():
    ords = [0, 63, 64, 200, 411]
    mask = mask_from_ordinals(ords)
    assert ordinals_from_mask(mask) == tuple(ords)
    assert popcount(mask) == 5
    b = tripped_bool(mask, 412)
    assert np.flatnonzero(b).tolist() == ords


@given(st.sets(st.integers(min_value=0, max_value=300), max_size=40))
def test_mask_ordinal_round_trip(ordinals):
    mask = mask_from_ordinals(sorted(ordinals))
    assert set(ordinals_from_mask(mask)) == ordinals
    assert popcount(mask) == len(ordinals)
    n = 301
    assert np.flatnonzero(tripped_bool(mask, n)).tolist() == sorted(ordinals)


def test_ordinals_treated_as_a_set():
    assert mask_from_ordinals([2, 2, 5]) == mask_from_ordinals([5, 2])


def test_negative_mask_rejected():
    with pytest.raises(ValueError):
        tripped_bool(-1, 4)
