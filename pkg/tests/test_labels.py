import itertools

import pytest
from hypothesis import given, strategies as st

from spawnglmb.labels import (
    Label,
    ancestor,
    classify,
    format_label,
    make_birth_label,
    make_spawn_label,
    parse_label,
    partition,
    root,
    spawn_label_space,
)


def test_birth_label_basic():
    assert make_birth_label(1, 1).path == (1, 1)
    assert make_birth_label(55, 3).path == (55, 3)
    assert make_birth_label(7, 1).generation == 0


def test_birth_label_rejects_zero_index():
    with pytest.raises(ValueError):
        make_birth_label(1, 0)


def test_spawn_label_lineage():
    parent = make_birth_label(1, 1)
    gen1 = make_spawn_label(parent, 10, 1)
    assert gen1.path == (1, 1, 10, 1)
    gen2 = make_spawn_label(gen1, 56, 1)
    assert gen2.path == (1, 1, 10, 1, 56, 1)
    assert gen2.generation == gen1.generation + 1 == 2


def test_spawn_label_rejects_non_increasing_time():
    parent = make_birth_label(5, 1)
    with pytest.raises(ValueError):
        make_spawn_label(parent, 5, 1)
    with pytest.raises(ValueError):
        make_spawn_label(parent, 4, 1)


def test_ancestor_chain():
    gen2 = parse_label("1,1,10,1,56,1")
    assert ancestor(gen2) == parse_label("1,1,10,1")
    assert ancestor(make_birth_label(1, 1)) is None
    lab = gen2
    for _ in range(gen2.generation):
        lab = ancestor(lab)
    assert lab == make_birth_label(1, 1) == root(gen2)


def test_spawn_label_space_single_parent():
    parents = [make_birth_label(1, 1)]
    assert spawn_label_space(parents, 10, 1) == (parse_label("1,1,10,1"),)
    assert spawn_label_space([], 10, 1) == ()


def test_spawn_label_space_two_parents_m2():
    parents = [make_birth_label(1, 1), make_birth_label(2, 2)]
    labels = spawn_label_space(parents, 10, 2)
    # hand enumeration of the product construction
    expected = {
        parse_label("1,1,10,1"),
        parse_label("1,1,10,2"),
        parse_label("2,2,10,1"),
        parse_label("2,2,10,2"),
    }
    assert set(labels) == expected
    assert len(labels) == len(set(labels)) == 4


def test_classification_disjoint_and_total():
    time = 10
    labels = [
        make_birth_label(10, 1),  # birth now
        make_birth_label(3, 1),  # surviving
        make_spawn_label(make_birth_label(3, 1), 10, 1),  # spawn now
        make_spawn_label(make_birth_label(2, 2), 7, 1),  # surviving spawn
    ]
    kinds = [classify(lab, time) for lab in labels]
    assert kinds == ["birth", "surviving", "spawn", "surviving"]
    split = partition(labels, time)
    groups = [split.births, split.surviving, split.spawns]
    for a, b in itertools.combinations(groups, 2):
        assert not (a & b)
    assert split.births | split.surviving | split.spawns == set(labels)


def test_serialization_matches_printed_form():
    lab = parse_label("1,1,10,1,56,1")
    assert format_label(lab) == "1,1,10,1,56,1"
    assert str(lab) == "1,1,10,1,56,1"


@given(
    st.lists(
        st.tuples(st.integers(1, 6), st.integers(1, 3)),
        min_size=1,
        max_size=5,
    )
)
def test_round_trip_small_alphabet(pairs):
    # build a valid strictly-increasing-time path from arbitrary pairs
    path = []
    time = 0
    for dt, idx in pairs:
        time += dt
        path.extend((time, idx))
    lab = Label(tuple(path))
    assert parse_label(format_label(lab)) == lab
    assert lab.generation == len(pairs) - 1


@given(st.integers(1, 50), st.integers(1, 50), st.integers(1, 5))
def test_ancestor_of_spawn_is_parent(t_birth, dt, idx):
    parent = make_birth_label(t_birth, idx)
    child = make_spawn_label(parent, t_birth + dt, idx)
    assert ancestor(child) == parent


def test_canonical_order_is_lexicographic_on_flat_path():
    labs = [parse_label(s) for s in ("2,1", "1,2", "1,1,10,1", "1,1", "1,1,9,2")]
    ordered = [format_label(lab) for lab in sorted(labs)]
    assert ordered == ["1,1", "1,1,9,2", "1,1,10,1", "1,2", "2,1"]
