#!/usr/bin/env python3
"""
genealogy replay / lineage 상태 / export-import 테스트
"""
import json
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from app.core.errors import BadParameter, ConfigError, InactiveLineage, NonmonotoneTime, UnknownLineage
from app.services.genealogy import (
    LineageTracker,
    UnionFind,
    export_genealogy,
    import_genealogy,
    replay,
)


def test_hand_genealogy_times(hand_genealogy):
    assert hand_genealogy.tau == 4.0
    assert hand_genealogy.tau_star == 5.0
    assert hand_genealogy.end_time == 5.0
    assert hand_genealogy.mutation_count == 10
    assert hand_genealogy.is_complete


def test_merger_ids_are_fresh(hand_genealogy):
    mergers = [e for e in hand_genealogy.events if e.kind == "merger"]
    assert [e.new_id for e in mergers] == [10, 11, 12, 13]
    assert mergers[-1].participants == (10, 11, 12)


def test_mutation_ids_are_consecutive(hand_genealogy):
    ids = [e.mutation_id for e in hand_genealogy.events if e.kind == "mutation"]
    assert ids == list(range(1, 11))


def test_single_leaf_has_tau_zero():
    g = replay([{"t": 0.7, "kind": "mutation", "lineage": 1}], 1)
    assert g.tau == 0.0
    assert g.tau_star == 0.7


def test_partial_genealogy_has_no_tau():
    g = replay([{"t": 0.5, "kind": "merger", "participants": [1, 2]}], 3, end_time=0.8)
    assert g.tau is None
    assert g.tau_star is None
    assert g.end_time == 0.8
    assert not g.is_complete


def test_mutation_on_merged_lineage_rejected(hand_script):
    hand_script.insert(6, {"t": 1.5, "kind": "mutation", "lineage": 2})
    with pytest.raises(InactiveLineage):
        replay(hand_script, 9)


def test_unknown_lineage_rejected():
    with pytest.raises(UnknownLineage):
        replay([{"t": 0.1, "kind": "mutation", "lineage": 12}], 4)


def test_time_must_not_decrease(hand_script):
    hand_script[2]["t"] = 0.2
    with pytest.raises(NonmonotoneTime):
        replay(hand_script, 9)


def test_merger_needs_two_lineages():
    with pytest.raises(BadParameter):
        replay([{"t": 0.1, "kind": "merger", "participants": [1]}], 3)
    with pytest.raises(BadParameter):
        replay([{"t": 0.1, "kind": "merger", "participants": [1, 1]}], 3)


def test_malformed_event_is_config_error():
    with pytest.raises(ConfigError):
        replay([{"t": 0.1, "kind": "jump"}], 3)


def test_union_find_tracks_members():
    uf = UnionFind(6)
    a = uf.union([uf.find(1), uf.find(2)])
    b = uf.union([uf.find(3), uf.find(4), uf.find(5)])
    root = uf.union([a, b])
    assert uf.size(root) == 5
    assert sorted(uf.members[root]) == [1, 2, 3, 4, 5]
    assert uf.find(1) == uf.find(5) == root
    assert uf.find(6) == 6


def test_tracker_open_state():
    """merge 결과는 하나라도 open이면 open"""
    tr = LineageTracker(4)
    assert tr.mutate(1) is True
    assert tr.mutate(1) is False
    assert tr.n_open == 3
    closed = tr.merge([1, 3])  # 1 closed, 3 open
    assert tr.open[closed] is True
    tr.mutate(2)
    tr.mutate(4)
    both_closed = tr.merge([2, 4])
    assert tr.open[both_closed] is False
    assert tr.closed_count == 1
    assert tr.partition() == [(1, 3), (2, 4)]


def test_export_import_round_trip(hand_genealogy):
    text = export_genealogy(hand_genealogy)
    doc = json.loads(text)
    assert doc["n"] == 9
    assert doc["tau"] == 4.0
    assert "gamma" not in doc  # None fields are dropped
    again = import_genealogy(text)
    assert again.events == hand_genealogy.events
    assert again.tau_star == hand_genealogy.tau_star


def test_import_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        import_genealogy('{"n": 3, "events": [], "colour": "red"}')


@pytest.mark.parametrize("key, value", [("tau", 3.5), ("tau_star", 6.0)])
def test_import_rejects_inconsistent_stop_times(hand_genealogy, key, value):
    doc = json.loads(export_genealogy(hand_genealogy))
    doc[key] = value
    with pytest.raises(ConfigError, match=key):
        import_genealogy(json.dumps(doc))
