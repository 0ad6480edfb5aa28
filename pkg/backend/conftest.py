"""
공용 fixture: 9개 leaf, 4번의 merger, 10개의 mutation을 가진 손으로 만든 genealogy
"""
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
# 테스트 중에는 파일 DB를 만들지 않음
os.environ.setdefault("COALESCENT_DATABASE_URL", "sqlite://")

from app.services.genealogy import replay


def _mut(t, lineage):
    return {"t": t, "kind": "mutation", "lineage": lineage}


def _merge(t, *participants):
    return {"t": t, "kind": "merger", "participants": list(participants)}


# lineage 10 = {1,2,3}, 11 = {6,7,8,9}, 12 = {4,5}, 13 = root
HAND_SCRIPT = [
    _mut(0.3, 8),
    _mut(0.4, 3),
    _mut(0.6, 1),
    _mut(1.0, 7),
    _mut(1.2, 3),
    _merge(1.5, 1, 2, 3),
    _merge(1.5, 6, 7, 8, 9),
    _mut(2.1, 4),
    _mut(2.3, 11),
    _merge(2.5, 4, 5),
    _mut(3.2, 11),
    _mut(3.7, 11),
    _merge(4.0, 10, 11, 12),
    _mut(5.0, 13),
]


@pytest.fixture
def hand_script():
    return [dict(e) for e in HAND_SCRIPT]


@pytest.fixture
def hand_genealogy():
    return replay(HAND_SCRIPT, 9)
