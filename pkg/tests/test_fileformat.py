from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conndiff import fileformat as ff


def test_header_split():
    assert ff.split_header("conndiff-x v1\nbody\n", "conndiff-x") == "body\n"
    with pytest.raises(ff.FormatError, match="empty document"):
        ff.split_header("   \n", "conndiff-x")
    with pytest.raises(ff.FormatError):
        ff.split_header("something else\n", "conndiff-x")
    with pytest.raises(ff.FormatError, match="version"):
        ff.split_header("conndiff-x v3\n", "conndiff-x")


scalars = st.one_of(
    st.booleans(),
    st.integers(-(10**12), 10**12),
    st.text(st.characters(blacklist_categories=("Cs",)), max_size=30),
)


@given(scalars)
def test_scalar_round_trip(value):
    back = ff.parse_scalar(ff.format_scalar(value))
    assert back == value and type(back) is type(value)


def test_atomic_write_replaces(tmp_path):
    target = tmp_path / "deep" / "f.txt"
    ff.atomic_write(target, "one")
    ff.atomic_write(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["f.txt"]


def test_yaml_and_json_helpers(tmp_path):
    ff.write_yaml(tmp_path / "a.yaml", "conndiff-x", {"k": [1, 2]})
    assert ff.read_yaml(tmp_path / "a.yaml", "conndiff-x") == {"k": [1, 2]}
    (tmp_path / "b.json").write_text(ff.dumps_json("conndiff-y", {"z": 1}))
    assert ff.read_json(tmp_path / "b.json", "conndiff-y") == {"z": 1}
