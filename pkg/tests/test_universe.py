import hashlib
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracesynth.universe import (
    UniverseError,
    bundled_universe_path,
    dumps_universe,
    generate_planted_universe,
    generate_synthetic_universe,
    load_universe,
    save_universe,
)


def write(tmp_path, doc):
    p = tmp_path / "u.json"
    p.write_text(json.dumps(doc))
    return p


def test_load_three_calls(tmp_path):
    p = write(tmp_path, {
        "version": 1,
        "syscalls": [{"name": "open"}, {"name": "read"}, {"name": "close"}],
        "explicit": [["open", "read"], ["open", "close"]],
        "implicit": [],
    })
    u = load_universe(p)
    assert u.n == 3
    assert len(u.deps.explicit) == 2 and len(u.deps.implicit) == 0
    assert u.deps.has_explicit(0, 1) and not u.deps.has_explicit(1, 0)
    assert [s.base_coverage for s in u.specs] == [50, 50, 50]


@pytest.mark.parametrize("doc", [
    {"version": 1, "syscalls": [{"name": "read"}], "explicit": [["read", "read"]]},
    {"version": 1, "syscalls": [{"name": "a"}, {"name": "b"}], "implicit": [["b", "b"]]},
    {"version": 1, "syscalls": [{"name": "a"}, {"name": "a"}]},
    {"version": 1, "syscalls": [{"name": "a"}], "explicit": [["a", "ghost"]]},
    {"version": 2, "syscalls": [{"name": "a"}]},
    {"version": 1, "syscalls": [{"name": "a", "base_coverage": 0}]},
    {"version": 1, "syscalls": [{"name": "a,b"}]},
    {"version": 1, "syscalls": [{"nom": "a"}]},
])
def test_invalid_documents(tmp_path, doc):
    with pytest.raises(UniverseError):
        load_universe(write(tmp_path, doc))


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{version: 1")
    with pytest.raises(UniverseError):
        load_universe(p)


def test_bundled_universe_has_331_calls():
    u = load_universe(bundled_universe_path())
    assert u.n == 331
    assert u.name == "linux-like"
    open_, read = u.index("open"), u.index("read")
    assert u.deps.has_explicit(open_, read)
    assert u.deps.has_implicit(u.index("pwritev"), u.index("openat"))
    assert bundled_universe_path().read_text() == dumps_universe(u)


def test_generate_two_complete():
    u = generate_synthetic_universe(2, 1.0, 1.0, 7)
    assert u.deps.explicit == {(0, 1), (1, 0)}
    assert u.deps.implicit == {(0, 1)}


def test_generate_deterministic():
    assert generate_synthetic_universe(16, 0.1, 0.1, 1) == generate_synthetic_universe(16, 0.1, 0.1, 1)
    assert generate_synthetic_universe(16, 0.1, 0.1, 1) != generate_synthetic_universe(16, 0.1, 0.1, 2)


def test_generate_regression():
    u = generate_synthetic_universe(16, 0.1, 0.1, 1)
    assert len(u.deps.explicit) == 24
    assert len(u.deps.implicit) == 12
    digest = hashlib.sha256(dumps_universe(u).encode()).hexdigest()
    assert digest == "349e49bb096564b0a0c99f25c3c48a3dee5b17038697c84ca4d81c054007fd2d"


@pytest.mark.parametrize("args", [(1, 0.1, 0.1, 0), (4, -0.1, 0.1, 0), (4, 0.1, 1.5, 0)])
def test_generate_rejects(args):
    with pytest.raises(UniverseError):
        generate_synthetic_universe(*args)


universes = st.builds(
    generate_synthetic_universe,
    st.integers(2, 12),
    st.floats(0, 1),
    st.floats(0, 1),
    st.integers(0, 2**32),
)


@settings(max_examples=60, deadline=None)
@given(universes)
def test_pair_counts_and_hygiene(u):
    n = u.n
    assert all(a != b for a, b in u.deps.explicit | u.deps.implicit)
    assert all(a < b for a, b in u.deps.implicit)
    for a in range(n):
        for b in range(n):
            assert u.deps.has_implicit(a, b) == u.deps.has_implicit(b, a)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.floats(0, 1), st.floats(0, 1), st.integers(0, 1000))
def test_density_targets(n, de, di, seed):
    u = generate_synthetic_universe(n, de, di, seed)
    assert abs(len(u.deps.explicit) - de * n * (n - 1)) <= 1
    assert abs(len(u.deps.implicit) - di * n * (n - 1) / 2) <= 1


@settings(max_examples=40, deadline=None)
@given(universes)
def test_save_load_byte_identical(tmp_path_factory, u):
    p = tmp_path_factory.mktemp("u") / "u.json"
    save_universe(u, p)
    first = p.read_bytes()
    again = load_universe(p)
    assert again == u
    save_universe(again, p)
    assert p.read_bytes() == first


def test_planted_group_is_complete():
    u = generate_planted_universe(8, 3, 5)
    assert {(0, 6), (0, 5), (6, 5)} <= u.deps.explicit
    assert {(0, 6), (0, 5), (5, 6)} <= u.deps.implicit
