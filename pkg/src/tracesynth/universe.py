"""Syscall vocabulary and the explicit/implicit dependency relations between calls.

A universe is loaded from a small JSON document::

    {
      "version": 1,
      "name": "demo",                       # optional
      "syscalls": [{"name": "open", "base_coverage": 50}, {"name": "read"}],
      "explicit": [["open", "read"]],       # producer -> consumer
      "implicit": [["open", "read"]]        # unordered
    }

Indices are assigned in file order. ``base_coverage`` defaults to 50.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import combinations, permutations
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
DEFAULT_BASE_COVERAGE = 50


class UniverseError(ValueError):
    """Malformed or inconsistent universe definition."""


@dataclass(frozen=True)
class SyscallSpec:
    name: str
    base_coverage: int = DEFAULT_BASE_COVERAGE


@dataclass(frozen=True)
class DependencyGraph:
    """Explicit pairs are ordered ``(producer, consumer)``; implicit pairs are
    stored normalized as ``(min, max)`` so membership is symmetric."""

    explicit: frozenset[tuple[int, int]] = frozenset()
    implicit: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "explicit", frozenset(self.explicit))
        object.__setattr__(
            self, "implicit", frozenset(_norm(a, b) for a, b in self.implicit)
        )

    def has_explicit(self, producer: int, consumer: int) -> bool:
        return (producer, consumer) in self.explicit

    def has_implicit(self, a: int, b: int) -> bool:
        return _norm(a, b) in self.implicit


def _norm(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class SyscallUniverse:
    specs: tuple[SyscallSpec, ...]
    deps: DependencyGraph = field(default_factory=DependencyGraph)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        _validate(self)
        object.__setattr__(
            self, "_index", {s.name: i for i, s in enumerate(self.specs)}
        )

    @property
    def n(self) -> int:
        return len(self.specs)

    def __len__(self) -> int:
        return len(self.specs)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    @property
    def base_coverage(self) -> np.ndarray:
        return np.array([s.base_coverage for s in self.specs], dtype=np.int64)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UniverseError(f"unknown syscall {name!r}") from None

    def name_of(self, idx: int) -> str:
        return self.specs[idx].name

    @property
    def universe_id(self) -> str:
        """Content hash of the canonical serialization, used to tie corpora to
        the universe they were built against."""
        digest = hashlib.sha256(dumps_universe(self).encode()).hexdigest()[:12]
        return f"{self.name}@{digest}" if self.name else digest


def _validate(u: SyscallUniverse) -> None:
    seen = set()
    for s in u.specs:
        if not isinstance(s.name, str) or not s.name:
            raise UniverseError(f"invalid syscall name {s.name!r}")
        if "," in s.name or any(c.isspace() for c in s.name):
            raise UniverseError(f"syscall name {s.name!r} contains a separator")
        if s.name in seen:
            raise UniverseError(f"duplicate syscall name {s.name!r}")
        seen.add(s.name)
        if not isinstance(s.base_coverage, int) or s.base_coverage < 1:
            raise UniverseError(f"{s.name}: base_coverage must be a positive integer")
    n = len(u.specs)
    for kind, pairs in (("explicit", u.deps.explicit), ("implicit", u.deps.implicit)):
        for a, b in pairs:
            if not (0 <= a < n and 0 <= b < n):
                raise UniverseError(f"{kind} pair ({a}, {b}) references unknown id")
            if a == b:
                raise UniverseError(f"{kind} self-dependency on {u.specs[a].name!r}")


def universe_to_dict(u: SyscallUniverse) -> dict:
    names = u.names
    doc: dict = {"version": FORMAT_VERSION}
    if u.name:
        doc["name"] = u.name
    doc["syscalls"] = [
        {"name": s.name, "base_coverage": s.base_coverage} for s in u.specs
    ]
    doc["explicit"] = [[names[a], names[b]] for a, b in sorted(u.deps.explicit)]
    doc["implicit"] = [[names[a], names[b]] for a, b in sorted(u.deps.implicit)]
    return doc


def universe_from_dict(doc: dict) -> SyscallUniverse:
    if not isinstance(doc, dict):
        raise UniverseError("universe document must be an object")
    if doc.get("version") != FORMAT_VERSION:
        raise UniverseError(f"unsupported universe version {doc.get('version')!r}")
    try:
        specs = [
            SyscallSpec(e["name"], e.get("base_coverage", DEFAULT_BASE_COVERAGE))
            for e in doc["syscalls"]
        ]
    except (KeyError, TypeError, AttributeError) as exc:
        raise UniverseError(f"malformed syscalls list: {exc}") from None
    index = {}
    for i, s in enumerate(specs):
        if s.name in index:
            raise UniverseError(f"duplicate syscall name {s.name!r}")
        index[s.name] = i

    def resolve(kind):
        out = []
        for pair in doc.get(kind, []):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise UniverseError(f"{kind} entries must be [name, name] pairs")
            try:
                out.append((index[pair[0]], index[pair[1]]))
            except (KeyError, TypeError):
                raise UniverseError(f"{kind} pair {pair} names an unknown syscall") from None
        return out

    explicit, implicit = resolve("explicit"), resolve("implicit")
    for kind, pairs in (("explicit", explicit), ("implicit", implicit)):
        for a, b in pairs:
            if a == b:
                raise UniverseError(f"{kind} self-dependency on {specs[a].name!r}")
    return SyscallUniverse(
        specs, DependencyGraph(frozenset(explicit), frozenset(implicit)), doc.get("name", "")
    )


def dumps_universe(u: SyscallUniverse) -> str:
    return json.dumps(universe_to_dict(u), indent=1) + "\n"


def save_universe(u: SyscallUniverse, path) -> None:
    Path(path).write_text(dumps_universe(u), encoding="utf-8")


def load_universe(path) -> SyscallUniverse:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UniverseError(f"{path}: not valid JSON ({exc})") from None
    return universe_from_dict(doc)


def bundled_universe_path() -> Path:
    """Path of the shipped 331-call Linux-like universe. Its names come from the
    x86_64 syscall table; the dependency pairs are illustrative only."""
    return Path(__file__).parent / "data" / "linux_like.json"


def _sample_pairs(candidates: list, density: float, rng: np.random.Generator) -> list:
    k = int(round(density * len(candidates)))
    if k == 0:
        return []
    chosen = rng.choice(len(candidates), size=k, replace=False)
    return [candidates[i] for i in sorted(chosen)]


def generate_synthetic_universe(
    n: int,
    explicit_density: float,
    implicit_density: float,
    rng_seed: int,
    base_coverage: int = DEFAULT_BASE_COVERAGE,
    name: str = "",
) -> SyscallUniverse:
    """Random universe with ``round(density * #candidate_pairs)`` pairs of each kind."""
    if n < 2:
        raise UniverseError("a synthetic universe needs n >= 2")
    for d in (explicit_density, implicit_density):
        if not 0.0 <= d <= 1.0:
            raise UniverseError(f"density {d} outside [0, 1]")
    rng = np.random.default_rng(rng_seed)
    explicit = _sample_pairs(list(permutations(range(n), 2)), explicit_density, rng)
    implicit = _sample_pairs(list(combinations(range(n), 2)), implicit_density, rng)
    width = len(str(n - 1))
    specs = [SyscallSpec(f"sys{i:0{width}d}", base_coverage) for i in range(n)]
    return SyscallUniverse(
        specs,
        DependencyGraph(frozenset(explicit), frozenset(implicit)),
        name or f"synthetic-n{n}-s{rng_seed}",
    )


def generate_planted_universe(
    n: int,
    length: int,
    rng_seed: int,
    background_density: float = 0.05,
    base_coverage: int = DEFAULT_BASE_COVERAGE,
) -> SyscallUniverse:
    """Sparse random universe plus a planted group of ``length`` distinct calls.

    Every earlier group member explicitly feeds every later one and all members
    implicitly depend on each other, so the planted group, in order, is a
    strong optimum for traces of that length.
    """
    if not 1 <= length <= n:
        raise UniverseError("planted group must fit in the universe")
    base = generate_synthetic_universe(
        n, background_density, background_density, rng_seed, base_coverage
    )
    rng = np.random.default_rng([rng_seed, 1])
    group = [int(x) for x in rng.choice(n, size=length, replace=False)]
    explicit = set(base.deps.explicit)
    explicit.update((group[i], group[j]) for i in range(length) for j in range(i + 1, length))
    implicit = set(base.deps.implicit)
    implicit.update(combinations(group, 2))
    return SyscallUniverse(
        base.specs,
        DependencyGraph(frozenset(explicit), frozenset(implicit)),
        f"planted-n{n}-l{length}-s{rng_seed}",
    )
