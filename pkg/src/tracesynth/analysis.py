"""Seed-quality metrics: unique-call coverage, per-call usage across traces,
dependency satisfaction, and cross-corpus agreement."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .trace import Corpus
from .universe import SyscallUniverse


class UniverseMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SeedReport:
    traces: int
    calls: int
    unique_syscalls: int
    usage_histogram: tuple[int, ...]
    explicit_satisfied: int
    implicit_satisfied: int
    explicit_total: int
    implicit_total: int


@dataclass(frozen=True)
class AgreementReport:
    size_a: int
    size_b: int
    equivalent_pairs: int  # pairs (t in a, u in b) with t ~ u
    matched_a: int  # traces of a equivalent to at least one trace of b
    matched_b: int

    @property
    def pct_a(self) -> float:
        return 100.0 * self.matched_a / self.size_a if self.size_a else 0.0

    @property
    def pct_b(self) -> float:
        return 100.0 * self.matched_b / self.size_b if self.size_b else 0.0


def _check(corpus: Corpus, universe: SyscallUniverse) -> None:
    if corpus.universe_id != universe.universe_id:
        raise UniverseMismatch(
            f"corpus belongs to {corpus.universe_id}, not {universe.universe_id}"
        )


def usage_histogram(corpus: Corpus, n: int) -> np.ndarray:
    """Number of distinct traces each syscall appears in."""
    hist = np.zeros(n, dtype=np.int64)
    for t in corpus.traces:
        hist[list(set(t))] += 1
    return hist


def realized_pairs(corpus: Corpus) -> tuple[set[tuple[int, int]], set[tuple[int, int]]]:
    """In-order ``(earlier, later)`` pairs and unordered co-present pairs over
    all traces, both excluding self-pairs."""
    ordered: set[tuple[int, int]] = set()
    unordered: set[tuple[int, int]] = set()
    for t in corpus.traces:
        for j in range(1, len(t)):
            for i in range(j):
                a, b = t[i], t[j]
                if a != b:
                    ordered.add((a, b))
                    unordered.add((a, b) if a < b else (b, a))
    return ordered, unordered


def analyze(corpus: Corpus, universe: SyscallUniverse) -> SeedReport:
    _check(corpus, universe)
    hist = usage_histogram(corpus, universe.n)
    ordered, unordered = realized_pairs(corpus)
    return SeedReport(
        traces=len(corpus),
        calls=corpus.num_calls,
        unique_syscalls=int(np.count_nonzero(hist)),
        usage_histogram=tuple(hist.tolist()),
        explicit_satisfied=len(ordered & universe.deps.explicit),
        implicit_satisfied=len(unordered & universe.deps.implicit),
        explicit_total=len(universe.deps.explicit),
        implicit_total=len(universe.deps.implicit),
    )


def agreement(a: Corpus, b: Corpus) -> AgreementReport:
    if a.universe_id != b.universe_id:
        raise UniverseMismatch(f"{a.universe_id} vs {b.universe_id}")
    sets_a = [frozenset(t) for t in a.traces]
    sets_b = [frozenset(t) for t in b.traces]
    # identical call sets give identical rows, so cache on the set
    rows: dict[frozenset, np.ndarray] = {}
    hits = np.zeros((len(sets_a), len(sets_b)), dtype=bool)
    for i, s in enumerate(sets_a):
        if s not in rows:
            rows[s] = np.fromiter((s <= u or u <= s for u in sets_b), dtype=bool, count=len(sets_b))
        hits[i] = rows[s]
    return AgreementReport(
        size_a=len(sets_a),
        size_b=len(sets_b),
        equivalent_pairs=int(hits.sum()),
        matched_a=int(hits.any(axis=1).sum()),
        matched_b=int(hits.any(axis=0).sum()),
    )


_COLUMNS = ("seed", "traces", "calls", "unique_syscalls", "explicit_satisfied", "implicit_satisfied")


def compare_report(reports: Sequence[SeedReport], labels: Sequence[str], fmt: str = "text") -> str:
    """Side-by-side table of seed reports, as aligned text or CSV."""
    if not reports:
        raise ValueError("need at least one report")
    if len(labels) != len(reports) or any(not lbl for lbl in labels):
        raise ValueError("need one nonempty label per report")
    rows = [
        [lbl, r.traces, r.calls, r.unique_syscalls, r.explicit_satisfied, r.implicit_satisfied]
        for lbl, r in zip(labels, reports)
    ]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_COLUMNS)
        w.writerows(rows)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    cells = [list(_COLUMNS)] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[k]) for r in cells) for k in range(len(_COLUMNS))]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(
            c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(row, widths))
        ).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def histogram_csv(hists: Sequence[np.ndarray], labels: Sequence[str], names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["syscall", *labels])
    for i, name in enumerate(names):
        w.writerow([name, *(int(h[i]) for h in hists)])
    return buf.getvalue()

