"""Title normalization and new-work detection across taxonomy versions.

A title in version year t is new when its normalized form neither exactly
matches any year t-1 title nor reaches the similarity threshold against
any of them. Comparison is strictly t versus t-1: a title that vanishes
for a year and returns is flagged new again by the detector, but the
ledger keeps only the first occurrence of each (occupation, title) pair.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Protocol

import numpy as np

from .errors import DataError
from .semlink import EmbeddingStore

logger = logging.getLogger(__name__)

__all__ = [
    "TitleSet",
    "NewWorkLedger",
    "SimilarityBackend",
    "EmbeddingSimilarity",
    "TableSimilarity",
    "normalize_title",
    "detect_new_work",
    "build_ledger",
    "cumulative_share",
]

_TOKEN_CLEAN_RE = re.compile(r"[^a-z0-9\s-]")

_PLURAL_SUFFIXES = ("ses", "xes", "zes", "ches", "shes")
_PROTECTED_ENDINGS = ("ss", "us", "is")


def _load_default_gender_map() -> dict[str, str]:
    out: dict[str, str] = {}
    blob = resources.files("exposure_lab").joinpath("data/gendered_terms.csv")
    with blob.open("r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out[row["from"]] = row["to"]
    return out


def _load_default_plural_exceptions() -> frozenset[str]:
    blob = resources.files("exposure_lab").joinpath("data/plural_exceptions.txt")
    words = set()
    with blob.open("r", encoding="utf-8") as fh:
        for line in fh:
            word = line.strip()
            if word and not word.startswith("#"):
                words.add(word)
    return frozenset(words)


_DEFAULT_GENDER_MAP = _load_default_gender_map()
_DEFAULT_PLURAL_EXCEPTIONS = _load_default_plural_exceptions()


def _singularize(token: str, exceptions: frozenset[str]) -> str:
    if token in exceptions:
        return token
    if token.endswith("ies") and len(token) > 4:
        return token[:-3] + "y"
    if token.endswith(_PLURAL_SUFFIXES):
        return token[:-2]
    if token.endswith("s") and not token.endswith(_PROTECTED_ENDINGS):
        return token[:-1]
    return token


def _degender(token: str, gender_map: Mapping[str, str]) -> str:
    if token in gender_map:
        return gender_map[token]
    # compound forms: chairwoman -> chairman, saleswomen -> salesman
    if token.endswith("women"):
        return token[:-5] + "man"
    if token.endswith("woman"):
        return token[:-5] + "man"
    return token


def normalize_title(
    text: str,
    gender_map: Mapping[str, str] | None = None,
    plural_exceptions: frozenset[str] | None = None,
) -> str:
    """Canonicalize a job title: casefold, strip punctuation (keeping
    intra-word hyphens), singularize tokens by rule with an exception
    list, and map gendered tokens to male forms.

    Idempotent: normalizing a normalized title is a no-op."""
    if not text or not text.strip():
        raise DataError("empty title")
    gender_map = gender_map if gender_map is not None else _DEFAULT_GENDER_MAP
    exceptions = (
        plural_exceptions if plural_exceptions is not None else _DEFAULT_PLURAL_EXCEPTIONS
    )
    cleaned = _TOKEN_CLEAN_RE.sub(" ", text.casefold())
    tokens = []
    for raw in cleaned.split():
        token = raw.strip("-")
        if not token:
            continue
        token = _singularize(token, exceptions)
        token = _degender(token, gender_map)
        tokens.append(token)
    if not tokens:
        raise DataError(f"title '{text}' is empty after normalization")
    return " ".join(tokens)


@dataclass(frozen=True)
class TitleSet:
    """Raw and normalized alternate titles of one occupation in one year."""

    occupation6: str
    year: int
    titles: frozenset[str]
    normalized: frozenset[str]

    @classmethod
    def build(
        cls,
        occupation6: str,
        year: int,
        titles: Iterable[str],
        gender_map: Mapping[str, str] | None = None,
        plural_exceptions: frozenset[str] | None = None,
    ) -> "TitleSet":
        raw = frozenset(titles)
        normalized = frozenset(
            normalize_title(t, gender_map, plural_exceptions) for t in raw
        )
        return cls(occupation6, year, raw, normalized)


class SimilarityBackend(Protocol):
    def similarity(self, a: str, b: str) -> float: ...


class EmbeddingSimilarity:
    """Cosine similarity from an embedding store keyed by normalized title."""

    def __init__(self, store: EmbeddingStore) -> None:
        self._store = store
        self._unit: dict[str, np.ndarray] = {}

    def similarity(self, a: str, b: str) -> float:
        return float(np.dot(self._unit_vector(a), self._unit_vector(b)))

    def _unit_vector(self, title: str) -> np.ndarray:
        if title not in self._unit:
            if title not in self._store.entries:
                raise DataError(f"title missing from embedding store: '{title}'")
            vec = self._store.entries[title]
            self._unit[title] = vec / np.linalg.norm(vec)
        return self._unit[title]


class TableSimilarity:
    """Fixed symmetric similarity table; pairs not listed default to 0."""

    def __init__(self, table: Mapping[tuple[str, str], float]) -> None:
        self._table = dict(table)

    def similarity(self, a: str, b: str) -> float:
        if (a, b) in self._table:
            return self._table[(a, b)]
        return self._table.get((b, a), 0.0)


def detect_new_work(
    set_prev: TitleSet,
    set_curr: TitleSet,
    similarity: SimilarityBackend,
    threshold: float,
) -> set[str]:
    """Normalized current titles with no exact or fuzzy match in the
    previous year. The threshold comparison is inclusive (sim >= threshold
    means not new)."""
    if set_prev.occupation6 != set_curr.occupation6:
        raise DataError(
            f"title sets belong to different occupations: "
            f"{set_prev.occupation6} vs {set_curr.occupation6}"
        )
    if not 0.0 < threshold <= 1.0:
        raise DataError(f"threshold must be in (0, 1], got {threshold}")
    new: set[str] = set()
    prev = set_prev.normalized
    for title in set_curr.normalized:
        if title in prev:
            continue
        if prev and max(similarity.similarity(title, p) for p in prev) >= threshold:
            continue
        new.add(title)
    return new


@dataclass(frozen=True)
class NewWorkLedger:
    """First appearances of new titles plus base-year title counts."""

    entries: tuple[tuple[str, int, str], ...]  # (occupation6, year, normalized title)
    base_counts: dict[str, int]
    base_years: dict[str, int]

    def entries_for(self, occupation6: str) -> list[tuple[int, str]]:
        return [(y, t) for o, y, t in self.entries if o == occupation6]


def build_ledger(
    title_sets: Iterable[TitleSet],
    similarity: SimilarityBackend,
    threshold: float,
    occ_crosswalk: Mapping[str, tuple[str, ...]] | None = None,
) -> NewWorkLedger:
    """Run year-pair detection per occupation and assemble the ledger.

    The base year per occupation is its earliest version; base-year titles
    are never flagged. When ``occ_crosswalk`` maps a current occupation to
    predecessor codes (classification change), the previous-year title set
    is the union over those predecessors. Entries are deduplicated so each
    (occupation, title) pair is kept only at its first appearance, and the
    merge order is (occupation, year, title)."""
    by_occ: dict[str, dict[int, TitleSet]] = {}
    for ts in title_sets:
        if ts.year in by_occ.setdefault(ts.occupation6, {}):
            raise DataError(
                f"duplicate title set for occupation {ts.occupation6} year {ts.year}"
            )
        by_occ[ts.occupation6][ts.year] = ts

    entries: list[tuple[str, int, str]] = []
    base_counts: dict[str, int] = {}
    base_years: dict[str, int] = {}
    for occ in sorted(by_occ):
        versions = by_occ[occ]
        years = sorted(versions)
        base_year = years[0]
        base_years[occ] = base_year
        base_counts[occ] = len(versions[base_year].normalized)
        seen: set[str] = set(versions[base_year].normalized)
        for year in years[1:]:
            prev = _previous_set(by_occ, occ, year, occ_crosswalk)
            if prev is None:
                logger.warning(
                    "occupation %s has no %d title set; skipping %d comparison",
                    occ,
                    year - 1,
                    year,
                )
                continue
            detected = detect_new_work(prev, versions[year], similarity, threshold)
            for title in sorted(detected):
                if title in seen:
                    continue
                seen.add(title)
                entries.append((occ, year, title))
    entries.sort()
    return NewWorkLedger(tuple(entries), base_counts, base_years)


def _previous_set(
    by_occ: Mapping[str, dict[int, TitleSet]],
    occ: str,
    year: int,
    occ_crosswalk: Mapping[str, tuple[str, ...]] | None,
) -> TitleSet | None:
    """Title set for year-1, pooling predecessor occupations when mapped."""
    sources = occ_crosswalk.get(occ, (occ,)) if occ_crosswalk else (occ,)
    raw: set[str] = set()
    normalized: set[str] = set()
    found = False
    for source in sources:
        prev = by_occ.get(source, {}).get(year - 1)
        if prev is not None:
            found = True
            raw |= prev.titles
            normalized |= prev.normalized
    if not found:
        return None
    return TitleSet(occ, year - 1, frozenset(raw), frozenset(normalized))


def cumulative_share(ledger: NewWorkLedger, occupation6: str, year: int) -> float:
    """Cumulative new titles since the base year divided by the base count."""
    if occupation6 not in ledger.base_counts:
        raise DataError(f"occupation {occupation6} not in ledger")
    base = ledger.base_counts[occupation6]
    if base <= 0:
        raise DataError(f"occupation {occupation6} has zero base count")
    base_year = ledger.base_years[occupation6]
    count = sum(
        1
        for occ, y, _ in ledger.entries
        if occ == occupation6 and base_year < y <= year
    )
    return count / base


def write_newwork(
    title_sets: Iterable[TitleSet],
    ledger: NewWorkLedger,
    path: str | Path,
) -> int:
    """Dump every (occupation, year, normalized title) with its new flag."""
    flagged = {(o, y, t) for o, y, t in ledger.entries}
    first_year: dict[tuple[str, str], int] = {}
    for o, y, t in ledger.entries:
        first_year[(o, t)] = y
    rows = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("occupation6,year,title,is_new\n")
        for ts in sorted(title_sets, key=lambda s: (s.occupation6, s.year)):
            for title in sorted(ts.normalized):
                is_new = int((ts.occupation6, ts.year, title) in flagged)
                fh.write(f"{ts.occupation6},{ts.year},{title},{is_new}\n")
                rows += 1
    return rows


def write_shares(
    ledger: NewWorkLedger, years: Iterable[int], path: str | Path
) -> int:
    """Dump cumulative shares per occupation and year (9 significant digits)."""
    rows = 0
    year_list = sorted(years)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("occupation6,year,cumulative_share\n")
        for occ in sorted(ledger.base_counts):
            for year in year_list:
                if year < ledger.base_years[occ]:
                    continue
                share = cumulative_share(ledger, occ, year)
                fh.write(f"{occ},{year},{share:.9g}\n")
                rows += 1
    return rows


def read_shares(path: str | Path) -> dict[tuple[str, int], float]:
    out: dict[tuple[str, int], float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "occupation6,year,cumulative_share":
            raise DataError(f"{path}: unexpected shares header '{header}'")
        for line in fh:
            occ, year, share = line.rstrip("\n").split(",")
            out[(occ, int(year))] = float(share)
    return out


def load_title_sets(
    path: str | Path,
    gender_map: Mapping[str, str] | None = None,
    plural_exceptions: frozenset[str] | None = None,
) -> list[TitleSet]:
    """Load alt_titles.csv (occupation6,year,title) into per-year TitleSets."""
    grouped: dict[tuple[str, int], set[str]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        have = set(reader.fieldnames or ())
        if not {"occupation6", "year", "title"} <= have:
            raise DataError(f"{path}: expected columns occupation6,year,title")
        for row in reader:
            grouped.setdefault((row["occupation6"], int(row["year"])), set()).add(
                row["title"]
            )
    return [
        TitleSet.build(occ, year, titles, gender_map, plural_exceptions)
        for (occ, year), titles in sorted(grouped.items())
    ]
