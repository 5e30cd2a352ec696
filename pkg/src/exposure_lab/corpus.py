"""Ingestion of raw inputs into typed, validated in-memory stores.

Loaders are pure functions file -> store. Occupation and industry codes
are kept as fixed-width strings throughout; numeric parsing of codes is
forbidden because it silently drops leading zeros.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError

logger = logging.getLogger(__name__)

_COUNTRY_RE = re.compile(r"^[A-Z]{2}$")
_DIGITS_RE = re.compile(r"^[0-9]+$")


@dataclass(frozen=True)
class Post:
    """One tagged question with its final net vote count."""

    id: str
    year_posted: int
    votes_final: int
    tag_ids: tuple[str, ...]
    country: str


@dataclass(frozen=True)
class Tag:
    id: str
    name: str
    description: str
    is_ai: bool

    @property
    def description_text(self) -> str:
        """Description, falling back to the name when empty."""
        return self.description if self.description else self.name


@dataclass(frozen=True)
class AbilityDescriptor:
    ability_id: str
    name: str
    description: str

    @property
    def description_text(self) -> str:
        return self.description if self.description else self.name


@dataclass(frozen=True)
class AbilityRequirement:
    """Importance/level ratings of one ability for one 8-digit occupation."""

    occupation8: str
    ability_id: str
    importance: float
    level: float


@dataclass(frozen=True)
class MicroTitle:
    title: str
    kind: str  # "occupation" | "industry"
    code: str
    vintage: int


@dataclass(frozen=True)
class Crosswalk:
    """Weighted many-to-many code mapping; weights per source sum to 1."""

    links: tuple[tuple[str, str, float], ...]  # (from_code, to_code, weight)

    def __post_init__(self) -> None:
        sums: dict[str, float] = {}
        for from_code, _, weight in self.links:
            sums[from_code] = sums.get(from_code, 0.0) + weight
        bad = {code: s for code, s in sums.items() if abs(s - 1.0) > 1e-9}
        if bad:
            worst = sorted(bad)[0]
            raise DataError(
                f"crosswalk weights for '{worst}' sum to {bad[worst]:.12g}, expected 1"
            )

    def targets(self, from_code: str) -> tuple[tuple[str, float], ...]:
        return tuple((t, w) for f, t, w in self.links if f == from_code)

    def grouping(self) -> dict[str, str]:
        """Collapse to a plain fine -> coarse mapping.

        Only valid when every source code maps to a single target."""
        out: dict[str, str] = {}
        for from_code, to_code, _ in self.links:
            if from_code in out and out[from_code] != to_code:
                raise DataError(
                    f"crosswalk is not many-to-one: '{from_code}' has multiple targets"
                )
            out[from_code] = to_code
        return out

    @property
    def source_codes(self) -> tuple[str, ...]:
        return tuple(sorted({f for f, _, _ in self.links}))


@dataclass
class TaxonomyStore:
    """All taxonomy tables with referential integrity already checked."""

    abilities: dict[str, AbilityDescriptor]
    requirements: list[AbilityRequirement]
    microtitles: list[MicroTitle]
    crosswalks: dict[str, Crosswalk] = field(default_factory=dict)


def load_posts(
    path: str | Path,
    country_filter: set[str] | frozenset[str],
    year_range: tuple[int, int],
    tags: Mapping[str, Tag] | None = None,
) -> list[Post]:
    """Load posts.jsonl, keeping posts from the given countries and years.

    Unknown (non ISO-3166-alpha-2-shaped) country codes are excluded with a
    counted warning. Posts with 1-2 tags are accepted with a warning; 0 or
    more than 5 tags is a hard error. When ``tags`` is given, every tag id
    must resolve.
    """
    if not country_filter:
        raise DataError("empty country filter")
    lo, hi = year_range
    if lo > hi:
        raise DataError(f"empty year range {year_range}")

    posts: list[Post] = []
    seen_ids: set[str] = set()
    n_unknown_country = 0
    n_short_tags = 0
    n_filtered = 0
    unknown_tags: set[str] = set()

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                post = Post(
                    id=str(rec["id"]),
                    year_posted=int(rec["year"]),
                    votes_final=int(rec["votes"]),
                    tag_ids=tuple(str(t) for t in rec["tags"]),
                    country=str(rec["country"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed post record: {exc}") from exc

            if post.id in seen_ids:
                raise DataError(f"{path}:{lineno}: duplicate post id '{post.id}'")
            seen_ids.add(post.id)

            n_tags = len(post.tag_ids)
            if n_tags == 0 or n_tags > 5:
                raise DataError(
                    f"{path}:{lineno}: post '{post.id}' has {n_tags} tags, expected 1-5"
                )
            if len(set(post.tag_ids)) != n_tags:
                raise DataError(
                    f"{path}:{lineno}: post '{post.id}' repeats a tag"
                )
            if tags is not None:
                missing = [t for t in post.tag_ids if t not in tags]
                if missing:
                    unknown_tags.update(missing)
                    raise DataError(
                        f"{path}:{lineno}: post '{post.id}' references unknown tags: "
                        + ", ".join(sorted(missing))
                    )
            if n_tags < 3:
                n_short_tags += 1

            if not _COUNTRY_RE.match(post.country):
                n_unknown_country += 1
                continue
            if post.country not in country_filter or not lo <= post.year_posted <= hi:
                n_filtered += 1
                continue
            posts.append(post)

    if n_unknown_country:
        logger.warning("excluded %d posts with unknown country codes", n_unknown_country)
    if n_short_tags:
        logger.warning("accepted %d posts with fewer than 3 tags", n_short_tags)
    logger.info(
        "loaded %d posts from %s (%d filtered by country/year)", len(posts), path, n_filtered
    )
    return posts


def select_ai_posts(posts: Iterable[Post], tags: Mapping[str, Tag]) -> list[Post]:
    """Keep posts carrying at least one is_ai tag."""
    return [p for p in posts if any(tags[t].is_ai for t in p.tag_ids if t in tags)]


def load_tags(path: str | Path) -> dict[str, Tag]:
    """Load tags.csv (id,name,description,is_ai with is_ai in {0,1})."""
    tags: dict[str, Tag] = {}
    n_blank_ai = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader, {"id", "name", "description", "is_ai"}, path)
        for lineno, row in enumerate(reader, start=2):
            tag_id = row["id"]
            if tag_id in tags:
                raise DataError(f"{path}:{lineno}: duplicate tag id '{tag_id}'")
            if row["is_ai"] not in ("0", "1"):
                raise DataError(
                    f"{path}:{lineno}: is_ai must be 0 or 1, got '{row['is_ai']}'"
                )
            tag = Tag(
                id=tag_id,
                name=row["name"],
                description=row["description"],
                is_ai=row["is_ai"] == "1",
            )
            if tag.is_ai and not tag.description:
                n_blank_ai += 1
            tags[tag_id] = tag
    if n_blank_ai:
        logger.warning(
            "%d AI tags have empty descriptions; their names will be used instead",
            n_blank_ai,
        )
    return tags


def load_abilities(path: str | Path) -> dict[str, AbilityDescriptor]:
    abilities: dict[str, AbilityDescriptor] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader, {"ability_id", "name", "description"}, path)
        for lineno, row in enumerate(reader, start=2):
            aid = row["ability_id"]
            if aid in abilities:
                raise DataError(f"{path}:{lineno}: duplicate ability id '{aid}'")
            abilities[aid] = AbilityDescriptor(aid, row["name"], row["description"])
    return abilities


def load_ability_scores(
    path: str | Path,
    abilities: Mapping[str, AbilityDescriptor],
    importance_bounds: tuple[float, float] = (1.0, 5.0),
    level_bounds: tuple[float, float] = (0.0, 7.0),
) -> list[AbilityRequirement]:
    """Load ability_scores.csv, checking scale bounds and referential integrity."""
    rows: list[AbilityRequirement] = []
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        _require_columns(
            reader, {"occupation8", "ability_id", "importance", "level"}, path
        )
        for lineno, row in enumerate(reader, start=2):
            aid = row["ability_id"]
            if aid not in abilities:
                raise DataError(
                    f"{path}:{lineno}: requirement references unknown ability '{aid}'"
                )
            occ = row["occupation8"]
            if not _DIGITS_RE.match(occ) or len(occ) != 8:
                raise DataError(
                    f"{path}:{lineno}: occupation8 '{occ}' is not an 8-digit code"
                )
            key = (occ, aid)
            if key in seen:
                raise DataError(
                    f"{path}:{lineno}: duplicate (occupation8, ability) pair {key}"
                )
            seen.add(key)
            importance = float(row["importance"])
            level = float(row["level"])
            if not importance_bounds[0] <= importance <= importance_bounds[1]:
                raise DataError(
                    f"{path}:{lineno}: importance {importance} outside "
                    f"bounds {importance_bounds}"
                )
            if not level_bounds[0] <= level <= level_bounds[1]:
                raise DataError(
                    f"{path}:{lineno}: level {level} outside bounds {level_bounds}"
                )
            rows.append(AbilityRequirement(occ, aid, importance, level))
    return rows


_CODE_FORMATS = {
    "occupation": re.compile(r"^[0-9]{6}$"),
    "industry": re.compile(r"^[0-9]{4,6}$"),
}


def load_microtitles(path: str | Path) -> list[MicroTitle]:
    """Load microtitles.csv (title,kind,code,vintage)."""
    titles: list[MicroTitle] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader, {"title", "kind", "code", "vintage"}, path)
        for lineno, row in enumerate(reader, start=2):
            kind = row["kind"]
            if kind not in _CODE_FORMATS:
                raise DataError(
                    f"{path}:{lineno}: kind must be occupation or industry, got '{kind}'"
                )
            if not row["title"].strip():
                raise DataError(f"{path}:{lineno}: empty micro-title")
            if not _CODE_FORMATS[kind].match(row["code"]):
                raise DataError(
                    f"{path}:{lineno}: code '{row['code']}' does not match the "
                    f"{kind} code format"
                )
            titles.append(
                MicroTitle(row["title"], kind, row["code"], int(row["vintage"]))
            )
    return titles


def load_crosswalk(path: str | Path) -> Crosswalk:
    """Load crosswalk.csv (from_code,to_code,weight); weights sum to 1 per source."""
    links: list[tuple[str, str, float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader, {"from_code", "to_code", "weight"}, path)
        for row in reader:
            links.append((row["from_code"], row["to_code"], float(row["weight"])))
    return Crosswalk(tuple(links))


def load_taxonomies(
    abilities_path: str | Path,
    ability_scores_path: str | Path,
    microtitles_path: str | Path,
    crosswalk_paths: Mapping[str, str | Path] | None = None,
    importance_bounds: tuple[float, float] = (1.0, 5.0),
    level_bounds: tuple[float, float] = (0.0, 7.0),
) -> TaxonomyStore:
    abilities = load_abilities(abilities_path)
    requirements = load_ability_scores(
        ability_scores_path, abilities, importance_bounds, level_bounds
    )
    microtitles = load_microtitles(microtitles_path)
    crosswalks = {
        name: load_crosswalk(p) for name, p in (crosswalk_paths or {}).items()
    }
    return TaxonomyStore(abilities, requirements, microtitles, crosswalks)


def _require_columns(reader: csv.DictReader, needed: set[str], path) -> None:
    have = set(reader.fieldnames or ())
    missing = needed - have
    if missing:
        raise DataError(f"{path}: missing columns: {', '.join(sorted(missing))}")
