"""Decay-smoothed question scores and yearly tag scores.

A question's final vote count is distributed across the years from its
posting year to the corpus end year with geometric decay weights that
normalize to one, so each question contributes exactly its vote total.
Tag scores sum the per-question shares divided by the question's tag
count, which avoids double counting across tags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import Post
from .errors import DataError

__all__ = [
    "QuestionScoreSeries",
    "TagYearScores",
    "smooth_question_scores",
    "tag_year_scores",
    "write_tag_scores",
]


@dataclass(frozen=True)
class QuestionScoreSeries:
    post_id: str
    scores: dict[int, float]  # year -> smoothed score, keys span post year..end year


@dataclass(frozen=True)
class TagYearScores:
    tag_id: str
    scores: dict[int, float]


def smooth_question_scores(
    posts: Iterable[Post], decay: float = 0.5, end_year: int = 2022
) -> list[QuestionScoreSeries]:
    """Distribute each post's final votes across years with geometric decay.

    score(t) = votes * decay^(t - k) / sum_{j=k..end} decay^(end - j), with
    k the posting year, so the yearly scores sum back to the vote total.
    Posts with votes_final <= 0 are skipped (scoring rule, not an
    ingestion filter).
    """
    if not 0.0 < decay < 1.0:
        raise DataError(f"decay must be in (0, 1), got {decay}")
    out: list[QuestionScoreSeries] = []
    for post in sorted(posts, key=lambda p: p.id):
        if post.year_posted > end_year:
            raise DataError(
                f"post '{post.id}' year {post.year_posted} is after end year {end_year}"
            )
        if post.votes_final <= 0:
            continue
        k = post.year_posted
        normalizer = math.fsum(decay ** (end_year - j) for j in range(k, end_year + 1))
        scores = {
            t: post.votes_final * decay ** (t - k) / normalizer
            for t in range(k, end_year + 1)
        }
        out.append(QuestionScoreSeries(post.id, scores))
    return out


def tag_year_scores(
    series: Iterable[QuestionScoreSeries], posts: Iterable[Post]
) -> list[TagYearScores]:
    """Aggregate smoothed question scores into yearly tag scores.

    Each question's score is split evenly across its tags (divided by the
    tag count), then summed per tag and year. Iteration order is fixed
    (post id, then tag id) and each cell is reduced with ``math.fsum`` so
    results do not depend on input ordering.
    """
    by_id = {p.id: p for p in posts}
    cells: dict[tuple[str, int], list[float]] = {}
    for qs in sorted(series, key=lambda s: s.post_id):
        if qs.post_id not in by_id:
            raise DataError(f"score series references unknown post '{qs.post_id}'")
        post = by_id[qs.post_id]
        n_q = len(post.tag_ids)
        for tag_id in sorted(post.tag_ids):
            for year, score in qs.scores.items():
                cells.setdefault((tag_id, year), []).append(score / n_q)

    grouped: dict[str, dict[int, float]] = {}
    for (tag_id, year), parts in sorted(cells.items()):
        grouped.setdefault(tag_id, {})[year] = math.fsum(parts)
    return [TagYearScores(tag_id, scores) for tag_id, scores in sorted(grouped.items())]


def write_tag_scores(scores: Iterable[TagYearScores], path: str | Path) -> int:
    """Dump tag scores as tag_id,year,score with 9 significant digits."""
    rows = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("tag_id,year,score\n")
        for ts in sorted(scores, key=lambda s: s.tag_id):
            for year in sorted(ts.scores):
                fh.write(f"{ts.tag_id},{year},{ts.scores[year]:.9g}\n")
                rows += 1
    return rows


def read_tag_scores(path: str | Path) -> dict[str, dict[int, float]]:
    """Inverse of :func:`write_tag_scores`."""
    out: dict[str, dict[int, float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "tag_id,year,score":
            raise DataError(f"{path}: unexpected tag score header '{header}'")
        for line in fh:
            tag_id, year, score = line.rstrip("\n").split(",")
            out.setdefault(tag_id, {})[int(year)] = float(score)
    return out
