"""Review CSV ingestion: parsing, category cleanup, sentiment, weekly series."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from datetime import date, timedelta
from importlib import resources
from pathlib import Path

import numpy as np

SENTIMENTS = ("positive", "negative", "neutral")
DEFAULT_MIN_YEAR = 2013
SERIES_COLUMNS = ("week_index", "week_start_date", "positive", "negative", "neutral", "total",
                  "target_positive", "target_negative")


class IngestError(ValueError):
    pass


class SchemaError(IngestError):
    """Required column missing from the input header."""


class EmptySeriesError(IngestError):
    pass


@dataclass(frozen=True)
class ReviewRecord:
    posted_at: date
    rating: float
    category: str

    def __post_init__(self):
        if not 0.0 <= self.rating <= 5.0:
            raise IngestError(f"rating {self.rating} outside [0, 5]")


@dataclass(frozen=True)
class ReviewSchema:
    date: str = "date"
    rating: str = "rating"
    category: str = "category"


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str
    raw: dict


# -- categories ---------------------------------------------------------------

def _normalize_text(raw: str) -> str:
    text = re.sub(r"\s+", " ", raw).strip()
    # "Bar /CD" and "Bar/ CD" are the same label
    text = re.sub(r"\s*/\s*", "/", text)
    return text.casefold()


@dataclass(frozen=True)
class CategoryMap:
    """Ordered ``pattern -> canonical`` rules over normalized labels.

    Every canonical label also maps to itself, which keeps
    :func:`normalize_category` idempotent.
    """

    rules: tuple = ()

    def __post_init__(self):
        rules = [(_normalize_text(p), c.strip()) for p, c in self.rules]
        known = {p for p, _ in rules}
        for _, canonical in list(rules):
            key = _normalize_text(canonical)
            if key not in known:
                rules.append((key, canonical))
                known.add(key)
        object.__setattr__(self, "rules", tuple(rules))
        for _, canonical in rules:
            if self.lookup(_normalize_text(canonical)) != canonical:
                raise IngestError(f"canonical label {canonical!r} is itself remapped; "
                                  "chains of rules would make the map non-idempotent")

    def lookup(self, key: str) -> "str | None":
        for pattern, canonical in self.rules:
            if pattern == key:
                return canonical
        return None

    @classmethod
    def parse(cls, text: str) -> "CategoryMap":
        rules = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=>" not in line:
                raise IngestError(f"category map line {lineno}: expected 'raw => canonical'")
            raw, canonical = (part.strip() for part in line.split("=>", 1))
            if not raw or not canonical:
                raise IngestError(f"category map line {lineno}: empty side")
            rules.append((raw, canonical))
        return cls(tuple(rules))

    @classmethod
    def from_file(cls, path) -> "CategoryMap":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls) -> "CategoryMap":
        text = resources.files("bayescp").joinpath("data/category_map.txt").read_text(encoding="utf-8")
        return cls.parse(text)


def normalize_category(raw: str, category_map: "CategoryMap | None" = None) -> str:
    """Clean a category label and apply the first matching merge rule.

    >>> normalize_category("Casual Dining ", CategoryMap.default())
    'Casual Dining'
    """
    key = _normalize_text(raw)
    if category_map is None:
        return key
    canonical = category_map.lookup(key)
    return canonical if canonical is not None else key


# -- sentiment ----------------------------------------------------------------

def classify_sentiment(rating: float) -> str:
    if not 0.0 <= rating <= 5.0:
        raise IngestError(f"rating {rating} outside [0, 5]")
    if rating >= 4.0:
        return "positive"
    if rating <= 2.0:
        return "negative"
    return "neutral"


# -- parsing ------------------------------------------------------------------

def _parse_date(text: str) -> date:
    text = text.strip()
    # tolerate a time part after the ISO date
    if len(text) > 10 and text[10] in "T ":
        text = text[:10]
    return date.fromisoformat(text)


def parse_reviews(csv_source, schema: ReviewSchema = ReviewSchema()):
    """Parse review rows from a CSV byte or text stream.

    Returns ``(records, rejects)``. Rows with an unparseable date or a rating
    outside [0, 5] become :class:`Reject` entries instead of records.

    Raises
    ------
    SchemaError
        If the header lacks any of the schema's columns.
    """
    data = csv_source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8-sig")
    elif data.startswith("\ufeff"):
        data = data[1:]
    reader = csv.DictReader(io.StringIO(data, newline=""))
    header = reader.fieldnames or []
    missing = [c for c in (schema.date, schema.rating, schema.category) if c not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")

    records, rejects = [], []
    for row in reader:
        line = reader.line_num
        try:
            posted = _parse_date(row[schema.date] or "")
        except ValueError:
            rejects.append(Reject(line, f"bad date {row[schema.date]!r}", dict(row)))
            continue
        try:
            rating = float(row[schema.rating])
        except (TypeError, ValueError):
            rejects.append(Reject(line, f"bad rating {row[schema.rating]!r}", dict(row)))
            continue
        if not 0.0 <= rating <= 5.0:
            rejects.append(Reject(line, f"rating {rating} outside [0, 5]", dict(row)))
            continue
        records.append(ReviewRecord(posted, rating, (row[schema.category] or "").strip()))
    return records, rejects


def write_rejects(rejects, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["line", "reason"])
    for r in rejects:
        writer.writerow([r.line, r.reason])


# -- weekly series ------------------------------------------------------------

def transform_log1p(counts) -> np.ndarray:
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise IngestError("counts must be non-negative")
    return np.log1p(counts.astype(float))


@dataclass
class WeeklySeries:
    """Contiguous weekly review counts and the log1p target of one column.

    ``target`` normally equals ``log1p`` of the ``sentiment`` count column;
    synthetic series carry their exact target instead.
    """

    start_date: date
    week_index: np.ndarray
    positive_count: np.ndarray
    negative_count: np.ndarray
    neutral_count: np.ndarray
    target: np.ndarray
    sentiment: str = "positive"
    category: "str | None" = None
    target_positive: "np.ndarray | None" = field(default=None, repr=False)
    target_negative: "np.ndarray | None" = field(default=None, repr=False)

    def __post_init__(self):
        self.week_index = np.asarray(self.week_index, dtype=np.int64)
        for name in ("positive_count", "negative_count", "neutral_count"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        self.target = np.asarray(self.target, dtype=float)
        T = self.week_index.size
        if not np.array_equal(self.week_index, np.arange(T)):
            raise IngestError("week_index must be 0..T-1 without gaps")
        for arr in (self.positive_count, self.negative_count, self.neutral_count, self.target):
            if arr.shape != (T,):
                raise IngestError("all series columns must have length T")
        if self.sentiment not in (*SENTIMENTS, "total"):
            raise IngestError(f"unknown sentiment {self.sentiment!r}")
        if self.target_positive is None:
            self.target_positive = self.target if self.sentiment == "positive" else transform_log1p(self.positive_count)
        if self.target_negative is None:
            self.target_negative = self.target if self.sentiment == "negative" else transform_log1p(self.negative_count)

    @property
    def T(self) -> int:
        return int(self.week_index.size)

    def __len__(self) -> int:
        return self.T

    @property
    def total_count(self) -> np.ndarray:
        return self.positive_count + self.negative_count + self.neutral_count

    def counts(self, sentiment: str) -> np.ndarray:
        if sentiment == "total":
            return self.total_count
        return getattr(self, f"{sentiment}_count")

    def week_start(self, k: int) -> date:
        return self.start_date + timedelta(days=7 * int(k))

    @property
    def end_date(self) -> date:
        return self.week_start(self.T - 1) + timedelta(days=6)

    def with_sentiment(self, sentiment: str) -> "WeeklySeries":
        if sentiment == "positive":
            target = self.target_positive
        elif sentiment == "negative":
            target = self.target_negative
        else:
            target = transform_log1p(self.counts(sentiment))
        return WeeklySeries(self.start_date, self.week_index, self.positive_count,
                            self.negative_count, self.neutral_count, target, sentiment,
                            self.category, self.target_positive, self.target_negative)

    def with_target(self, target) -> "WeeklySeries":
        target = np.asarray(target, dtype=float)
        return WeeklySeries(self.start_date, self.week_index, self.positive_count,
                            self.negative_count, self.neutral_count, target, self.sentiment,
                            self.category,
                            target if self.sentiment == "positive" else self.target_positive,
                            target if self.sentiment == "negative" else self.target_negative)


def aggregate_weekly(records, category: "str | None" = None, min_year: int = DEFAULT_MIN_YEAR,
                     sentiment: str = "positive",
                     category_map: "CategoryMap | None" = None) -> WeeklySeries:
    """Bucket reviews into 7-day weeks anchored at the earliest kept review.

    ``category`` is matched after normalization through ``category_map``;
    ``None`` keeps every category. Weeks without reviews are kept with zero
    counts.
    """
    if category_map is None:
        category_map = CategoryMap.default()
    wanted = normalize_category(category, category_map) if category is not None else None
    kept = [r for r in records
            if r.posted_at.year >= min_year
            and (wanted is None or normalize_category(r.category, category_map) == wanted)]
    if not kept:
        raise EmptySeriesError(f"no reviews left for category={category!r}, min_year={min_year}")

    start = min(r.posted_at for r in kept)
    weeks = np.array([(r.posted_at - start).days // 7 for r in kept], dtype=np.int64)
    labels = [classify_sentiment(r.rating) for r in kept]
    T = int(weeks.max()) + 1
    counts = {}
    for name in SENTIMENTS:
        mask = np.array([lab == name for lab in labels], dtype=bool)
        counts[name] = np.bincount(weeks[mask], minlength=T).astype(np.int64)
    target = transform_log1p(counts[sentiment] if sentiment != "total"
                             else counts["positive"] + counts["negative"] + counts["neutral"])
    return WeeklySeries(start, np.arange(T), counts["positive"], counts["negative"],
                        counts["neutral"], target, sentiment, wanted)


def write_series_csv(series: WeeklySeries, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SERIES_COLUMNS)
    for i in range(series.T):
        writer.writerow([
            int(series.week_index[i]), series.week_start(i).isoformat(),
            int(series.positive_count[i]), int(series.negative_count[i]),
            int(series.neutral_count[i]), int(series.total_count[i]),
            repr(float(series.target_positive[i])), repr(float(series.target_negative[i])),
        ])


def read_series_csv(fh, sentiment: str = "positive") -> WeeklySeries:
    reader = csv.DictReader(fh)
    missing = [c for c in SERIES_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(f"series CSV missing column(s): {', '.join(missing)}")
    rows = list(reader)
    if not rows:
        raise EmptySeriesError("series CSV has no rows")
    col = {c: [row[c] for row in rows] for c in SERIES_COLUMNS}
    series = WeeklySeries(
        start_date=date.fromisoformat(col["week_start_date"][0]),
        week_index=[int(v) for v in col["week_index"]],
        positive_count=[int(v) for v in col["positive"]],
        negative_count=[int(v) for v in col["negative"]],
        neutral_count=[int(v) for v in col["neutral"]],
        target=[float(v) for v in col["target_positive"]],
        sentiment="positive",
        target_positive=np.array([float(v) for v in col["target_positive"]]),
        target_negative=np.array([float(v) for v in col["target_negative"]]),
    )
    return series if sentiment == "positive" else series.with_sentiment(sentiment)
