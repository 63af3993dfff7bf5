"""Topographic-map index and fuzzy place-name retrieval."""

from __future__ import annotations

import csv
import logging
import re
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from ..errors import SchemaError, ValidationError
from ..geometry import GeoBBox

logger = logging.getLogger(__name__)

SCORE_FLOOR = 0.55
INDEX_COLUMNS = ("id", "quadrangle_name", "state", "county", "min_lon", "min_lat", "max_lon", "max_lat", "scale")

# Generic words on map titles and index names that carry no place information.
STOP_WORDS = frozenset({"quad", "quadrangle", "county", "co", "state", "of", "the", "geologic", "map"})

US_STATES = {
    "AL": "Alabama", "AK": "Alaska", "AZ": "Arizona", "AR": "Arkansas", "CA": "California",
    "CO": "Colorado", "CT": "Connecticut", "DE": "Delaware", "DC": "District of Columbia",
    "FL": "Florida", "GA": "Georgia", "HI": "Hawaii", "ID": "Idaho", "IL": "Illinois",
    "IN": "Indiana", "IA": "Iowa", "KS": "Kansas", "KY": "Kentucky", "LA": "Louisiana",
    "ME": "Maine", "MD": "Maryland", "MA": "Massachusetts", "MI": "Michigan", "MN": "Minnesota",
    "MS": "Mississippi", "MO": "Missouri", "MT": "Montana", "NE": "Nebraska", "NV": "Nevada",
    "NH": "New Hampshire", "NJ": "New Jersey", "NM": "New Mexico", "NY": "New York",
    "NC": "North Carolina", "ND": "North Dakota", "OH": "Ohio", "OK": "Oklahoma", "OR": "Oregon",
    "PA": "Pennsylvania", "RI": "Rhode Island", "SC": "South Carolina", "SD": "South Dakota",
    "TN": "Tennessee", "TX": "Texas", "UT": "Utah", "VT": "Vermont", "VA": "Virginia",
    "WA": "Washington", "WV": "West Virginia", "WI": "Wisconsin", "WY": "Wyoming",
    "PR": "Puerto Rico",
}

_PUNCT = str.maketrans({c: " " for c in string.punctuation + "‘’“”–—"})


def normalize_name(s: str) -> str:
    """Case-fold, replace punctuation by spaces, drop generic words."""
    words = (s or "").casefold().translate(_PUNCT).split()
    return " ".join(w for w in words if w not in STOP_WORDS)


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity(a: str, b: str) -> float:
    """1 - normalized Levenshtein distance on normalized strings; 0 when
    either side normalizes to nothing."""
    na, nb = normalize_name(a), normalize_name(b)
    if not na or not nb:
        return 0.0
    return 1.0 - levenshtein(na, nb) / max(len(na), len(nb))


@dataclass(frozen=True)
class TopoRecord:
    id: str
    quadrangle_name: str
    state: str
    county: Optional[str]
    bbox: GeoBBox
    scale: Optional[int] = None

    @property
    def state_name(self) -> str:
        return US_STATES.get(self.state.strip().upper(), self.state)

    def name_fields(self) -> list[str]:
        fields = [self.quadrangle_name, self.state_name]
        if self.county:
            fields.append(self.county)
        return fields


class TopoIndex:
    """Immutable collection of records with a normalized-name lookup."""

    def __init__(self, records: Iterable[TopoRecord]):
        self.records: tuple[TopoRecord, ...] = tuple(records)
        self._by_id = {}
        lookup: dict[str, list[str]] = {}
        for r in self.records:
            if r.id in self._by_id:
                raise ValidationError(f"duplicate topo record id {r.id!r}")
            self._by_id[r.id] = r
            lookup.setdefault(normalize_name(r.quadrangle_name), []).append(r.id)
        self.name_lookup = {k: tuple(v) for k, v in lookup.items()}

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, record_id: str) -> TopoRecord:
        return self._by_id[record_id]

    def by_name(self, name: str) -> list[TopoRecord]:
        return [self._by_id[i] for i in self.name_lookup.get(normalize_name(name), ())]


def _opt(v: Optional[str]) -> Optional[str]:
    v = (v or "").strip()
    return v or None


def load_topo_index(path) -> TopoIndex:
    """Read a delimiter-separated index file (the dialect is sniffed)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        dialect = csv.Sniffer().sniff(text.splitlines()[0], delimiters=",\t;|")
    except (csv.Error, IndexError):
        dialect = csv.excel
    reader = csv.DictReader(text.splitlines(), dialect=dialect)
    missing = [c for c in INDEX_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(f"topo index lacks columns: {', '.join(missing)}")
    records = []
    for row in reader:
        try:
            bbox = GeoBBox(float(row["min_lon"]), float(row["min_lat"]),
                           float(row["max_lon"]), float(row["max_lat"]))
        except ValueError as exc:
            raise SchemaError(f"bad bbox in topo record {row.get('id')!r}: {exc}") from exc
        scale = _opt(row["scale"])
        records.append(TopoRecord(row["id"].strip(), row["quadrangle_name"].strip(), row["state"].strip(),
                                  _opt(row["county"]), bbox, int(float(scale)) if scale else None))
    return TopoIndex(records)


def retrieve_topo_candidates(toponyms: Sequence[str], index: TopoIndex,
                             limit: int = 10) -> list[tuple[TopoRecord, float]]:
    """Rank records by the mean over toponyms of the best field similarity.

    Scores below the floor are dropped; ties break by record id."""
    names = [t for t in toponyms if normalize_name(t)]
    if not names:
        return []
    scored = []
    for rec in index:
        fields = rec.name_fields()
        score = sum(max(similarity(t, f) for f in fields) for t in names) / len(names)
        if score >= SCORE_FLOOR:
            scored.append((rec, score))
    scored.sort(key=lambda rs: (-rs[1], rs[0].id))
    return scored[:limit]


# --- toponym extraction ------------------------------------------------------

_CAP = r"[A-Z][A-Za-z'.\-]*"
_NGRAM_BEFORE = re.compile(rf"((?:{_CAP}\s+){{0,3}}{_CAP})\s+(?:Quadrangle|Quad\.?|County)\b")
_LEADING_GENERIC = {"Geologic", "Map", "Of", "The", "And", "In", "Part", "Parts", "Quadrangle", "County"}


def _strip_generic(ngram: str) -> str:
    words = ngram.split()
    while words and words[0] in _LEADING_GENERIC:
        words.pop(0)
    return " ".join(words)


def extract_toponyms(title: str) -> list[str]:
    """Rule-based toponyms: capitalized n-grams right before "Quadrangle" or
    "County", plus any state names.  Order of appearance, no duplicates."""
    found: list[tuple[int, str]] = []
    for m in _NGRAM_BEFORE.finditer(title):
        name = _strip_generic(m.group(1))
        if name:
            found.append((m.start(1) + m.group(1).find(name), name))
    for state in sorted(set(US_STATES.values()), key=len, reverse=True):
        for m in re.finditer(rf"\b{re.escape(state)}\b", title):
            found.append((m.start(), state))
    out: list[str] = []
    for _, name in sorted(found):
        if name not in out and not any(name != o and name in o for o in out):
            out.append(name)
    return out


def toponyms_via_client(title: str, client) -> list[str]:
    """Toponyms from the text model (task ``toponyms``, one per line)."""
    text = client.complete("toponyms", "List the place names in this map title, one per line.", title)
    return [line.strip() for line in text.splitlines() if line.strip()]
