"""Triple ingestion and indexing for scholarly knowledge graphs.

The canonical input is a 4-column TSV (subject, predicate, object,
object-kind) where object-kind is one of ``iri``, ``text``, ``year``.
A reader for the matching N-Triples subset is layered on top.  Parsing
classifies every line into exactly one of three triple tables:

* object triples   (head entity, relation, tail entity)
* text triples     (entity, attribute, string literal)
* numeric triples  (entity, attribute, integer year)

Predicates are canonicalized to their IRI local name (suffix after the
last ``/``, ``#`` or ``:``) and validated against the schema vocabulary;
unknown predicates are skipped with a diagnostic listing line numbers.
"""

from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import ConfigError, DatatypeError, ParseError
from .names import ln_fi_key

logger = logging.getLogger(__name__)

# Object-relation vocabulary per input schema.  The AMiner-style layout
# has no citation links or co-author links in the source benchmark.
OBJECT_RELATIONS = {
    "oc": ("creator", "knows", "cites", "partOf"),
    "aminer": ("creator", "affiliation", "partOf"),
}

TEXT_ATTRIBUTES = frozenset({"title", "familyName", "givenName"})

# Local names accepted for the publication-year attribute; all are
# canonicalized to "year".
YEAR_ATTRIBUTES = frozenset(
    {"year", "gYear", "publicationDate", "publicationYear", "date", "hasPublicationDate"}
)
YEAR_ATTRIBUTE = "year"

VALID_KINDS = ("iri", "text", "year")


class IndexMap:
    """Bidirectional string<->index map with first-seen ordering."""

    def __init__(self, items: Iterable[str] = ()):
        self._index: dict[str, int] = {}
        self._names: list[str] = []
        for item in items:
            self.add(item)

    def add(self, name: str) -> int:
        idx = self._index.get(name)
        if idx is None:
            idx = len(self._names)
            self._index[name] = idx
            self._names.append(name)
        return idx

    def index(self, name: str) -> int:
        return self._index[name]

    def name(self, idx: int) -> str:
        return self._names[idx]

    def get(self, name: str) -> int | None:
        return self._index.get(name)

    def names(self) -> list[str]:
        return list(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __iter__(self):
        return iter(self._names)


@dataclass
class KnowledgeGraph:
    """Indexed triple store with object, text and numeric tables."""

    schema: str
    entities: IndexMap = field(default_factory=IndexMap)
    relations: IndexMap = field(default_factory=IndexMap)
    object_triples: list[tuple[int, int, int]] = field(default_factory=list)
    text_triples: list[tuple[int, str, str]] = field(default_factory=list)
    numeric_triples: list[tuple[int, str, int]] = field(default_factory=list)

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def text_attribute(self, entity: int, attribute: str) -> str | None:
        """First stored string literal for (entity, attribute), if any."""
        for ent, attr, value in self.text_triples:
            if ent == entity and attr == attribute:
                return value
        return None

    def text_lookup(self, attribute: str) -> dict[int, str]:
        """Entity -> first literal value for one attribute."""
        out: dict[int, str] = {}
        for ent, attr, value in self.text_triples:
            if attr == attribute and ent not in out:
                out[ent] = value
        return out

    def year_lookup(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for ent, _attr, year in self.numeric_triples:
            if ent not in out:
                out[ent] = year
        return out


@dataclass
class AuthorRecord:
    """One author mention: entity index, name literals, linked documents."""

    author_entity: int
    author_iri: str
    family_name: str
    given_name: str
    document_entities: list[int]
    orcid: str | None = None


@dataclass
class DatasetSplit:
    """Disjoint train/valid/test index lists over the object triples."""

    train: list[int]
    valid: list[int]
    test: list[int]
    ratios: tuple[float, float, float]
    seed: int

    def triples(self, kg: KnowledgeGraph, part: str) -> list[tuple[int, int, int]]:
        indices = getattr(self, part)
        return [kg.object_triples[i] for i in indices]


def canonical_predicate(predicate: str) -> str:
    """Local name of a predicate IRI: suffix after the last /, # or :."""
    trimmed = predicate.strip()
    if trimmed.startswith("<") and trimmed.endswith(">"):
        trimmed = trimmed[1:-1]
    for sep in ("#", "/", ":"):
        pos = trimmed.rfind(sep)
        if pos >= 0:
            trimmed = trimmed[pos + 1 :]
            break
    return trimmed


def _classify_predicate(predicate: str, kind: str, schema: str) -> str | None:
    """Canonical predicate name if known for this kind, else None."""
    local = canonical_predicate(predicate)
    if kind == "iri":
        return local if local in OBJECT_RELATIONS[schema] else None
    if kind == "text":
        return local if local in TEXT_ATTRIBUTES else None
    if kind == "year":
        return YEAR_ATTRIBUTE if local in YEAR_ATTRIBUTES else None
    return None


def parse_triples(source: TextIO | str | Path, schema: str = "oc") -> KnowledgeGraph:
    """Parse a canonical TSV triple stream into an indexed KnowledgeGraph.

    ``source`` may be an open text stream or a path.  Duplicate object
    triples are deduplicated silently; duplicate text literals for the
    same (entity, attribute) keep the first occurrence.  Lines with
    unknown predicates are skipped; a single diagnostic lists their line
    numbers.
    """
    if schema not in OBJECT_RELATIONS:
        raise ConfigError(f"unknown schema {schema!r}; expected one of {sorted(OBJECT_RELATIONS)}")

    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as stream:
            return parse_triples(stream, schema)

    kg = KnowledgeGraph(schema=schema)
    for rel in OBJECT_RELATIONS[schema]:
        kg.relations.add(rel)

    seen_objects: set[tuple[int, int, int]] = set()
    seen_text_keys: set[tuple[int, str]] = set()
    seen_numeric_keys: set[tuple[int, str]] = set()
    unknown_lines: list[int] = []
    duplicate_literals = 0

    for line_no, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        columns = line.split("\t")
        if len(columns) != 4:
            raise ParseError(f"expected 4 tab-separated columns, got {len(columns)}", line_no)
        subject, predicate, obj, kind = columns
        if kind not in VALID_KINDS:
            raise ParseError(f"unknown object kind {kind!r}; expected one of {VALID_KINDS}", line_no)

        canonical = _classify_predicate(predicate, kind, schema)
        if canonical is None:
            unknown_lines.append(line_no)
            continue

        ent = kg.entities.add(subject)
        if kind == "iri":
            rel = kg.relations.index(canonical)
            tail = kg.entities.add(obj)
            triple = (ent, rel, tail)
            if triple not in seen_objects:
                seen_objects.add(triple)
                kg.object_triples.append(triple)
        elif kind == "text":
            key = (ent, canonical)
            if key in seen_text_keys:
                duplicate_literals += 1
                continue
            seen_text_keys.add(key)
            kg.text_triples.append((ent, canonical, obj))
        else:  # year
            try:
                year = int(obj.strip())
            except ValueError:
                raise DatatypeError(f"year literal {obj!r} is not an integer", line_no) from None
            key = (ent, canonical)
            if key in seen_numeric_keys:
                duplicate_literals += 1
                continue
            seen_numeric_keys.add(key)
            kg.numeric_triples.append((ent, canonical, year))

    if unknown_lines:
        shown = ", ".join(str(n) for n in unknown_lines[:20])
        more = "" if len(unknown_lines) <= 20 else f" (+{len(unknown_lines) - 20} more)"
        logger.warning(
            "skipped %d line(s) with unknown predicates: lines %s%s",
            len(unknown_lines), shown, more,
        )
    if duplicate_literals:
        logger.info("dropped %d duplicate literal(s), first occurrence kept", duplicate_literals)
    return kg


_NT_LINE = re.compile(
    r"^<(?P<s>[^>]*)>\s+<(?P<p>[^>]*)>\s+"
    r"(?:<(?P<o_iri>[^>]*)>|\"(?P<o_lit>(?:[^\"\\]|\\.)*)\"(?:\^\^<(?P<dtype>[^>]*)>)?)"
    r"\s*\.\s*$"
)

_NT_ESCAPES = {"\\t": "\t", "\\n": "\n", "\\r": "\r", '\\"': '"', "\\\\": "\\"}


def _unescape_nt(literal: str) -> str:
    out = literal
    for seq, ch in _NT_ESCAPES.items():
        out = out.replace(seq, ch)
    return out


def ntriples_to_tsv(source: TextIO | str | Path) -> io.StringIO:
    """Convert the supported N-Triples subset to canonical TSV in memory.

    Literals with a gYear/integer datatype become ``year`` rows, all
    other literals become ``text`` rows.  Blank nodes and named graphs
    are out of scope and raise a parse error.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as stream:
            return ntriples_to_tsv(stream)

    buffer = io.StringIO()
    for line_no, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        match = _NT_LINE.match(line)
        if match is None:
            raise ParseError("not in the supported N-Triples subset", line_no)
        subject, predicate = match.group("s"), match.group("p")
        if match.group("o_iri") is not None:
            buffer.write(f"{subject}\t{predicate}\t{match.group('o_iri')}\tiri\n")
            continue
        literal = _unescape_nt(match.group("o_lit"))
        dtype = match.group("dtype") or ""
        local_dtype = canonical_predicate(dtype) if dtype else ""
        if local_dtype in ("gYear", "integer", "int"):
            buffer.write(f"{subject}\t{predicate}\t{literal}\tyear\n")
        else:
            buffer.write(f"{subject}\t{predicate}\t{literal}\ttext\n")
    buffer.seek(0)
    return buffer


def parse_ntriples(source: TextIO | str | Path, schema: str = "oc") -> KnowledgeGraph:
    """Parse the N-Triples subset by converting to canonical TSV first."""
    return parse_triples(ntriples_to_tsv(source), schema)


def serialize_triples(kg: KnowledgeGraph, stream: TextIO) -> None:
    """Write the graph back out in the canonical TSV format."""
    for head, rel, tail in kg.object_triples:
        stream.write(
            f"{kg.entities.name(head)}\t{kg.relations.name(rel)}\t{kg.entities.name(tail)}\tiri\n"
        )
    for ent, attr, value in kg.text_triples:
        stream.write(f"{kg.entities.name(ent)}\t{attr}\t{value}\ttext\n")
    for ent, attr, year in kg.numeric_triples:
        stream.write(f"{kg.entities.name(ent)}\t{attr}\t{year}\tyear\n")


def split_structural(
    kg: KnowledgeGraph,
    ratios: tuple[float, float, float] = (0.64, 0.16, 0.20),
    seed: int = 0,
) -> DatasetSplit:
    """Deterministically partition the object triples into train/valid/test.

    Only object triples are split; literal triples stay available as
    entity attributes in every phase.  The valid and test sizes are
    rounded, the train part absorbs the remainder.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1.0, got {sum(ratios)!r}")
    total = len(kg.object_triples)
    if total < 3:
        raise ConfigError(f"need at least 3 object triples to split, got {total}")

    n_valid = round(ratios[1] * total)
    n_test = round(ratios[2] * total)
    n_train = total - n_valid - n_test
    if n_train < 0:
        raise ConfigError("rounding produced a negative train partition")

    order = np.random.default_rng(seed).permutation(total)
    train = sorted(int(i) for i in order[:n_train])
    valid = sorted(int(i) for i in order[n_train : n_train + n_valid])
    test = sorted(int(i) for i in order[n_train + n_valid :])
    return DatasetSplit(train=train, valid=valid, test=test, ratios=tuple(ratios), seed=seed)


def load_orcid_truth(path: str | Path) -> dict[str, str]:
    """Read the ground-truth CSV mapping ``author_iri`` to ``orcid``."""
    with open(path, "r", encoding="utf-8", newline="") as stream:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["author_iri", "orcid"]:
            raise ParseError("truth file must start with header 'author_iri,orcid'", 1)
        truth: dict[str, str] = {}
        for row in reader:
            if len(row) < 2:
                continue
            truth[row[0].strip()] = row[1].strip()
    return truth


def extract_author_records(
    kg: KnowledgeGraph,
    truth: dict[str, str] | None = None,
    min_orcids_per_block: int = 2,
) -> list[AuthorRecord]:
    """Collect one record per author entity linked through creator edges.

    Records without a family-name literal are excluded (and counted in a
    warning).  When ``truth`` is given the result is the evaluation set:
    labeled records whose block key carries at least
    ``min_orcids_per_block`` distinct identifiers; labeled records with
    no usable given name are flagged and left out.
    """
    creator = kg.relations.get("creator")
    if creator is None:
        return []

    documents: dict[int, list[int]] = {}
    for head, rel, tail in kg.object_triples:
        if rel == creator:
            documents.setdefault(tail, []).append(head)

    family_names = kg.text_lookup("familyName")
    given_names = kg.text_lookup("givenName")

    if truth:
        known_iris = {kg.entities.name(ent) for ent in documents}
        for iri in truth:
            if iri not in known_iris:
                logger.warning("truth entry for unknown author IRI %s skipped", iri)

    records: list[AuthorRecord] = []
    missing_family = 0
    for author, docs in documents.items():
        family = family_names.get(author, "")
        if not family:
            missing_family += 1
            continue
        iri = kg.entities.name(author)
        records.append(
            AuthorRecord(
                author_entity=author,
                author_iri=iri,
                family_name=family,
                given_name=given_names.get(author, ""),
                document_entities=sorted(set(docs)),
                orcid=truth.get(iri) if truth else None,
            )
        )
    if missing_family:
        logger.warning("excluded %d author record(s) without a family-name literal", missing_family)

    records.sort(key=lambda rec: rec.author_iri)
    if not truth:
        return records

    labeled = [rec for rec in records if rec.orcid]
    no_given = [rec for rec in labeled if not rec.given_name]
    if no_given:
        logger.warning(
            "flagged %d labeled record(s) without a given name; excluded from evaluation blocks",
            len(no_given),
        )
        labeled = [rec for rec in labeled if rec.given_name]

    orcids_per_key: dict[str, set[str]] = {}
    for rec in labeled:
        key = ln_fi_key(rec.family_name, rec.given_name)
        orcids_per_key.setdefault(key, set()).add(rec.orcid)
    ambiguous = {key for key, ids in orcids_per_key.items() if len(ids) >= min_orcids_per_block}
    return [rec for rec in labeled if ln_fi_key(rec.family_name, rec.given_name) in ambiguous]


def write_index_csv(index: IndexMap, path: str | Path) -> None:
    """Dump an IndexMap as ``iri,index`` rows for reproducibility."""
    with open(path, "w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(["iri", "index"])
        for idx, name in enumerate(index.names()):
            writer.writerow([name, idx])


def read_index_csv(path: str | Path) -> IndexMap:
    with open(path, "r", encoding="utf-8", newline="") as stream:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["iri", "index"]:
            raise ParseError("index dump must start with header 'iri,index'", 1)
        pairs = [(row[0], int(row[1])) for row in reader if len(row) >= 2]
    pairs.sort(key=lambda item: item[1])
    index = IndexMap()
    for name, expected in pairs:
        if index.add(name) != expected:
            raise ParseError(f"non-contiguous index for {name!r}")
    return index
