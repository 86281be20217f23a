"""Label-anchored row extraction for the tabular report regions.

Each global parameter row carries a printed label followed by OD and OS
value cells. Labels are located by fuzzy word matching (at most one
character substitution per word, so single-glyph OCR noise still binds).
Within a row, paired values are bound to eyes by token emission order,
OD first, matching how the report prints the pair; the geometric column
split is deliberately left to QC as an independent cross-check on that
convention.
"""

from __future__ import annotations

from dataclasses import dataclass

from octex.fields import (
    REASON_ANCHOR_MISSING,
    REASON_COLUMN_AMBIGUOUS,
    REASON_VALUE_UNPARSEABLE,
    ExtractedField,
    Eye,
    FieldId,
    parse_value,
)
from octex.layout import LayoutTemplate, Region
from octex.tokens import OcrToken, cluster_rows

# Anchor word sequences per field name. Punctuation is stripped from word
# edges before matching, so "Strength:" matches "strength".
ANCHOR_WORDS: dict[str, tuple[str, ...]] = {
    "rnfl.signal_strength": ("signal", "strength"),
    "rnfl.avg_thickness": ("average", "rnfl", "thickness"),
    "rnfl.symmetry": ("rnfl", "symmetry"),
    "rnfl.rim_area": ("rim", "area"),
    "rnfl.disc_area": ("disc", "area"),
    "rnfl.avg_cd_ratio": ("average", "c/d", "ratio"),
    "rnfl.vert_cd_ratio": ("vertical", "c/d", "ratio"),
    "rnfl.cup_volume": ("cup", "volume"),
    "gcc.signal_strength": ("signal", "strength"),
    "gcc.avg_gclipl": ("average", "gcl", "ipl", "thickness"),
    "gcc.min_gclipl": ("minimum", "gcl", "ipl", "thickness"),
}

_EDGE_PUNCT = ":;,.()[]|+&"


def normalize_word(word: str) -> str:
    return word.strip(_EDGE_PUNCT).lower()


def words_match(anchor_word: str, seen_word: str) -> bool:
    """Exact match, or same length with at most one substituted character."""
    if anchor_word == seen_word:
        return True
    if len(anchor_word) != len(seen_word):
        return False
    return sum(a != b for a, b in zip(anchor_word, seen_word)) <= 1


@dataclass
class AnchorHit:
    row: list[OcrToken]
    anchor_token_ids: set[int]


def _row_word_items(row: list[OcrToken]) -> list[tuple[str, OcrToken]]:
    items = []
    for tok in row:
        for word in tok.text.split():
            w = normalize_word(word)
            if w:
                items.append((w, tok))
    return items


def find_anchor_row(rows: list[list[OcrToken]], anchor: tuple[str, ...]) -> AnchorHit | None:
    """First row containing the anchor words as a consecutive run."""
    for row in rows:
        items = _row_word_items(row)
        words = [w for w, _ in items]
        for start in range(len(words) - len(anchor) + 1):
            if all(words_match(a, words[start + k]) for k, a in enumerate(anchor)):
                span_ids = {items[start + k][1].id for k in range(len(anchor))}
                return AnchorHit(row, span_ids)
    return None


def dedup_overlapping(candidates: list[OcrToken]) -> list[OcrToken]:
    """Drop duplicate detections: overlapping tokens where one text prefixes
    the other keep only the longer form (e.g. "85" under "85um")."""

    def overlaps(a: OcrToken, b: OcrToken) -> bool:
        ax0, ay0, ax1, ay1 = a.bbox
        bx0, by0, bx1, by1 = b.bbox
        return ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1

    dropped: set[int] = set()
    for a in candidates:
        for b in candidates:
            if a.id == b.id or a.id in dropped or b.id in dropped:
                continue
            if overlaps(a, b) and b.text.startswith(a.text) and len(b.text) > len(a.text):
                dropped.add(a.id)
    return [t for t in candidates if t.id not in dropped]


@dataclass(frozen=True)
class _Candidate:
    token: OcrToken
    value: int | float


def bind_value_pair(
    fid_by_eye: dict[Eye, FieldId],
    candidates: list[_Candidate],
    region: Region,
    template: LayoutTemplate,
) -> list[ExtractedField]:
    """Bind a row's parsed value tokens to the expected eyes.

    Two candidates bind by ascending token id (the report prints OD before
    OS and engines emit in that order); one lone candidate is placed by
    its column, and a crowd of three or more is ambiguous.
    """
    eyes = sorted(fid_by_eye, key=lambda e: e.value)  # OD before OS
    out: list[ExtractedField] = []

    def missing_all(reason: str) -> list[ExtractedField]:
        return [ExtractedField.missing(fid_by_eye[e], reason) for e in eyes]

    if not candidates:
        return missing_all(REASON_VALUE_UNPARSEABLE)

    if len(eyes) == 1:
        if len(candidates) > 1:
            return missing_all(REASON_COLUMN_AMBIGUOUS)
        cand = candidates[0]
        out.append(
            ExtractedField.detected(
                fid_by_eye[eyes[0]], cand.value, cand.token.conf, [cand.token.id]
            )
        )
        return out

    if len(candidates) == 1:
        cand = candidates[0]
        col = template.column_of(region.to_page_x(cand.token.x_center))
        if col is None:
            return missing_all(REASON_COLUMN_AMBIGUOUS)
        for eye in eyes:
            if eye is col:
                out.append(
                    ExtractedField.detected(
                        fid_by_eye[eye], cand.value, cand.token.conf, [cand.token.id]
                    )
                )
            else:
                out.append(ExtractedField.missing(fid_by_eye[eye], REASON_VALUE_UNPARSEABLE))
        return out

    if len(candidates) == 2:
        ordered = sorted(candidates, key=lambda c: c.token.id)
        for eye, cand in zip(eyes, ordered):
            out.append(
                ExtractedField.detected(
                    fid_by_eye[eye], cand.value, cand.token.conf, [cand.token.id]
                )
            )
        return out

    return missing_all(REASON_COLUMN_AMBIGUOUS)


def _row_candidates(
    row: list[OcrToken], exclude_ids: set[int], fid: FieldId
) -> list[_Candidate]:
    kept = dedup_overlapping([t for t in row if t.id not in exclude_ids])
    out = []
    for tok in kept:
        value = parse_value(fid.value_kind, tok.text)
        if value is not None:
            out.append(_Candidate(tok, value))
    return out


def extract_label_value_region(
    region: Region,
    tokens: list[OcrToken],
    template: LayoutTemplate,
) -> list[ExtractedField]:
    """Run anchor-matched extraction for every field a table region claims."""
    rows = cluster_rows(tokens) if tokens else []
    by_name: dict[str, dict[Eye, FieldId]] = {}
    for fid in region.expected_fields:
        by_name.setdefault(fid.name, {})[fid.eye] = fid

    results: list[ExtractedField] = []
    for name, fid_by_eye in by_name.items():
        anchor = ANCHOR_WORDS.get(name)
        if anchor is None:
            results.extend(
                ExtractedField.missing(f, REASON_ANCHOR_MISSING) for f in fid_by_eye.values()
            )
            continue
        hit = find_anchor_row(rows, anchor)
        if hit is None:
            results.extend(
                ExtractedField.missing(f, REASON_ANCHOR_MISSING) for f in fid_by_eye.values()
            )
            continue
        sample = next(iter(fid_by_eye.values()))
        candidates = _row_candidates(hit.row, hit.anchor_token_ids, sample)
        results.extend(bind_value_pair(fid_by_eye, candidates, region, template))
    return results


def extract_column_pair_region(
    region: Region,
    tokens: list[OcrToken],
    template: LayoutTemplate,
) -> list[ExtractedField]:
    """Bind value rows to fields by row order for label-less column regions.

    The region's expected field names, in declaration order, map one-to-one
    onto the value-bearing rows from top to bottom.
    """
    names: list[str] = []
    by_name: dict[str, dict[Eye, FieldId]] = {}
    for fid in region.expected_fields:
        if fid.name not in by_name:
            names.append(fid.name)
            by_name[fid.name] = {}
        by_name[fid.name][fid.eye] = fid

    rows = cluster_rows(tokens) if tokens else []
    value_rows = []
    for row in rows:
        sample_name = names[0] if names else None
        if sample_name is None:
            break
        cands = _row_candidates(row, set(), next(iter(by_name[sample_name].values())))
        if cands:
            value_rows.append(row)

    results: list[ExtractedField] = []
    for i, name in enumerate(names):
        fid_by_eye = by_name[name]
        if i >= len(value_rows):
            results.extend(
                ExtractedField.missing(f, REASON_ANCHOR_MISSING) for f in fid_by_eye.values()
            )
            continue
        sample = next(iter(fid_by_eye.values()))
        candidates = _row_candidates(value_rows[i], set(), sample)
        results.extend(bind_value_pair(fid_by_eye, candidates, region, template))
    return results
