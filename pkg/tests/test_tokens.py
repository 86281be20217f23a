import json
import random
from statistics import median

import pytest

from octex.fields import ReportKind
from octex.tokens import (
    OcrToken,
    TokenSchemaError,
    TokenStream,
    parse_token_stream,
    reading_order,
    serialize_token_stream,
)


def make_stream_doc(tokens):
    return {
        "schema_version": "1",
        "report_id": "r1",
        "report_kind": "rnfl",
        "backend_name": "test",
        "tokens": tokens,
    }


def token_doc(tid, text="85", conf=0.99, bbox=(0.1, 0.1, 0.2, 0.2), crop="signal"):
    return {"id": tid, "text": text, "conf": conf, "bbox": list(bbox), "crop_id": crop}


class TestParse:
    def test_valid_stream_round_trips(self):
        doc = make_stream_doc([token_doc(0), token_doc(1, text="8/10", conf=0.998)])
        stream = parse_token_stream(json.dumps(doc))
        assert stream.report_kind is ReportKind.RNFL
        assert stream.tokens[1].conf == 0.998  # confidence carried exactly
        again = parse_token_stream(serialize_token_stream(stream))
        assert again == stream

    def test_empty_tokens_list_is_valid(self):
        stream = parse_token_stream(json.dumps(make_stream_doc([])))
        assert stream.tokens == []

    def test_conf_out_of_range_names_token_and_field(self):
        doc = make_stream_doc([token_doc(0), token_doc(5, conf=1.2)])
        with pytest.raises(TokenSchemaError) as exc:
            parse_token_stream(json.dumps(doc))
        assert "token 5" in str(exc.value)
        assert "conf" in str(exc.value)

    def test_version_mismatch_lists_supported(self):
        doc = make_stream_doc([])
        doc["schema_version"] = "99"
        with pytest.raises(TokenSchemaError) as exc:
            parse_token_stream(json.dumps(doc))
        assert "1" in str(exc.value)

    def test_duplicate_ids_rejected(self):
        doc = make_stream_doc([token_doc(3), token_doc(3)])
        with pytest.raises(TokenSchemaError) as exc:
            parse_token_stream(json.dumps(doc))
        assert "token 3" in str(exc.value)

    @pytest.mark.parametrize("bbox", [(0.5, 0.1, 0.2, 0.2), (0.1, 0.1, 0.1, 0.2), (-0.1, 0, 0.5, 0.5)])
    def test_bad_bbox_rejected(self, bbox):
        doc = make_stream_doc([token_doc(0, bbox=bbox)])
        with pytest.raises(TokenSchemaError):
            parse_token_stream(json.dumps(doc))

    def test_whitespace_text_rejected(self):
        doc = make_stream_doc([token_doc(0, text="   ")])
        with pytest.raises(TokenSchemaError):
            parse_token_stream(json.dumps(doc))

    def test_text_stripped(self):
        doc = make_stream_doc([token_doc(0, text=" 85 ")])
        assert parse_token_stream(json.dumps(doc)).tokens[0].text == "85"


def tok(tid, x0, y0, x1, y1, text="v", crop="c"):
    return OcrToken(tid, text, 0.99, (x0, y0, x1, y1), crop)


def brute_force_reading_order(tokens):
    """Independent naive oracle: explicit row grouping then comparator sort."""
    if not tokens:
        return []
    tol = 0.5 * median(t.bbox[3] - t.bbox[1] for t in tokens)
    remaining = sorted(tokens, key=lambda t: ((t.bbox[1] + t.bbox[3]) / 2, t.bbox[0], t.id))
    rows = []
    for t in remaining:
        yc = (t.bbox[1] + t.bbox[3]) / 2
        placed = False
        for row in rows:
            anchor = row[0]
            anchor_yc = (anchor.bbox[1] + anchor.bbox[3]) / 2
            if yc - anchor_yc <= tol:
                row.append(t)
                placed = True
                break
        if not placed:
            rows.append([t])
    out = []
    for row in rows:
        out.extend(sorted(row, key=lambda t: (t.bbox[0], (t.bbox[1] + t.bbox[3]) / 2, t.id)))
    return out


class TestReadingOrder:
    def test_single_row_left_to_right(self):
        a = tok(0, 0.6, 0.4, 0.7, 0.5)
        b = tok(1, 0.1, 0.4, 0.2, 0.5)
        assert reading_order([a, b]) == [b, a]

    def test_rows_top_to_bottom(self):
        top = tok(0, 0.8, 0.15, 0.9, 0.25)
        bottom = tok(1, 0.1, 0.75, 0.2, 0.85)
        assert reading_order([bottom, top]) == [top, bottom]

    def test_mixed_crops_rejected(self):
        with pytest.raises(ValueError):
            reading_order([tok(0, 0.1, 0.1, 0.2, 0.2, crop="a"), tok(1, 0.1, 0.1, 0.2, 0.2, crop="b")])

    def test_random_tokens_match_brute_force_oracle(self):
        rng = random.Random(42)
        for _ in range(30):
            tokens = []
            for i in range(50):
                x0 = rng.uniform(0, 0.9)
                y0 = rng.uniform(0, 0.9)
                tokens.append(tok(i, x0, y0, x0 + rng.uniform(0.02, 0.1), y0 + rng.uniform(0.02, 0.08)))
            expected = brute_force_reading_order(tokens)
            got = reading_order(tokens)
            assert got == expected
            # permutation of input
            assert sorted(got, key=lambda t: t.id) == sorted(tokens, key=lambda t: t.id)

    def test_shuffle_invariant_and_idempotent(self):
        rng = random.Random(7)
        tokens = []
        for i in range(40):
            x0 = rng.uniform(0, 0.9)
            y0 = rng.uniform(0, 0.9)
            tokens.append(tok(i, x0, y0, x0 + 0.05, y0 + 0.05))
        baseline = reading_order(tokens)
        for _ in range(10):
            shuffled = tokens[:]
            rng.shuffle(shuffled)
            assert reading_order(shuffled) == baseline
        assert reading_order(baseline) == baseline
