"""Built-in OCR engine: glyph segmentation plus template correlation.

Deterministic and dependency-light so the backend works hermetically:
connected ink components are segmented with scipy, merged into glyphs,
grouped into words, and each glyph is matched against an atlas rendered
from a bundled sans font. Swap in an external engine (PaddleOCR,
Tesseract) by implementing `recognize` with the same signature.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy import ndimage

ALPHABET = (
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    "abcdefghijklmnopqrstuvwxyz"
    "0123456789"
    ":/.,%()+-µ"
)

GLYPH_BOX = (24, 32)  # (width, height) of the normalized comparison box
INK_THRESHOLD = 160   # gray level at or below which a pixel counts as ink
MIN_COMPONENT_AREA = 3
ASPECT_PENALTY = 0.30
HEIGHT_PENALTY = 0.45  # separates x-height glyphs from full-height ones (o vs 0)
WORD_GAP_EM = 0.32    # gaps wider than this fraction of the em size split words
DIGIT_CONTEXT_MARGIN = 0.06
ATLAS_RENDER_SIZE = 64


def _find_font() -> str:
    from matplotlib import font_manager

    return font_manager.findfont("DejaVu Sans")


@dataclass(frozen=True)
class EngineToken:
    """One recognized word with a pixel-space bounding box."""

    text: str
    conf: float
    bbox_px: tuple[int, int, int, int]  # (x0, y0, x1, y1)


@dataclass
class _Glyph:
    x0: int
    y0: int
    x1: int
    y1: int
    patch: np.ndarray  # grayscale ink intensity in [0,1], tight crop

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


def _normalize(patch: np.ndarray) -> np.ndarray:
    img = Image.fromarray((np.clip(patch, 0.0, 1.0) * 255).astype(np.uint8))
    img = img.resize(GLYPH_BOX, Image.BILINEAR)
    return np.asarray(img, dtype=np.float32) / 255.0


@lru_cache(maxsize=1)
def _glyph_atlas() -> tuple[np.ndarray, np.ndarray, np.ndarray, str]:
    """Normalized templates, aspect ratios, heights relative to a digit,
    and the character order."""
    font = ImageFont.truetype(_find_font(), ATLAS_RENDER_SIZE)
    templates = []
    aspects = []
    heights = []
    for ch in ALPHABET:
        canvas = Image.new("L", (ATLAS_RENDER_SIZE * 2, ATLAS_RENDER_SIZE * 2), 255)
        draw = ImageDraw.Draw(canvas)
        draw.text((ATLAS_RENDER_SIZE // 2, ATLAS_RENDER_SIZE // 2), ch, font=font, fill=0)
        gray = np.asarray(canvas, dtype=np.float32)
        ink = 1.0 - gray / 255.0
        solid = gray <= INK_THRESHOLD
        ys, xs = np.nonzero(solid)
        if len(xs) == 0:
            templates.append(np.zeros(GLYPH_BOX[::-1], dtype=np.float32))
            aspects.append(1.0)
            heights.append(1.0)
            continue
        tight = ink[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
        templates.append(_normalize(tight))
        h, w = tight.shape
        aspects.append(w / h)
        heights.append(h)
    heights = np.asarray(heights, dtype=np.float32)
    digit_h = heights[ALPHABET.index("0")]
    return (
        np.stack(templates),
        np.asarray(aspects, dtype=np.float32),
        heights / digit_h,
        ALPHABET,
    )


def _scored_matches(glyph: _Glyph, line_em: int) -> np.ndarray:
    templates, aspects, rel_heights, _chars = _glyph_atlas()
    cand = _normalize(glyph.patch)
    pixel_scores = 1.0 - np.abs(templates - cand[None]).mean(axis=(1, 2))
    aspect = max(glyph.width, 1) / max(glyph.height, 1)
    penalty = ASPECT_PENALTY * np.abs(np.log(np.maximum(aspects, 1e-3) / max(aspect, 1e-3)))
    rel_cand = glyph.height / max(line_em, 1)
    penalty = penalty + HEIGHT_PENALTY * np.abs(rel_heights - rel_cand)
    return pixel_scores - penalty


def _match_glyph(glyph: _Glyph, line_em: int) -> tuple[str, float, np.ndarray]:
    scores = _scored_matches(glyph, line_em)
    best = int(np.argmax(scores))
    conf = float(np.clip(scores[best] + 0.05, 0.0, 1.0))
    return ALPHABET[best], conf, scores


SPLIT_RETRY_SCORE = 0.82   # below this, suspect two glyphs fused together
SPLIT_GAIN = 0.03


def _split_at_valley(glyph: _Glyph) -> tuple[_Glyph, _Glyph] | None:
    """Cut a fused component at its weakest interior ink column."""
    profile = glyph.patch.sum(axis=0)
    margin = max(2, glyph.width // 5)
    if glyph.width - 2 * margin < 2:
        return None
    interior = profile[margin : glyph.width - margin]
    cut = margin + int(np.argmin(interior))
    left = glyph.patch[:, :cut]
    right = glyph.patch[:, cut:]

    def tight(patch, x_base):
        ys, xs = np.nonzero(patch > 0.25)
        if len(xs) < MIN_COMPONENT_AREA:
            return None
        sub = patch[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
        return _Glyph(
            glyph.x0 + x_base + xs.min(),
            glyph.y0 + ys.min(),
            glyph.x0 + x_base + xs.max() + 1,
            glyph.y0 + ys.max() + 1,
            sub,
        )

    a, b = tight(left, 0), tight(right, cut)
    if a is None or b is None:
        return None
    return a, b


def _match_or_split(glyph: _Glyph, word_em: int, depth: int = 1):
    """Match one glyph, retrying as two split halves when the match is poor."""
    ch, conf, scores = _match_glyph(glyph, word_em)
    whole = float(scores.max())
    if whole >= SPLIT_RETRY_SCORE or depth <= 0 or glyph.width < 0.5 * word_em:
        return [(ch, conf, scores)]
    halves = _split_at_valley(glyph)
    if halves is None:
        return [(ch, conf, scores)]
    parts = []
    part_scores = []
    for half in halves:
        matched = _match_or_split(half, word_em, depth - 1)
        parts.extend(matched)
        part_scores.extend(float(s.max()) for _, _, s in matched)
    if min(part_scores) > whole + SPLIT_GAIN:
        return parts
    return [(ch, conf, scores)]


_DIGIT_LIKE = set("0123456789./,%")
_DIGIT_INDICES = [ALPHABET.index(c) for c in "0123456789"]


def _digit_context_pass(chars: list[str], score_rows: list[np.ndarray]) -> list[str]:
    """Within a mostly-numeric word, prefer a digit reading for letters that
    score nearly as well as a digit (B/8, O/0, l/1 style confusions)."""
    digitish = sum(c in _DIGIT_LIKE for c in chars)
    if digitish < max(1, (len(chars) + 1) // 2):
        return chars
    out = []
    for ch, scores in zip(chars, score_rows):
        if ch in _DIGIT_LIKE:
            out.append(ch)
            continue
        digit_idx = max(_DIGIT_INDICES, key=lambda i: scores[i])
        if scores[digit_idx] >= scores.max() - DIGIT_CONTEXT_MARGIN:
            out.append(ALPHABET[digit_idx])
        else:
            out.append(ch)
    return out


def _line_bands(ink: np.ndarray) -> list[tuple[int, int]]:
    """Split the crop into horizontal text bands at fully blank rows."""
    occupied = ink.any(axis=1)
    bands = []
    start = None
    for y, filled in enumerate(occupied):
        if filled and start is None:
            start = y
        elif not filled and start is not None:
            bands.append((start, y))
            start = None
    if start is not None:
        bands.append((start, len(occupied)))
    return bands


def _components(ink: np.ndarray, gray: np.ndarray, y_offset: int) -> list[_Glyph]:
    labels, _count = ndimage.label(ink, structure=np.ones((3, 3), dtype=int))
    intensity = 1.0 - gray.astype(np.float32) / 255.0
    glyphs = []
    for index, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        mask = labels[sl] == index
        if mask.sum() < MIN_COMPONENT_AREA:
            continue
        # dilated mask keeps the antialiased halo, masks out neighbors
        halo = ndimage.binary_dilation(mask, iterations=1)
        patch = intensity[sl] * halo
        glyphs.append(
            _Glyph(sl[1].start, sl[0].start + y_offset, sl[1].stop, sl[0].stop + y_offset, patch)
        )
    return glyphs


def _merge_stacked(glyphs: list[_Glyph]) -> list[_Glyph]:
    """Merge vertically stacked parts within one band (i/j dots, colons)."""
    glyphs = sorted(glyphs, key=lambda g: (g.x0, g.y0))
    merged: list[_Glyph] = []
    for g in glyphs:
        target = None
        for m in merged:
            overlap = min(m.x1, g.x1) - max(m.x0, g.x0)
            if overlap <= 0:
                continue
            if overlap >= 0.5 * min(m.width, g.width):
                target = m
                break
        if target is None:
            merged.append(g)
            continue
        x0, y0 = min(target.x0, g.x0), min(target.y0, g.y0)
        x1, y1 = max(target.x1, g.x1), max(target.y1, g.y1)
        canvas = np.zeros((y1 - y0, x1 - x0), dtype=np.float32)
        t_view = canvas[target.y0 - y0 : target.y1 - y0, target.x0 - x0 : target.x1 - x0]
        np.maximum(t_view, target.patch, out=t_view)
        g_view = canvas[g.y0 - y0 : g.y1 - y0, g.x0 - x0 : g.x1 - x0]
        np.maximum(g_view, g.patch, out=g_view)
        target.x0, target.y0, target.x1, target.y1 = x0, y0, x1, y1
        target.patch = canvas
    return merged


def _merge_dot_splits(words: list[list[_Glyph]], em: int) -> list[list[_Glyph]]:
    """Re-join words that a decimal point's side bearings split apart."""
    def is_dot(g: _Glyph) -> bool:
        return g.height <= 0.25 * em and g.width <= 0.25 * em

    merged: list[list[_Glyph]] = []
    for word in words:
        if merged:
            prev = merged[-1]
            gap = word[0].x0 - prev[-1].x1
            if gap <= 0.55 * em and (is_dot(prev[-1]) or is_dot(word[0])):
                prev.extend(word)
                continue
        merged.append(word)
    return merged


class GlyphTemplateEngine:
    """Recognizes machine-printed text by per-glyph template correlation."""

    name = "glyphmatch"

    def recognize(self, image: Image.Image) -> list[EngineToken]:
        gray = np.asarray(image.convert("L"))
        ink = gray <= INK_THRESHOLD
        tokens: list[EngineToken] = []
        for y0, y1 in _line_bands(ink):
            glyphs = _merge_stacked(_components(ink[y0:y1], gray[y0:y1], y0))
            if not glyphs:
                continue
            glyphs.sort(key=lambda g: g.x0)
            em = max(g.height for g in glyphs)
            gap_limit = WORD_GAP_EM * em
            words: list[list[_Glyph]] = [[glyphs[0]]]
            for prev, g in zip(glyphs, glyphs[1:]):
                if g.x0 - prev.x1 > gap_limit:
                    words.append([g])
                else:
                    words[-1].append(g)
            words = _merge_dot_splits(words, em)
            for word in words:
                word_em = max(g.height for g in word)
                chars = []
                confs = []
                score_rows = []
                for g in word:
                    for ch, conf, scores in _match_or_split(g, word_em):
                        chars.append(ch)
                        confs.append(conf)
                        score_rows.append(scores)
                chars = _digit_context_pass(chars, score_rows)
                text = "".join(chars).strip()
                if not text:
                    continue
                bbox = (
                    min(g.x0 for g in word),
                    min(g.y0 for g in word),
                    max(g.x1 for g in word),
                    max(g.y1 for g in word),
                )
                conf = float(np.clip(np.mean(confs), 0.0, 1.0))
                tokens.append(EngineToken(text, conf, bbox))
        return tokens


def get_engine(name: str = "auto") -> GlyphTemplateEngine:
    """Engine factory; "auto" currently resolves to the built-in matcher.

    External engines drop in here: return any object exposing
    `name` and `recognize(image) -> list[EngineToken]`.
    """
    if name in ("auto", "glyphmatch"):
        return GlyphTemplateEngine()
    raise ValueError(f"unknown OCR engine: {name}")
