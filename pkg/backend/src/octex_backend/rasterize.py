"""Page-image loading: direct image files plus a minimal text-PDF renderer.

The built-in rasterizer covers the class of PDF this pipeline produces
and consumes in tests: single-page, text-only content streams (BT/Tj
operator family, optionally FlateDecode-compressed). Installing a real
renderer (pypdfium2) upgrades the seam transparently; anything else
raises RasterizationError so failures are loud, never blank pages.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass
from pathlib import Path

from PIL import Image, ImageDraw, ImageFont


class RasterizationError(RuntimeError):
    pass


IMAGE_MAGICS = (b"\x89PNG", b"\xff\xd8\xff", b"BM", b"GIF8")
DEFAULT_PAGE_SIZE = (612.0, 792.0)  # US letter in PDF points


def _find_font() -> str:
    from matplotlib import font_manager

    return font_manager.findfont("DejaVu Sans")


def load_page_image(path: str | Path, dpi: int = 300) -> Image.Image:
    """Load a report page as an RGB image from a PDF or image file."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == b"%PDF":
        return rasterize_pdf(data, dpi=dpi)
    if any(data.startswith(m) for m in IMAGE_MAGICS):
        return Image.open(path).convert("RGB")
    raise RasterizationError(f"unrecognized page format: {path}")


def rasterize_pdf(data: bytes, dpi: int = 300) -> Image.Image:
    try:
        import pypdfium2  # an installed real renderer wins

        pdf = pypdfium2.PdfDocument(data)
        page = pdf[0]
        return page.render(scale=dpi / 72.0).to_pil().convert("RGB")
    except ImportError:
        return _MiniPdfRasterizer(data, dpi).render()


# --- minimal text-PDF rasterizer ----------------------------------------------

_OBJ_RE = re.compile(rb"(\d+)\s+\d+\s+obj(.*?)endobj", re.DOTALL)
_NUMBER_RE = re.compile(rb"[-+]?\d*\.?\d+")


@dataclass
class _TextRun:
    x: float
    y: float  # PDF user space, baseline, y grows upward
    size: float
    text: str


class _MiniPdfRasterizer:
    """Renders BT/Tj text from a single-page PDF onto a white canvas."""

    def __init__(self, data: bytes, dpi: int):
        self.data = data
        self.dpi = dpi
        self.objects: dict[int, bytes] = {
            int(m.group(1)): m.group(2) for m in _OBJ_RE.finditer(data)
        }

    def render(self) -> Image.Image:
        width_pt, height_pt = self._media_box()
        scale = self.dpi / 72.0
        size_px = (max(1, round(width_pt * scale)), max(1, round(height_pt * scale)))
        image = Image.new("RGB", size_px, "white")
        draw = ImageDraw.Draw(image)

        for run in self._text_runs():
            if not run.text.strip():
                continue
            px = run.x * scale
            py = (height_pt - run.y) * scale
            font_px = max(4, round(run.size * scale))
            font = ImageFont.truetype(_find_font(), font_px)
            draw.text((px, py), run.text, font=font, fill="black", anchor="ls")
        return image

    def _media_box(self) -> tuple[float, float]:
        m = re.search(rb"/MediaBox\s*\[\s*([\d.\s+-]+)\]", self.data)
        if not m:
            return DEFAULT_PAGE_SIZE
        nums = [float(v) for v in _NUMBER_RE.findall(m.group(1))]
        if len(nums) != 4:
            return DEFAULT_PAGE_SIZE
        return (nums[2] - nums[0], nums[3] - nums[1])

    def _content_streams(self) -> list[bytes]:
        page = None
        for body in self.objects.values():
            if re.search(rb"/Type\s*/Page\b", body) and b"/Pages" not in body.split(b">>")[0]:
                page = body
                break
        if page is None:
            raise RasterizationError("no /Type /Page object found")
        m = re.search(rb"/Contents\s+(\d+)\s+\d+\s+R", page)
        refs = []
        if m:
            refs = [int(m.group(1))]
        else:
            m = re.search(rb"/Contents\s*\[(.*?)\]", page, re.DOTALL)
            if not m:
                raise RasterizationError("page has no /Contents")
            refs = [int(r) for r in re.findall(rb"(\d+)\s+\d+\s+R", m.group(1))]
        return [self._stream_bytes(r) for r in refs]

    def _stream_bytes(self, ref: int) -> bytes:
        body = self.objects.get(ref)
        if body is None:
            raise RasterizationError(f"missing content object {ref}")
        m = re.search(rb"stream\r?\n(.*?)endstream", body, re.DOTALL)
        if not m:
            raise RasterizationError(f"object {ref} has no stream")
        raw = m.group(1)
        if raw.endswith(b"\r\n"):
            raw = raw[:-2]
        elif raw.endswith(b"\n") or raw.endswith(b"\r"):
            raw = raw[:-1]
        for name in self._filters(body):
            if name == b"FlateDecode":
                try:
                    raw = zlib.decompress(raw)
                except zlib.error as e:
                    raise RasterizationError(f"bad FlateDecode stream in object {ref}: {e}")
            elif name == b"ASCII85Decode":
                import base64

                text = raw.strip()
                if text.startswith(b"<~"):
                    text = text[2:]
                if text.endswith(b"~>"):
                    text = text[:-2]
                try:
                    raw = base64.a85decode(text)
                except ValueError as e:
                    raise RasterizationError(f"bad ASCII85 stream in object {ref}: {e}")
            else:
                raise RasterizationError(
                    f"unsupported stream filter {name.decode('latin-1')} in object {ref}"
                )
        return raw

    @staticmethod
    def _filters(body: bytes) -> list[bytes]:
        m = re.search(rb"/Filter\s*\[(.*?)\]", body, re.DOTALL)
        if m:
            return re.findall(rb"/(\w+)", m.group(1))
        m = re.search(rb"/Filter\s*/(\w+)", body)
        return [m.group(1)] if m else []

    def _text_runs(self) -> list[_TextRun]:
        runs: list[_TextRun] = []
        for content in self._content_streams():
            runs.extend(self._run_content(content))
        return runs

    def _run_content(self, content: bytes) -> list[_TextRun]:
        tokens = _tokenize(content)
        runs: list[_TextRun] = []
        ctm = (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
        ctm_stack: list[tuple[float, ...]] = []
        tm = (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
        tlm = tm
        font_size = 12.0
        leading = 0.0
        stack: list = []

        def device_point(x: float, y: float, m) -> tuple[float, float]:
            a, b, c, d, e, f = m
            xm, ym = a * x + c * y + e, b * x + d * y + f
            a2, b2, c2, d2, e2, f2 = ctm
            return (a2 * xm + c2 * ym + e2, b2 * xm + d2 * ym + f2)

        def emit(text: str):
            x, y = device_point(0.0, 0.0, tm)
            a, b, c, d, _e, _f = tm
            eff = font_size * abs(d if d else a) * _ctm_scale(ctm)
            runs.append(_TextRun(x, y, eff, text))

        i = 0
        while i < len(tokens):
            tok = tokens[i]
            i += 1
            if isinstance(tok, (int, float, str, bytes)):
                stack.append(tok)
                continue
            op = tok.op
            if op == "q":
                ctm_stack.append(ctm)
            elif op == "Q":
                ctm = ctm_stack.pop() if ctm_stack else (1, 0, 0, 1, 0, 0)
            elif op == "cm" and len(stack) >= 6:
                ctm = _mat_mul(tuple(float(v) for v in stack[-6:]), ctm)
            elif op == "BT":
                tm = tlm = (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
            elif op == "Tf" and len(stack) >= 1:
                font_size = float(stack[-1])
            elif op == "TL" and stack:
                leading = float(stack[-1])
            elif op == "Tm" and len(stack) >= 6:
                tm = tlm = tuple(float(v) for v in stack[-6:])
            elif op == "Td" and len(stack) >= 2:
                tx, ty = float(stack[-2]), float(stack[-1])
                tlm = _mat_mul((1, 0, 0, 1, tx, ty), tlm)
                tm = tlm
            elif op == "TD" and len(stack) >= 2:
                leading = -float(stack[-1])
                tlm = _mat_mul((1, 0, 0, 1, float(stack[-2]), float(stack[-1])), tlm)
                tm = tlm
            elif op == "T*":
                tlm = _mat_mul((1, 0, 0, 1, 0, -leading), tlm)
                tm = tlm
            elif op == "Tj" and stack and isinstance(stack[-1], bytes):
                emit(stack[-1].decode("latin-1"))
            elif op == "'" and stack and isinstance(stack[-1], bytes):
                tlm = _mat_mul((1, 0, 0, 1, 0, -leading), tlm)
                tm = tlm
                emit(stack[-1].decode("latin-1"))
            elif op == "TJ" and stack and isinstance(stack[-1], list):
                text = b"".join(p for p in stack[-1] if isinstance(p, bytes))
                emit(text.decode("latin-1"))
            stack.clear()  # operands always belong to the operator just run
        return runs


def _ctm_scale(m) -> float:
    a, b, c, d, _e, _f = m
    return max(abs(a), abs(d)) or 1.0


def _mat_mul(m1, m2):
    a1, b1, c1, d1, e1, f1 = m1
    a2, b2, c2, d2, e2, f2 = m2
    return (
        a1 * a2 + b1 * c2,
        a1 * b2 + b1 * d2,
        c1 * a2 + d1 * c2,
        c1 * b2 + d1 * d2,
        e1 * a2 + f1 * c2 + e2,
        e1 * b2 + f1 * d2 + f2,
    )


@dataclass(frozen=True)
class _Op:
    op: str


_WS = b"\x00\t\n\x0c\r "
_DELIM = b"()<>[]{}/%"


def _tokenize(content: bytes):
    """Content-stream tokens: numbers, names, literal/hex strings, arrays, ops."""
    tokens = []
    i = 0
    n = len(content)
    while i < n:
        ch = content[i : i + 1]
        if ch in _WS:
            i += 1
        elif ch == b"%":
            while i < n and content[i : i + 1] not in b"\r\n":
                i += 1
        elif ch == b"(":
            text, i = _read_literal_string(content, i + 1)
            tokens.append(text)
        elif ch == b"<" and content[i + 1 : i + 2] != b"<":
            j = content.index(b">", i)
            hexdigits = re.sub(rb"\s", b"", content[i + 1 : j])
            if len(hexdigits) % 2:
                hexdigits += b"0"
            tokens.append(bytes.fromhex(hexdigits.decode("ascii")))
            i = j + 1
        elif ch == b"<":  # dictionary in content stream: skip through >>
            depth = 0
            while i < n - 1:
                if content[i : i + 2] == b"<<":
                    depth += 1
                    i += 2
                elif content[i : i + 2] == b">>":
                    depth -= 1
                    i += 2
                    if depth == 0:
                        break
                else:
                    i += 1
        elif ch == b"[":
            inner, i = _read_array(content, i + 1)
            tokens.append(inner)
        elif ch == b"/":
            j = i + 1
            while j < n and content[j : j + 1] not in _WS + _DELIM:
                j += 1
            tokens.append(content[i:j].decode("latin-1"))
            i = j
        else:
            j = i
            while j < n and content[j : j + 1] not in _WS + _DELIM:
                j += 1
            word = content[i:j]
            i = j
            try:
                tokens.append(float(word) if b"." in word else int(word))
            except ValueError:
                tokens.append(_Op(word.decode("latin-1")))
    return tokens


def _read_literal_string(content: bytes, i: int) -> tuple[bytes, int]:
    out = bytearray()
    depth = 1
    n = len(content)
    while i < n:
        ch = content[i : i + 1]
        if ch == b"\\" and i + 1 < n:
            nxt = content[i + 1 : i + 2]
            escapes = {b"n": b"\n", b"r": b"\r", b"t": b"\t", b"b": b"\b",
                       b"f": b"\x0c", b"(": b"(", b")": b")", b"\\": b"\\"}
            if nxt in escapes:
                out += escapes[nxt]
                i += 2
            elif nxt.isdigit():
                digits = content[i + 1 : i + 4]
                k = 1
                while k < 3 and k < len(digits) and digits[k : k + 1].isdigit():
                    k += 1
                out.append(int(digits[:k], 8) & 0xFF)
                i += 1 + k
            else:
                i += 2
        elif ch == b"(":
            depth += 1
            out += ch
            i += 1
        elif ch == b")":
            depth -= 1
            if depth == 0:
                return bytes(out), i + 1
            out += ch
            i += 1
        else:
            out += ch
            i += 1
    raise RasterizationError("unterminated literal string")


def _read_array(content: bytes, i: int) -> tuple[list, int]:
    items = []
    n = len(content)
    while i < n:
        ch = content[i : i + 1]
        if ch in _WS:
            i += 1
        elif ch == b"]":
            return items, i + 1
        elif ch == b"(":
            text, i = _read_literal_string(content, i + 1)
            items.append(text)
        elif ch == b"<":
            j = content.index(b">", i)
            hexdigits = re.sub(rb"\s", b"", content[i + 1 : j])
            if len(hexdigits) % 2:
                hexdigits += b"0"
            items.append(bytes.fromhex(hexdigits.decode("ascii")))
            i = j + 1
        else:
            j = i
            while j < n and content[j : j + 1] not in _WS + _DELIM:
                j += 1
            word = content[i:j]
            i = j
            try:
                items.append(float(word) if b"." in word else int(word))
            except ValueError:
                pass  # names/operators inside arrays are irrelevant here
    raise RasterizationError("unterminated array")
