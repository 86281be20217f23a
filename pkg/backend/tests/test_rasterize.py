import io

import pytest
from PIL import Image

from octex_backend.engine import get_engine
from octex_backend.rasterize import RasterizationError, load_page_image, rasterize_pdf


def simple_pdf(lines, compressed=True):
    from reportlab.lib.pagesizes import letter
    from reportlab.pdfgen import canvas as rl_canvas

    buf = io.BytesIO()
    c = rl_canvas.Canvas(buf, pagesize=letter, pageCompression=1 if compressed else 0)
    c.setFont("Helvetica", 14)
    for x, y, text in lines:
        c.drawString(x, y, text)
    c.showPage()
    c.save()
    return buf.getvalue()


class TestMiniRasterizer:
    @pytest.mark.parametrize("compressed", [True, False])
    def test_renders_text_where_drawn(self, compressed):
        pdf = simple_pdf([(100, 700, "85"), (300, 500, "0.76")], compressed)
        img = rasterize_pdf(pdf, dpi=150)
        assert img.size == (1275, 1650)
        tokens = {t.text: t for t in get_engine().recognize(img)}
        assert "85" in tokens and "0.76" in tokens
        # 100pt from the left at 150 dpi is ~208px; y is flipped
        x0, y0, _, _ = tokens["85"].bbox_px
        assert abs(x0 - 100 / 72 * 150) < 20
        assert abs(y0 - (792 - 700) / 72 * 150) < 40

    def test_dpi_scales_canvas(self):
        pdf = simple_pdf([(100, 700, "hello")])
        assert rasterize_pdf(pdf, dpi=72).size == (612, 792)
        assert rasterize_pdf(pdf, dpi=300).size == (2550, 3300)

    def test_not_a_pdf_rejected(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"garbage")
        with pytest.raises(RasterizationError):
            load_page_image(path)

    def test_png_passthrough(self, tmp_path):
        path = tmp_path / "x.png"
        Image.new("RGB", (40, 30), "white").save(path)
        img = load_page_image(path)
        assert img.size == (40, 30)

    def test_pdf_without_page_rejected(self):
        with pytest.raises(RasterizationError):
            rasterize_pdf(b"%PDF-1.4\n1 0 obj\n<< >>\nendobj\n")
