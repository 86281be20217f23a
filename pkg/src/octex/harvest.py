"""DICOM harvesting: find encapsulated-PDF reports and pull out the bytes.

A deliberately small reader for the one object class this pipeline
consumes: explicit-VR little-endian files carrying an encapsulated
document. Anything else is skipped per-file with a reason, never fatally.
No patient-identifying attributes are read or persisted.
"""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

PREAMBLE_LEN = 128
MAGIC = b"DICM"

TRANSFER_SYNTAX_EVR_LE = "1.2.840.10008.1.2.1"
SOP_CLASS_ENCAPSULATED_PDF = "1.2.840.10008.5.1.4.1.1.104.1"

TAG_TRANSFER_SYNTAX = (0x0002, 0x0010)
TAG_SOP_CLASS = (0x0008, 0x0016)
TAG_SOP_INSTANCE = (0x0008, 0x0018)
TAG_STUDY_DATE = (0x0008, 0x0020)
TAG_DOCUMENT_TITLE = (0x0042, 0x0010)
TAG_ENCAPSULATED_DOC = (0x0042, 0x0011)
TAG_ENCAPSULATED_DOC_LEN = (0x0042, 0x0015)

# VRs carrying a 2-byte reserved field and 32-bit length in explicit VR.
_LONG_VRS = {b"OB", b"OW", b"OF", b"OD", b"OL", b"OV", b"SQ", b"UC", b"UR", b"UT", b"UN"}

PDF_MAGIC = b"%PDF"


class DicomError(ValueError):
    pass


class NotDicomError(DicomError):
    """File lacks the DICM marker."""


class UnsupportedTransferSyntaxError(DicomError):
    """Data set is not explicit-VR little-endian."""


class UndefinedLengthError(DicomError):
    """Hit an undefined-length element before the needed attributes."""


class NotEncapsulatedError(DicomError):
    """No encapsulated-document element present."""


class WrongPayloadError(DicomError):
    """Encapsulated payload is not a PDF."""


class DocumentKind(str, Enum):
    RNFL = "rnfl"
    GANGLION_CELL = "ganglion_cell"
    OTHER = "other"


def classify_title(title: str) -> DocumentKind:
    """Case-insensitive substring filter; RNFL takes precedence."""
    lowered = title.lower()
    if "rnfl" in lowered:
        return DocumentKind.RNFL
    if "ganglion cell" in lowered:
        return DocumentKind.GANGLION_CELL
    return DocumentKind.OTHER


@dataclass(frozen=True)
class DicomReportRef:
    source_path: Optional[Path]
    sop_instance_uid: str
    document_title: str
    report_kind: DocumentKind
    study_date: Optional[str]
    pdf_bytes_len: int


@dataclass(frozen=True)
class SkipEntry:
    source_path: Path
    reason: str


@dataclass
class ScanResult:
    records: list[DicomReportRef]
    skips: list[SkipEntry]

    @property
    def visited(self) -> int:
        return len(self.records) + len(self.skips)


# --- writer (test oracle) ----------------------------------------------------

def _pad_even(value: bytes, pad: bytes = b"\x00") -> bytes:
    return value + pad if len(value) % 2 else value


def _element(group: int, elem: int, vr: bytes, value: bytes) -> bytes:
    head = struct.pack("<HH", group, elem) + vr
    if vr in _LONG_VRS:
        return head + b"\x00\x00" + struct.pack("<I", len(value)) + value
    return head + struct.pack("<H", len(value)) + value


def _uid_bytes(uid: str) -> bytes:
    return _pad_even(uid.encode("ascii"))


def deterministic_uid(payload: bytes, title: str) -> str:
    digest = hashlib.sha256(title.encode("utf-8") + b"\x00" + payload).hexdigest()
    return "2.25." + str(int(digest[:30], 16))


def build_test_dicom(
    title: str,
    payload: bytes,
    sop_instance_uid: str | None = None,
    study_date: str | None = "20240102",
) -> bytes:
    """Emit a minimal explicit-VR little-endian file around a payload.

    Standards-shaped: 128-byte preamble, DICM marker, group-0002 file meta,
    then the data set with document title and encapsulated document. The
    true payload length rides in the companion length attribute so odd
    payloads round-trip byte-identically despite even padding.
    """
    if not payload:
        raise ValueError("payload must be non-empty")
    sop_uid = sop_instance_uid or deterministic_uid(payload, title)

    meta_body = (
        _element(0x0002, 0x0001, b"OB", b"\x00\x01")
        + _element(0x0002, 0x0002, b"UI", _uid_bytes(SOP_CLASS_ENCAPSULATED_PDF))
        + _element(0x0002, 0x0003, b"UI", _uid_bytes(sop_uid))
        + _element(0x0002, 0x0010, b"UI", _uid_bytes(TRANSFER_SYNTAX_EVR_LE))
    )
    meta = _element(0x0002, 0x0000, b"UL", struct.pack("<I", len(meta_body))) + meta_body

    dataset = _element(0x0008, 0x0016, b"UI", _uid_bytes(SOP_CLASS_ENCAPSULATED_PDF))
    dataset += _element(0x0008, 0x0018, b"UI", _uid_bytes(sop_uid))
    if study_date:
        dataset += _element(0x0008, 0x0020, b"DA", _pad_even(study_date.encode("ascii"), b" "))
    dataset += _element(0x0042, 0x0010, b"ST", _pad_even(title.encode("utf-8"), b" "))
    dataset += _element(0x0042, 0x0011, b"OB", _pad_even(payload))
    dataset += _element(0x0042, 0x0015, b"UL", struct.pack("<I", len(payload)))

    return b"\x00" * PREAMBLE_LEN + MAGIC + meta + dataset


# --- reader ------------------------------------------------------------------

@dataclass
class _ParsedDicom:
    sop_instance_uid: str = ""
    study_date: Optional[str] = None
    document_title: str = ""
    payload: Optional[bytes] = None
    declared_len: Optional[int] = None

    def pdf_bytes(self) -> bytes:
        if self.payload is None:
            raise NotEncapsulatedError("no encapsulated document element")
        data = self.payload
        if self.declared_len is not None and 0 < self.declared_len <= len(data):
            data = data[: self.declared_len]
        return data


def _read_elements(data: bytes, offset: int, stop_after_group: int):
    """Yield (tag, vr, value) for explicit-VR little-endian elements."""
    n = len(data)
    while offset + 8 <= n:
        group, elem = struct.unpack_from("<HH", data, offset)
        vr = data[offset + 4 : offset + 6]
        offset += 6
        if vr in _LONG_VRS:
            if offset + 6 > n:
                return
            length = struct.unpack_from("<I", data, offset + 2)[0]
            offset += 6
        else:
            if offset + 2 > n:
                return
            length = struct.unpack_from("<H", data, offset)[0]
            offset += 2
        if length == 0xFFFFFFFF:
            raise UndefinedLengthError(
                f"undefined-length element ({group:04x},{elem:04x})"
            )
        if offset + length > n:
            raise DicomError(
                f"element ({group:04x},{elem:04x}) overruns the file"
            )
        yield (group, elem), vr, data[offset : offset + length]
        offset += length
        if group > stop_after_group:
            return


def parse_dicom_bytes(data: bytes) -> _ParsedDicom:
    if len(data) < PREAMBLE_LEN + 4 or data[PREAMBLE_LEN : PREAMBLE_LEN + 4] != MAGIC:
        raise NotDicomError("missing DICM marker at offset 128")

    offset = PREAMBLE_LEN + 4
    transfer_syntax = None
    n = len(data)
    # File meta group (0002) is always explicit-VR little-endian.
    while offset + 8 <= n:
        group, _elem = struct.unpack_from("<HH", data, offset)
        if group != 0x0002:
            break
        vr = data[offset + 4 : offset + 6]
        if vr in _LONG_VRS:
            length = struct.unpack_from("<I", data, offset + 8)[0]
            body_start = offset + 12
        else:
            length = struct.unpack_from("<H", data, offset + 6)[0]
            body_start = offset + 8
        if _elem == TAG_TRANSFER_SYNTAX[1] and group == TAG_TRANSFER_SYNTAX[0]:
            transfer_syntax = data[body_start : body_start + length].rstrip(b"\x00").decode(
                "ascii", "replace"
            )
        offset = body_start + length

    if transfer_syntax != TRANSFER_SYNTAX_EVR_LE:
        raise UnsupportedTransferSyntaxError(
            f"transfer syntax {transfer_syntax!r} is not explicit-VR little-endian"
        )

    parsed = _ParsedDicom()
    found_payload = False
    for tag, _vr, value in _read_elements(data, offset, stop_after_group=0x0042):
        if tag == TAG_SOP_INSTANCE:
            parsed.sop_instance_uid = value.rstrip(b"\x00").decode("ascii", "replace")
        elif tag == TAG_STUDY_DATE:
            text = value.decode("ascii", "replace").strip()
            parsed.study_date = text or None
        elif tag == TAG_DOCUMENT_TITLE:
            parsed.document_title = value.decode("utf-8", "replace").rstrip(" \x00")
        elif tag == TAG_ENCAPSULATED_DOC:
            parsed.payload = value
            found_payload = True
        elif tag == TAG_ENCAPSULATED_DOC_LEN and len(value) == 4:
            parsed.declared_len = struct.unpack("<I", value)[0]
        if found_payload and tag >= TAG_ENCAPSULATED_DOC_LEN:
            break
    return parsed


def _iso_date(dicom_date: Optional[str]) -> Optional[str]:
    if dicom_date and len(dicom_date) == 8 and dicom_date.isdigit():
        return f"{dicom_date[:4]}-{dicom_date[4:6]}-{dicom_date[6:]}"
    return dicom_date


def parse_dicom_file(path: Path) -> tuple[DicomReportRef, bytes]:
    data = path.read_bytes()
    parsed = parse_dicom_bytes(data)
    pdf = parsed.pdf_bytes()
    ref = DicomReportRef(
        source_path=path,
        sop_instance_uid=parsed.sop_instance_uid,
        document_title=parsed.document_title,
        report_kind=classify_title(parsed.document_title),
        study_date=_iso_date(parsed.study_date),
        pdf_bytes_len=len(pdf),
    )
    return ref, pdf


def scan_dicom_dir(root: str | Path, workers: int = 1) -> ScanResult:
    """Find every encapsulated-document DICOM under a directory tree.

    Records are sorted by source path for determinism; unreadable or
    out-of-scope files become skip entries, and visited = records + skips.
    """
    root = Path(root)
    if not root.is_dir():
        raise DicomError(f"scan root is not a readable directory: {root}")
    paths = sorted(p for p in root.rglob("*") if p.is_file())

    def probe(path: Path):
        try:
            ref, _pdf = parse_dicom_file(path)
            return ref
        except NotDicomError:
            return SkipEntry(path, "no_dicm_marker")
        except UnsupportedTransferSyntaxError:
            return SkipEntry(path, "unsupported_transfer_syntax")
        except UndefinedLengthError:
            return SkipEntry(path, "undefined_length_element")
        except NotEncapsulatedError:
            return SkipEntry(path, "no_encapsulated_document")
        except (DicomError, OSError) as e:
            return SkipEntry(path, f"unreadable: {e}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(probe, paths))
    else:
        outcomes = [probe(p) for p in paths]

    records = [o for o in outcomes if isinstance(o, DicomReportRef)]
    skips = [o for o in outcomes if isinstance(o, SkipEntry)]
    records.sort(key=lambda r: str(r.source_path))
    skips.sort(key=lambda s: str(s.source_path))
    return ScanResult(records, skips)


def extract_pdf(ref: DicomReportRef) -> bytes:
    """Return the exact encapsulated PDF bytes for a scanned record."""
    if ref.source_path is None:
        raise DicomError("record has no source path")
    parsed = parse_dicom_bytes(Path(ref.source_path).read_bytes())
    pdf = parsed.pdf_bytes()
    if not pdf.startswith(PDF_MAGIC):
        raise WrongPayloadError(
            f"encapsulated document does not start with %PDF in {ref.source_path}"
        )
    return pdf


def write_harvest(scan: ScanResult, out_dir: str | Path) -> Path:
    """Write harvested PDFs plus the JSONL manifest; returns manifest path.

    Reports whose payload is not a PDF move to the skip report. Only the
    RNFL/Ganglion-Cell pipeline metadata is persisted, never PHI.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.jsonl"
    skips = list(scan.skips)

    lines = []
    for ref in scan.records:
        try:
            pdf = extract_pdf(ref)
        except WrongPayloadError:
            skips.append(SkipEntry(ref.source_path, "payload_not_pdf"))
            continue
        name = ref.sop_instance_uid or hashlib.sha256(pdf).hexdigest()[:24]
        (out_dir / f"{name}.pdf").write_bytes(pdf)
        lines.append(
            json.dumps(
                {
                    "source_path": str(ref.source_path),
                    "sop_instance_uid": ref.sop_instance_uid,
                    "document_title": ref.document_title,
                    "report_kind": ref.report_kind.value,
                    "study_date": ref.study_date,
                    "pdf_sha256": hashlib.sha256(pdf).hexdigest(),
                },
                sort_keys=True,
            )
        )
    manifest_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    skip_path = out_dir / "skipped.jsonl"
    skip_lines = [
        json.dumps({"source_path": str(s.source_path), "reason": s.reason}, sort_keys=True)
        for s in sorted(skips, key=lambda s: str(s.source_path))
    ]
    skip_path.write_text("\n".join(skip_lines) + ("\n" if skip_lines else ""), encoding="utf-8")
    return manifest_path
