"""Ground-truthed synthetic token streams with calibrated OCR noise.

Generates report token streams laid out per a template, the gold values
behind them, and a ledger of every injected error so detector recall is
measurable. Errors compose in a fixed order (swap, shift, flip, misread,
drop) and touch each token at most once, keeping ledger entries in
one-to-one correspondence with stream corruptions. Generation is a pure
function of (profile, kind, n): identical seeds give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from octex.fields import (
    Eye,
    FieldId,
    ReportKind,
    ValueKind,
    format_value,
)
from octex.geometry import CLOCK_LABELS, QUADRANT_LABELS, SECTOR_LABELS
from octex.layout import GeometryKind, LayoutTemplate, Region, load_default_template
from octex.qc import hflip, vflip
from octex.scoring import GoldRecord
from octex.tokens import OcrToken, TokenStream

# Noise probabilities live in the profile; the jitter default documented
# for stress runs is 0.3 x slot spacing, but the identity profile keeps
# it at zero so a noiseless run reproduces gold exactly.
DEFAULT_JITTER_SIGMA_FRAC = 0.3

# Positional jitter is clipped at this many sigmas so a displaced value
# can drift out of its wedge window (NotDetected) but can never reach a
# neighboring wedge's window (which would be a silent wrong-slot read).
JITTER_CLIP_SIGMA = 1.7

CLEAN_CONF_FLOOR = 0.93

_LABEL_TEXT = {
    "rnfl.signal_strength": "Signal Strength:",
    "rnfl.avg_thickness": "Average RNFL Thickness",
    "rnfl.symmetry": "RNFL Symmetry",
    "rnfl.rim_area": "Rim Area",
    "rnfl.disc_area": "Disc Area",
    "rnfl.avg_cd_ratio": "Average C/D Ratio",
    "rnfl.vert_cd_ratio": "Vertical C/D Ratio",
    "rnfl.cup_volume": "Cup Volume",
    "gcc.signal_strength": "Signal Strength:",
    "gcc.avg_gclipl": "Average GCL + IPL Thickness",
    "gcc.min_gclipl": "Minimum GCL + IPL Thickness",
}


class ProfileError(ValueError):
    """Noise profile violates its invariants."""


@dataclass(frozen=True)
class NoiseProfile:
    """Error injection rates; all probabilities in [0,1]."""

    p_misread: float = 0.0
    p_odos_swap: float = 0.0
    p_seq_shift: float = 0.0
    p_hflip: float = 0.0
    p_vflip: float = 0.0
    p_drop: float = 0.0
    conf_noise_mean: float = 0.0
    conf_noise_sigma: float = 0.0
    jitter_sigma_frac: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p_misread", "p_odos_swap", "p_seq_shift", "p_hflip", "p_vflip", "p_drop"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ProfileError(f"{name}={p} outside [0,1]")
        if self.jitter_sigma_frac < 0 or self.conf_noise_sigma < 0 or self.conf_noise_mean < 0:
            raise ProfileError("noise magnitudes must be non-negative")

    @classmethod
    def from_json(cls, data: bytes | str) -> "NoiseProfile":
        doc = json.loads(data)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ProfileError(f"unknown profile keys: {', '.join(sorted(unknown))}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path: str | Path) -> "NoiseProfile":
        return cls.from_json(Path(path).read_bytes())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1) + "\n"


@dataclass(frozen=True)
class LedgerEntry:
    """One injected error event."""

    report_id: str
    error_kind: str
    fields: tuple[FieldId, ...]
    before: str
    after: str


LEDGER_CSV_HEADER = ["report_id", "error_kind", "fields", "before", "after"]


def ledger_to_csv(entries: list[LedgerEntry]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LEDGER_CSV_HEADER)
    for e in entries:
        writer.writerow(
            [e.report_id, e.error_kind, ";".join(f.key() for f in e.fields), e.before, e.after]
        )
    return buf.getvalue()


@dataclass
class _Draft:
    """Mutable token under construction."""

    id: int
    text: str
    conf: float
    x: float
    y: float
    w: float
    h: float
    crop_id: str
    field: Optional[FieldId] = None
    role: str = "label"  # label | value | unit | aux
    dropped: bool = False

    def to_token(self) -> OcrToken:
        x0 = max(0.0, self.x - self.w / 2)
        y0 = max(0.0, self.y - self.h / 2)
        x1 = min(1.0, self.x + self.w / 2)
        y1 = min(1.0, self.y + self.h / 2)
        return OcrToken(self.id, self.text, self.conf, (x0, y0, x1, y1), self.crop_id)


def _token_width(text: str) -> float:
    return 0.01 + 0.0085 * len(text)


# --- value sampling ----------------------------------------------------------

def _sample_field(name: str, kind: ValueKind, rng: np.random.Generator) -> tuple[str, str]:
    """Draw a plausible value; returns (gold_raw, token_text)."""
    if kind is ValueKind.SIGNAL:
        v = int(rng.integers(5, 11))
        return str(v), f"{v}/10"
    if kind is ValueKind.THICKNESS_UM:
        if name == "rnfl.avg_thickness":
            v = int(rng.integers(0, 301))
        else:
            v = int(rng.integers(40, 201))
        return str(v), str(v)
    if kind is ValueKind.GCLIPL_UM:
        v = int(rng.integers(40, 201)) if ".sector." in name else int(rng.integers(0, 251))
        return str(v), str(v)
    if kind is ValueKind.PERCENT:
        v = int(rng.integers(0, 101))
        return str(v), f"{v}%"
    if kind is ValueKind.RATIO:
        v = int(rng.integers(0, 101)) / 100.0
        s = format_value(kind, v)
        return s, s
    if kind is ValueKind.AREA_MM2:
        lo, hi = (0.2, 6.0) if name == "rnfl.disc_area" else (0.0, 5.0)
        v = round(float(rng.uniform(lo, hi)), 2)
        s = format_value(kind, v)
        return s, s
    if kind is ValueKind.VOLUME_MM3:
        v = round(float(rng.uniform(0.0, 2.0)), 2)
        s = format_value(kind, v)
        return s, s
    raise ValueError(f"unhandled value kind {kind}")


def _clean_conf(rng: np.random.Generator) -> float:
    return round(CLEAN_CONF_FLOOR + (1.0 - CLEAN_CONF_FLOOR) * float(rng.random()), 4)


# --- layout ------------------------------------------------------------------

def _grid_slot_position(
    region: Region, index: int, n: int
) -> tuple[float, float]:
    spec = region.grid
    cx, cy = spec.center
    theta = math.radians(360.0 / n * index)
    sx = math.sin(theta) * (-1.0 if spec.mirror else 1.0)
    return (cx + spec.radius * sx, cy - spec.radius * math.cos(theta))


def _grid_slot_spacing(region: Region, n: int) -> float:
    return 2.0 * region.grid.radius * math.sin(math.pi / n)


class _ReportBuilder:
    def __init__(
        self,
        kind: ReportKind,
        template: LayoutTemplate,
        report_id: str,
        profile: NoiseProfile,
        rng: np.random.Generator,
    ):
        self.kind = kind
        self.template = template
        self.report_id = report_id
        self.profile = profile
        self.rng = rng
        self.drafts: list[_Draft] = []
        self.gold: dict[FieldId, str] = {}
        self.value_drafts: dict[FieldId, _Draft] = {}
        self.clock_regions: list[Region] = []
        self.pair_rows: list[tuple[FieldId, FieldId]] = []  # (OD, OS) per table row
        self.touched: set[int] = set()
        self.shifted_crops: set[str] = set()
        self.ledger: list[LedgerEntry] = []
        self._next_id = 0

    def _emit(self, **kwargs) -> _Draft:
        draft = _Draft(id=self._next_id, **kwargs)
        self._next_id += 1
        self.drafts.append(draft)
        return draft

    # layout ------------------------------------------------------------

    def build(self) -> None:
        for region in sorted(self.template.regions, key=lambda r: r.name):
            if region.geometry_kind is GeometryKind.LABEL_VALUE:
                if region.expected_fields:
                    self._build_table(region)
                elif self.kind is ReportKind.GCC:
                    self._build_fovea(region)
            elif region.geometry_kind is GeometryKind.CLOCK_GRID:
                self._build_grid(region, CLOCK_LABELS, "rnfl.clock.{}")
                self.clock_regions.append(region)
            elif region.geometry_kind is GeometryKind.SECTOR_GRID:
                sample = region.expected_fields[0].name
                if ".quadrant." in sample:
                    self._build_grid(region, QUADRANT_LABELS, "rnfl.quadrant.{}")
                else:
                    self._build_grid(region, SECTOR_LABELS, "gcc.sector.{}")

    def _build_table(self, region: Region) -> None:
        names: list[str] = []
        for fid in region.expected_fields:
            if fid.name not in names:
                names.append(fid.name)
        k = len(names)
        rx0, _, rx1, _ = region.rect
        rw = rx1 - rx0
        od_x = (0.44 - rx0) / rw
        os_x = (0.56 - rx0) / rw
        for i, name in enumerate(names):
            yc = (i + 0.5) / k
            h = 0.55 / k
            cursor = 0.02
            for word in _LABEL_TEXT[name].split():
                w = _token_width(word)
                self._emit(
                    text=word, conf=_clean_conf(self.rng), x=cursor + w / 2, y=yc,
                    w=w, h=h, crop_id=region.name, role="label",
                )
                cursor += w + 0.008
            kind = FieldId(name, Eye.OD).value_kind
            od_fid, os_fid = FieldId(name, Eye.OD), FieldId(name, Eye.OS)
            self.pair_rows.append((od_fid, os_fid))
            for fid, xc in ((od_fid, od_x), (os_fid, os_x)):
                gold_raw, text = _sample_field(name, kind, self.rng)
                self.gold[fid] = gold_raw
                draft = self._emit(
                    text=text, conf=_clean_conf(self.rng), x=xc, y=yc,
                    w=_token_width(text), h=h, crop_id=region.name,
                    field=fid, role="value",
                )
                self.value_drafts[fid] = draft
                if kind in (ValueKind.THICKNESS_UM, ValueKind.GCLIPL_UM):
                    uw = _token_width("µm")
                    self._emit(
                        text="µm", conf=_clean_conf(self.rng),
                        x=xc + draft.w / 2 + uw / 2 + 0.012, y=yc,
                        w=uw, h=h, crop_id=region.name, role="unit",
                    )

    def _build_grid(self, region: Region, labels: tuple[str, ...], name_fmt: str) -> None:
        n = len(labels)
        eye = region.expected_fields[0].eye
        sigma = self.profile.jitter_sigma_frac * _grid_slot_spacing(region, n)
        order = range(1, n + 1) if n == 12 else range(n)  # clock emits hours 1..12
        for step in order:
            index = step % n
            label = labels[index]
            name = name_fmt.format(label)
            fid = FieldId(name, eye)
            gold_raw, text = _sample_field(name, fid.value_kind, self.rng)
            self.gold[fid] = gold_raw
            x, y = _grid_slot_position(region, index, n)
            jitter = self.rng.normal(0.0, 1.0, 2)
            norm = float(np.hypot(jitter[0], jitter[1]))
            if norm > JITTER_CLIP_SIGMA:
                jitter *= JITTER_CLIP_SIGMA / norm
            x += float(jitter[0]) * sigma
            y += float(jitter[1]) * sigma
            draft = self._emit(
                text=text, conf=_clean_conf(self.rng), x=x, y=y,
                w=_token_width(text), h=0.08, crop_id=region.name,
                field=fid, role="value",
            )
            self.value_drafts[fid] = draft

    def _build_fovea(self, region: Region) -> None:
        fx = int(self.rng.integers(80, 121))
        fy = int(self.rng.integers(80, 121))
        text = f"Fovea: {fx}, {fy}"
        self._emit(
            text=text, conf=_clean_conf(self.rng), x=0.5, y=0.5,
            w=_token_width(text), h=0.5, crop_id=region.name, role="aux",
        )

    # noise -------------------------------------------------------------

    def corrupt(self) -> None:
        self._inject_swaps()
        self._inject_shifts()
        self._inject_flips("hflip", self.profile.p_hflip, hflip)
        self._inject_flips("vflip", self.profile.p_vflip, vflip)
        self._inject_misreads()
        self._inject_drops()

    def _degrade_conf(self, draft: _Draft) -> None:
        p = self.profile
        if p.conf_noise_mean == 0 and p.conf_noise_sigma == 0:
            return
        loss = abs(float(self.rng.normal(p.conf_noise_mean, p.conf_noise_sigma)))
        draft.conf = round(max(0.05, draft.conf - loss), 4)

    def _inject_swaps(self) -> None:
        for od_fid, os_fid in self.pair_rows:
            hit = float(self.rng.random()) < self.profile.p_odos_swap
            od, os_ = self.value_drafts.get(od_fid), self.value_drafts.get(os_fid)
            if not hit or od is None or os_ is None or od.text == os_.text:
                continue
            od.id, os_.id = os_.id, od.id
            self.touched.update((od.id, os_.id))
            self.ledger.append(
                LedgerEntry(
                    self.report_id, "odos_swap", (od_fid, os_fid),
                    f"{od.text}|{os_.text}", f"{os_.text}|{od.text}",
                )
            )

    def _inject_shifts(self) -> None:
        for region in self.clock_regions:
            hit = float(self.rng.random()) < self.profile.p_seq_shift
            k = int(self.rng.integers(1, 13))
            if not hit:
                continue
            eye = region.expected_fields[0].eye
            fid = FieldId(f"rnfl.clock.{k}", eye)
            draft = self.value_drafts.get(fid)
            if draft is None:
                continue
            k_next = 1 if k == 12 else k + 1
            index = k_next % 12
            draft.x, draft.y = _grid_slot_position(region, index, 12)
            self.shifted_crops.add(region.name)
            self.ledger.append(
                LedgerEntry(
                    self.report_id, "seq_shift",
                    (fid, FieldId(f"rnfl.clock.{k_next}", eye)),
                    f"hour {k}", f"hour {k_next}",
                )
            )

    def _eligible_values(self) -> list[_Draft]:
        return [
            d
            for d in self.drafts
            if d.role == "value"
            and not d.dropped
            and d.id not in self.touched
            and d.crop_id not in self.shifted_crops
        ]

    def _inject_flips(self, kind: str, p: float, flip: Callable[[str], Optional[str]]) -> None:
        for draft in self._eligible_values():
            hit = float(self.rng.random()) < p
            if not hit or not draft.text.isdigit():
                continue
            flipped = flip(draft.text)
            if flipped is None or flipped == draft.text:
                continue
            before = draft.text
            draft.text = flipped
            self._degrade_conf(draft)
            self.touched.add(draft.id)
            self.ledger.append(
                LedgerEntry(self.report_id, kind, (draft.field,), before, flipped)
            )

    def _inject_misreads(self) -> None:
        for draft in self._eligible_values():
            hit = float(self.rng.random()) < self.profile.p_misread
            if not hit:
                continue
            fid = draft.field
            before = draft.text
            for _ in range(32):
                _, text = _sample_field(fid.name, fid.value_kind, self.rng)
                if text != before:
                    break
            else:
                continue
            draft.text = text
            draft.w = _token_width(text)
            self._degrade_conf(draft)
            self.touched.add(draft.id)
            self.ledger.append(
                LedgerEntry(self.report_id, "misread", (fid,), before, text)
            )

    def _inject_drops(self) -> None:
        for draft in self._eligible_values():
            hit = float(self.rng.random()) < self.profile.p_drop
            if not hit:
                continue
            draft.dropped = True
            self.touched.add(draft.id)
            self.ledger.append(
                LedgerEntry(self.report_id, "drop", (draft.field,), draft.text, "")
            )

    # output ------------------------------------------------------------

    def stream(self) -> TokenStream:
        tokens = [d.to_token() for d in self.drafts if not d.dropped]
        tokens.sort(key=lambda t: t.id)
        return TokenStream(
            report_id=self.report_id,
            report_kind=self.kind,
            tokens=tokens,
            backend_name="synth",
        )

    def gold_records(self) -> list[GoldRecord]:
        return [
            GoldRecord(self.report_id, fid, self.gold[fid])
            for fid in sorted(self.gold, key=lambda f: (f.name, f.eye.value))
        ]


def gen_reports(
    kind: ReportKind,
    n: int,
    profile: NoiseProfile,
    template: LayoutTemplate | None = None,
) -> tuple[list[TokenStream], list[GoldRecord], list[LedgerEntry]]:
    """Generate n synthetic reports: streams, gold truth, and error ledger."""
    if n < 1:
        raise ValueError("n must be >= 1")
    template = template or load_default_template(kind)
    streams: list[TokenStream] = []
    gold: list[GoldRecord] = []
    ledger: list[LedgerEntry] = []
    for i in range(n):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=profile.seed, spawn_key=(i,))
        )
        builder = _ReportBuilder(kind, template, f"{kind.value}-{i:05d}", profile, rng)
        builder.build()
        builder.corrupt()
        streams.append(builder.stream())
        gold.extend(builder.gold_records())
        ledger.extend(builder.ledger)
    return streams, gold, ledger
