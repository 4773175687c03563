"""Reference meter images and the result record shared by all detectors."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import DescriptorSet, extract
from .imgcore import Region, as_gray, read_png, write_png

TEMPLATE_SCHEMA = "gauge-scout-template/1"


@dataclass
class MeterTemplate:
    image: np.ndarray
    nominal_diameter: float
    shape: str = "circle"
    features: DescriptorSet | None = None
    digest: str = ""

    def __post_init__(self):
        self.image = as_gray(self.image)
        digest = hashlib.sha1(self.image.tobytes() + str(self.image.shape).encode()).hexdigest()
        if self.features is None or self.digest != digest:
            self.features = extract(self.image)
            self.digest = digest

    @property
    def meter_box(self) -> Region:
        """The meter's own bounds inside the template image (the image is centred on it)."""
        h, w = self.image.shape
        mw = self.nominal_diameter
        mh = mw * (0.72 if self.shape == "rect" else 1.0)
        return Region((w - 1) / 2 - mw / 2, (h - 1) / 2 - mh / 2, mw, mh)

    def save(self, png_path) -> None:
        png_path = Path(png_path)
        write_png(png_path, self.image)
        png_path.with_suffix(".json").write_text(json.dumps(
            {"schema": TEMPLATE_SCHEMA, "nominal_diameter": self.nominal_diameter, "shape": self.shape}, indent=2))

    @classmethod
    def load(cls, png_path) -> "MeterTemplate":
        png_path = Path(png_path)
        meta = json.loads(png_path.with_suffix(".json").read_text())
        return cls(read_png(png_path), float(meta["nominal_diameter"]), meta.get("shape", "circle"))


def make_template(meter, nominal_diameter: float = 200.0, reading: float = 0.0) -> MeterTemplate:
    """Reference image of a placed meter's design, photographed at rest (needle at ``reading``)."""
    from .scene import render_meter_patch

    img = render_meter_patch(meter, nominal_diameter, needle_frac=reading)
    return MeterTemplate(img, nominal_diameter, meter.shape)


@dataclass
class DetectionResult:
    found: bool
    method: str
    region: Region | None = None
    confidence: float = 0.0
    reason: str | None = None
    ptz: object = None                  # head state of the view the region refers to
    trace: list = field(default_factory=list)
    elapsed_ms: float = 0.0

    def __post_init__(self):
        if self.found and self.region is None:
            raise ValueError("a found result needs a region")
        self.confidence = float(min(max(self.confidence, 0.0), 1.0))
