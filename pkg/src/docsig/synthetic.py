"""Seeded generator of document-like page images with class-specific layouts."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidParameter
from .store import DatasetManifest, ManifestItem, write_manifest

TEMPLATES = ("one_column", "two_column", "table", "drawing", "margin_note")
PAGE_SIZE = (300, 400)  # width, height
SALT_RATE = 0.002


@dataclass(frozen=True)
class ClassTemplate:
    name: str
    layout: str
    pitch: float  # text line pitch (or cell size for tables / drawings) in pixels


def default_classes(n_classes: int) -> list[ClassTemplate]:
    """Cycle through the layouts; repeated layouts get a coarser pitch."""
    if n_classes < 2:
        raise InvalidParameter(f"at least two classes required, got {n_classes}")
    base = {"one_column": 14.0, "two_column": 8.0, "table": 28.0, "drawing": 16.0, "margin_note": 20.0}
    out = []
    for k in range(n_classes):
        layout = TEMPLATES[k % len(TEMPLATES)]
        out.append(ClassTemplate(f"{layout}_{k}", layout, base[layout] * (1.0 + 0.6 * (k // len(TEMPLATES)))))
    return out


def _text_block(page, rng, x0, x1, y0, y1, pitch):
    """Lines of 'words': dark bars with gaps, ragged right edge."""
    thickness = max(2, int(round(pitch * 0.45)))
    y = y0 + rng.uniform(0, pitch * 0.5)
    while y + thickness < y1:
        x = x0
        end = x1 - rng.integers(0, max(1, (x1 - x0) // 4))
        while x < end:
            w = int(rng.integers(6, 30))
            page[int(y):int(y) + thickness, x:min(x + w, end)] = 0
            x += w + int(rng.integers(3, 7))
        y += pitch * rng.uniform(0.9, 1.1)


def _render(template: ClassTemplate, rng: np.random.Generator, size) -> np.ndarray:
    w, h = size
    page = np.full((h, w), 255, dtype=np.uint8)
    pitch = template.pitch * rng.uniform(0.85, 1.15)
    m = int(rng.integers(12, 28))
    if template.layout == "one_column":
        _text_block(page, rng, m, w - m, m, h - m, pitch)
    elif template.layout == "two_column":
        gutter = int(rng.integers(14, 24))
        mid = w // 2
        _text_block(page, rng, m, mid - gutter // 2, m, h - m, pitch)
        _text_block(page, rng, mid + gutter // 2, w - m, m, h - m, pitch)
    elif template.layout == "table":
        top = m + int(rng.integers(0, 30))
        xs = np.arange(m, w - m + 1, pitch * rng.uniform(1.6, 2.2)).astype(int)
        ys = np.arange(top, h - m + 1, pitch * 0.7).astype(int)
        for x in xs:
            page[ys[0]:ys[-1] + 1, x:x + 2] = 0
        for y in ys:
            page[y:y + 2, xs[0]:xs[-1] + 2] = 0
        for y_a, y_b in zip(ys[:-1], ys[1:]):
            for x_a, x_b in zip(xs[:-1], xs[1:]):
                if rng.random() < 0.6:
                    cy = (y_a + y_b) // 2 - 1
                    page[cy:cy + 3, x_a + 4:x_a + 4 + int(rng.integers(4, max(5, x_b - x_a - 6)))] = 0
    elif template.layout == "drawing":
        cell = max(4, int(round(pitch)))
        x0, y0 = m + int(rng.integers(0, 20)), m + int(rng.integers(0, 40))
        x1, y1 = w - m - int(rng.integers(0, 20)), h - m - int(rng.integers(0, 40))
        yy, xx = np.mgrid[y0:y1, x0:x1]
        page[y0:y1, x0:x1] = np.where(((yy - y0) // cell + (xx - x0) // cell) % 2 == 0, 0, 255)
        page[y0:y0 + 3, x0:x1] = 0
        page[y1 - 3:y1, x0:x1] = 0
    elif template.layout == "margin_note":
        left = int(w * rng.uniform(0.3, 0.4))
        _text_block(page, rng, left, w - m, m, h - m, pitch)
        _text_block(page, rng, m, left - 12, m + int(rng.integers(0, 60)), h // 3, pitch * 0.7)
    else:
        raise InvalidParameter(f"unknown layout {template.layout!r}")
    salt = rng.random((h, w)) < SALT_RATE
    page[salt] = 255 - page[salt]
    return page


def gen_synthetic(classes, count: int, seed: int, out_dir, size=PAGE_SIZE) -> DatasetManifest:
    """Write ``count`` PNG pages per class plus ``manifest.jsonl`` into ``out_dir``.

    ``classes`` is a class count or a list of :class:`ClassTemplate`.  Output
    bytes depend only on the arguments.
    """
    templates = default_classes(classes) if isinstance(classes, int) else list(classes)
    if len(templates) < 2:
        raise InvalidParameter("at least two classes required")
    if count < 1:
        raise InvalidParameter(f"count must be >= 1, got {count}")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    items = []
    for c, tpl in enumerate(templates):
        for i in range(count):
            rng = np.random.default_rng([seed, c, i])
            page = _render(tpl, rng, size)
            rel = f"images/{tpl.name}_{i:04d}.png"
            Image.fromarray(page, mode="L").save(out / rel, format="PNG", optimize=False)
            items.append(ManifestItem(f"{tpl.name}_{i:04d}", rel, tpl.name))
    manifest = DatasetManifest(items, tuple(t.name for t in templates), out)
    write_manifest(manifest, out / "manifest.jsonl")
    return manifest
