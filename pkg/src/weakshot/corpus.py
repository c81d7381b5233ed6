"""Deterministic synthetic shapes corpus.

The corpus plays two roles: a fully-annotated *source* set of base categories
(boxes + labels) and a weakly-annotated *target* set of novel categories
(image-level labels only). Target training records carry no box field at all,
so novel boxes are unreachable from the training interface; the target test
split keeps its boxes for evaluation only.

Every image derives its randomness from ``(seed, split, index)`` alone, so
generation is reproducible image-by-image and two runs with the same config
are bit-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .config import CorpusConfig
from .geometry import BoundingBox, iou_matrix

SCHEMA_VERSION = 1

# Supersampling factor for antialiased shape rasterization.
_SS = 4

_COLORS = {
    "red": (0.88, 0.12, 0.12),
    "green": (0.12, 0.78, 0.16),
    "blue": (0.16, 0.28, 0.90),
    "yellow": (0.92, 0.86, 0.12),
    "magenta": (0.86, 0.12, 0.80),
    "cyan": (0.10, 0.80, 0.82),
    "orange": (0.95, 0.55, 0.10),
    "purple": (0.55, 0.16, 0.86),
    "teal": (0.10, 0.52, 0.46),
    "pink": (0.95, 0.55, 0.72),
    "gray": (0.55, 0.55, 0.55),
    # Distractor palette, deliberately outside every category color.
    "brown": (0.46, 0.32, 0.18),
    "slate": (0.38, 0.42, 0.50),
    "offwhite": (0.82, 0.84, 0.80),
}


class CorpusError(ValueError):
    """Raised on invalid corpus files or impossible generation requests."""


class GenerationError(CorpusError):
    def __init__(self, image_id: str, message: str):
        super().__init__(f"{image_id}: {message}")
        self.image_id = image_id


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    split: str  # "base" | "novel"


@dataclass
class BoxImage:
    """Fully-annotated record: every object has a box and a category label."""

    image_id: str
    pixels: np.ndarray  # H x W x 3 float32 in [0, 1], quantized to 1/255 steps
    boxes: list  # list of (BoundingBox, category_id)
    image_labels: frozenset


@dataclass
class WeakImage:
    """Weakly-annotated record: image-level category labels only, no box field."""

    image_id: str
    pixels: np.ndarray
    image_labels: frozenset


@dataclass
class Corpus:
    categories: list
    source_train: list = field(default_factory=list)  # BoxImage
    source_val: list = field(default_factory=list)  # BoxImage
    target_train: list = field(default_factory=list)  # WeakImage
    target_test: list = field(default_factory=list)  # BoxImage

    @property
    def base_ids(self) -> list:
        return [c.id for c in self.categories if c.split == "base"]

    @property
    def novel_ids(self) -> list:
        return [c.id for c in self.categories if c.split == "novel"]

    def category_by_id(self, cid: int) -> Category:
        for c in self.categories:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def split(self, name: str) -> list:
        return {
            "source-train": self.source_train,
            "source-val": self.source_val,
            "target-train": self.target_train,
            "target-test": self.target_test,
        }[name]


# --------------------------------------------------------------------------
# Shape rasterization


def _grid(size_ss: int):
    # Pixel-center coordinates of the supersampled canvas, in final-image units.
    coords = (np.arange(size_ss) + 0.5) / _SS
    return np.meshgrid(coords, coords, indexing="xy")


def _shape_mask(shape: str, cx, cy, a, b, xs, ys) -> np.ndarray:
    """Boolean mask of the shape with half-extents (a, b) centered at (cx, cy)."""
    u = xs - cx
    v = ys - cy
    if shape == "circle":
        return (u / a) ** 2 + (v / a) ** 2 <= 1.0
    if shape == "ellipse":
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    if shape == "square":
        return (np.abs(u) <= a) & (np.abs(v) <= a)
    if shape == "bar":
        return (np.abs(u) <= a) & (np.abs(v) <= b)
    if shape == "triangle":
        # Upward triangle: apex at (cx, cy-b), base at cy+b.
        t = (v + b) / (2 * b)
        return (v >= -b) & (v <= b) & (np.abs(u) <= a * np.clip(t, 0, 1))
    if shape == "diamond":
        return np.abs(u) / a + np.abs(v) / b <= 1.0
    if shape == "cross":
        return ((np.abs(u) <= a / 3) & (np.abs(v) <= b)) | (
            (np.abs(v) <= b / 3) & (np.abs(u) <= a)
        )
    if shape == "ring":
        r2 = (u / a) ** 2 + (v / a) ** 2
        return (r2 <= 1.0) & (r2 >= 0.55**2)
    if shape == "pentagon":
        # Regular pentagon, apex up; interior = same side of all five edges.
        ang = -np.pi / 2 + 2 * np.pi * np.arange(5) / 5
        px, py = a * np.cos(ang), a * np.sin(ang)
        pos = np.ones_like(u, dtype=bool)
        neg = np.ones_like(u, dtype=bool)
        for i in range(5):
            j = (i + 1) % 5
            cross = (px[j] - px[i]) * (v - py[i]) - (py[j] - py[i]) * (u - px[i])
            pos &= cross >= 0
            neg &= cross <= 0
        return pos | neg
    if shape == "hexstar":
        up = (v >= -b) & (v <= b) & (np.abs(u) <= a * np.clip((v + b) / (2 * b), 0, 1))
        down = (v >= -b) & (v <= b) & (np.abs(u) <= a * np.clip((b - v) / (2 * b), 0, 1))
        return up | down
    if shape == "hblock":
        side = (np.abs(u) >= 0.55 * a) & (np.abs(u) <= a) & (np.abs(v) <= b)
        mid = (np.abs(v) <= 0.30 * b) & (np.abs(u) <= a)
        return side | mid
    raise ValueError(f"unknown shape {shape!r}")


# Category recipes: name -> (shape, color, aspect). Aspect is the b/a ratio
# used for anisotropic shapes.
_RECIPES = {
    "circle_red": ("circle", "red", 1.0),
    "square_green": ("square", "green", 1.0),
    "triangle_blue": ("triangle", "blue", 1.0),
    "ellipse_yellow": ("ellipse", "yellow", 0.6),
    "bar_magenta": ("bar", "magenta", 0.42),
    "diamond_cyan": ("diamond", "cyan", 1.0),
    "cross_orange": ("cross", "orange", 1.0),
    "ring_purple": ("ring", "purple", 1.0),
    "pentagon_teal": ("pentagon", "teal", 1.0),
    "star_pink": ("hexstar", "pink", 1.0),
    "circle_green": ("circle", "green", 1.0),
    "ellipse_green": ("ellipse", "green", 0.6),
    "square_blue": ("square", "blue", 1.0),
    "diamond_blue": ("diamond", "blue", 1.0),
    "hblock_gray": ("hblock", "gray", 1.0),
}

_DISTRACTORS = [
    ("ellipse", "brown", 0.7),
    ("bar", "slate", 0.35),
    ("circle", "offwhite", 1.0),
]


def _draw_object(canvas_ss, xs, ys, shape, color, cx, cy, a, b, rng) -> BoundingBox:
    mask = _shape_mask(shape, cx, cy, a, b, xs, ys)
    if not mask.any():
        raise ValueError("degenerate object raster")
    brightness = rng.uniform(0.78, 1.08)
    col = np.clip(np.asarray(_COLORS[color]) * brightness, 0.0, 1.0)
    canvas_ss[mask] = col
    rows = np.nonzero(mask.any(axis=1))[0]
    cols = np.nonzero(mask.any(axis=0))[0]
    return BoundingBox(
        cols[0] / _SS, rows[0] / _SS, (cols[-1] + 1) / _SS, (rows[-1] + 1) / _SS
    )


def _render_image(image_id, size, object_specs, distractor_specs, rng):
    """Render one image; returns (uint8 pixels, list of (BoundingBox, cat_id))."""
    size_ss = size * _SS
    xs, ys = _grid(size_ss)
    base_level = rng.uniform(0.06, 0.12)
    canvas = np.full((size_ss, size_ss, 3), base_level, dtype=np.float64)
    canvas += rng.normal(0.0, 0.015, size=(size_ss, size_ss, 1))

    placed = []  # (BoundingBox, cat_id or None)
    for spec in distractor_specs + object_specs:
        shape, color, aspect, cat_id = spec
        placed_box = None
        for _ in range(40):
            if cat_id is None:
                a = rng.uniform(2.5, 5.5)
            else:
                a = rng.uniform(7.0, 15.0)
            b = a * aspect
            margin_x, margin_y = a + 1.0, max(a, b) + 1.0
            if 2 * margin_x >= size or 2 * margin_y >= size:
                continue
            cx = rng.uniform(margin_x, size - margin_x)
            cy = rng.uniform(margin_y, size - margin_y)
            bb = np.array([[cx - a, cy - b, cx + a, cy + b]])
            if placed:
                others = np.stack([p[0].to_array() for p in placed])
                if iou_matrix(bb, others).max() > 0.25:
                    continue
            box = _draw_object(canvas, xs, ys, shape, color, cx, cy, a, b, rng)
            placed.append((box, cat_id))
            placed_box = box
            break
        if placed_box is None:
            raise GenerationError(image_id, "image too small to place requested objects")

    canvas += rng.normal(0.0, 0.01, size=canvas.shape)
    down = canvas.reshape(size, _SS, size, _SS, 3).mean(axis=(1, 3))
    pixels = np.clip(np.round(down * 255.0), 0, 255).astype(np.uint8)
    boxes = [(box, cid) for box, cid in placed if cid is not None]
    return pixels, boxes


def _pixels_to_float(pixels_u8: np.ndarray) -> np.ndarray:
    return (pixels_u8.astype(np.float32)) / 255.0


def _make_image(image_id, size, cat_pool, categories_by_id, cfg, rng, allow_base_extra):
    lo, hi = cfg.objects_per_image
    n_obj = int(rng.integers(lo, hi + 1))
    cat_ids = [int(rng.choice(cat_pool)) for _ in range(n_obj)]
    specs = []
    for cid in cat_ids:
        shape, color, aspect = _RECIPES[categories_by_id[cid].name]
        specs.append((shape, color, aspect, cid))
    if allow_base_extra and rng.uniform() < cfg.base_in_target_rate:
        extra = int(rng.choice(allow_base_extra))
        shape, color, aspect = _RECIPES[categories_by_id[extra].name]
        specs.append((shape, color, aspect, extra))
    distractors = []
    if rng.uniform() < cfg.distractor_rate:
        for _ in range(int(rng.integers(1, 3))):
            shape, color, aspect = _DISTRACTORS[int(rng.integers(0, len(_DISTRACTORS)))]
            distractors.append((shape, color, aspect, None))
    pixels_u8, boxes = _render_image(image_id, size, specs, distractors, rng)
    return pixels_u8, boxes


_SPLIT_CODES = {"source": 0, "target_train": 1, "target_test": 2}


def generate_corpus(cfg: CorpusConfig) -> Corpus:
    """Generate the full corpus deterministically from ``cfg``."""
    cfg.validate()
    for name in set(cfg.base_categories) | set(cfg.novel_categories):
        if name not in _RECIPES:
            raise CorpusError(f"no shape recipe for category {name!r}")

    categories = [Category(i, n, "base") for i, n in enumerate(cfg.base_categories)]
    offset = len(cfg.base_categories)
    categories += [Category(offset + i, n, "novel") for i, n in enumerate(cfg.novel_categories)]
    by_id = {c.id: c for c in categories}
    base_ids = [c.id for c in categories if c.split == "base"]
    novel_ids = [c.id for c in categories if c.split == "novel"]

    corpus = Corpus(categories=categories)

    n_val = int(round(cfg.n_source * cfg.source_val_fraction))
    for idx in range(cfg.n_source):
        image_id = f"source_{idx:05d}"
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _SPLIT_CODES["source"], idx]))
        pixels_u8, boxes = _make_image(image_id, cfg.image_size, base_ids, by_id, cfg, rng, None)
        rec = BoxImage(
            image_id,
            _pixels_to_float(pixels_u8),
            boxes,
            frozenset(cid for _, cid in boxes),
        )
        (corpus.source_val if idx >= cfg.n_source - n_val else corpus.source_train).append(rec)

    for idx in range(cfg.n_target):
        image_id = f"target_train_{idx:05d}"
        rng = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, _SPLIT_CODES["target_train"], idx])
        )
        pixels_u8, boxes = _make_image(
            image_id, cfg.image_size, novel_ids, by_id, cfg, rng, base_ids
        )
        labels = frozenset(cid for _, cid in boxes if cid in set(novel_ids))
        corpus.target_train.append(WeakImage(image_id, _pixels_to_float(pixels_u8), labels))

    for idx in range(cfg.n_test):
        image_id = f"target_test_{idx:05d}"
        rng = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, _SPLIT_CODES["target_test"], idx])
        )
        pixels_u8, boxes = _make_image(
            image_id, cfg.image_size, novel_ids, by_id, cfg, rng, base_ids
        )
        novel_boxes = [(b, cid) for b, cid in boxes if cid in set(novel_ids)]
        labels = frozenset(cid for _, cid in novel_boxes)
        corpus.target_test.append(
            BoxImage(image_id, _pixels_to_float(pixels_u8), novel_boxes, labels)
        )

    return corpus


# --------------------------------------------------------------------------
# Serialization


def _record_entry(rec, split_name, size):
    entry = {
        "image_id": rec.image_id,
        "file": f"images/{rec.image_id}.png",
        "width": size,
        "height": size,
        "split": split_name,
        "image_labels": sorted(rec.image_labels),
    }
    if isinstance(rec, BoxImage):
        entry["boxes"] = [
            {
                "x_min": box.x_min,
                "y_min": box.y_min,
                "x_max": box.x_max,
                "y_max": box.y_max,
                "category": cid,
            }
            for box, cid in rec.boxes
        ]
    return entry


def build_manifest(corpus: Corpus) -> dict:
    size = corpus_image_size(corpus)
    images = []
    for split_name, records in (
        ("source_train", corpus.source_train),
        ("source_val", corpus.source_val),
        ("target_train", corpus.target_train),
        ("target_test", corpus.target_test),
    ):
        images.extend(_record_entry(r, split_name, size) for r in records)
    return {
        "schema_version": SCHEMA_VERSION,
        "categories": [{"id": c.id, "name": c.name, "split": c.split} for c in corpus.categories],
        "images": images,
    }


def corpus_image_size(corpus: Corpus) -> int:
    for records in (corpus.source_train, corpus.source_val, corpus.target_train, corpus.target_test):
        if records:
            return records[0].pixels.shape[0]
    return 0


def _all_records(corpus: Corpus):
    yield from corpus.source_train
    yield from corpus.source_val
    yield from corpus.target_train
    yield from corpus.target_test


def corpus_hash(corpus: Corpus) -> str:
    """SHA-256 over the canonical manifest JSON plus raw pixel bytes."""
    h = hashlib.sha256()
    h.update(json.dumps(build_manifest(corpus), sort_keys=True).encode())
    for rec in _all_records(corpus):
        h.update(np.round(rec.pixels * 255.0).astype(np.uint8).tobytes())
    return h.hexdigest()


def save_corpus(corpus: Corpus, path) -> None:
    from pathlib import Path

    root = Path(path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    with open(root / "manifest.json", "w") as fh:
        json.dump(build_manifest(corpus), fh, indent=2, sort_keys=True)
    for rec in _all_records(corpus):
        u8 = np.round(rec.pixels * 255.0).astype(np.uint8)
        Image.fromarray(u8, mode="RGB").save(root / "images" / f"{rec.image_id}.png")


def load_corpus(path) -> Corpus:
    from pathlib import Path

    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise CorpusError(f"missing manifest: {manifest_path}")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"malformed manifest JSON in {manifest_path}: {exc}") from exc

    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise CorpusError(
            f"schema_version mismatch: expected {SCHEMA_VERSION}, "
            f"got {manifest.get('schema_version')!r}"
        )

    categories = [Category(c["id"], c["name"], c["split"]) for c in manifest["categories"]]
    ids = [c.id for c in categories]
    if len(set(ids)) != len(ids):
        raise CorpusError("duplicate category ids in manifest")
    base = {c.id for c in categories if c.split == "base"}
    novel = {c.id for c in categories if c.split == "novel"}
    if base & novel:
        raise CorpusError(f"categories in both splits: {sorted(base & novel)}")
    known = base | novel

    corpus = Corpus(categories=categories)
    for entry in manifest["images"]:
        image_id = entry["image_id"]
        img_path = root / entry["file"]
        if not img_path.exists():
            raise CorpusError(f"missing image file for {image_id}: {img_path}")
        try:
            with Image.open(img_path) as im:
                u8 = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except (OSError, SyntaxError) as exc:
            raise CorpusError(f"unreadable image file for {image_id}: {exc}") from exc
        if u8.shape[:2] != (entry["height"], entry["width"]):
            raise CorpusError(
                f"image size mismatch for {image_id}: manifest says "
                f"{entry['width']}x{entry['height']}, file is {u8.shape[1]}x{u8.shape[0]}"
            )
        labels = frozenset(entry["image_labels"])
        bad = labels - known
        if bad:
            raise CorpusError(f"{image_id}: unknown category id in image_labels: {sorted(bad)}")
        pixels = _pixels_to_float(u8)
        split = entry["split"]
        if split == "target_train":
            if "boxes" in entry:
                raise CorpusError(f"{image_id}: target_train record must not carry boxes")
            corpus.target_train.append(WeakImage(image_id, pixels, labels))
            continue
        boxes = []
        for b in entry.get("boxes", []):
            if b["category"] not in known:
                raise CorpusError(f"{image_id}: unknown category id in box: {b['category']}")
            boxes.append(
                (BoundingBox(b["x_min"], b["y_min"], b["x_max"], b["y_max"]), b["category"])
            )
        rec = BoxImage(image_id, pixels, boxes, labels)
        if split == "source_train":
            corpus.source_train.append(rec)
        elif split == "source_val":
            corpus.source_val.append(rec)
        elif split == "target_test":
            corpus.target_test.append(rec)
        else:
            raise CorpusError(f"{image_id}: unknown split {split!r}")
    return corpus
