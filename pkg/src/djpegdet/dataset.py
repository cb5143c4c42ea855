"""Labeled single/double-compressed patch generation.

Follows the recompression protocol: every raw patch is compressed once with
a random matrix from the pool, and the double instance is produced by
decompressing that single instance (with pixel rounding/truncation) and
re-compressing it with a different matrix. Seen/unseen evaluation splits the
pool so that unseen-test records' final matrices never occur in training.

All randomness is drawn from per-patch generator streams keyed on
(seed, stream, patch index), so output is reproducible and independent of
worker parallelism.
"""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (DimensionError, DomainError, EmptyCorpus,
                     InsufficientQPool, SameMatrixError)
from .jpeg import (CoeffPlane, FrameInfo, QuantMatrix, encode_jpeg,
                   forward_plane, inverse_plane, parse_jpeg, standard_qmatrix)

_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

SPLITS = ("train", "val", "test", "test_unseen")


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    """Full-range BT.601 luma, rounded to uint8."""
    y = np.tensordot(rgb.astype(np.float64), _LUMA_WEIGHTS, axes=([2], [0]))
    return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)


def load_raw_image(path) -> np.ndarray:
    """Load a losslessly-stored raster image as a grayscale uint8 array."""
    with Image.open(path) as im:
        if im.format in ("JPEG", "MPO"):
            raise DomainError(f"raw corpus must be lossless, got JPEG: {path}")
        im = im.convert("RGB") if im.mode not in ("L", "I;16") else im.convert("L")
        arr = np.asarray(im)
    if arr.ndim == 3:
        return rgb_to_luma(arr)
    return arr.astype(np.uint8)


def crop_to_blocks(pixels: np.ndarray) -> np.ndarray:
    """Crop to the largest multiple-of-8 dimensions (never pads)."""
    h, w = pixels.shape[:2]
    return pixels[: h - h % 8, : w - w % 8]


def single_compress(pixels: np.ndarray, q1: QuantMatrix) -> CoeffPlane:
    """JPEG-quantize a patch once. RGB input is converted to luma first;
    only the luminance channel is ever quantized."""
    px = np.asarray(pixels)
    if px.ndim == 3:
        px = rgb_to_luma(px)
    if px.ndim != 2 or px.shape[0] % 8 or px.shape[1] % 8 or px.size == 0:
        raise DimensionError(f"patch dimensions must be non-zero multiples of 8, got {px.shape}")
    return forward_plane(px, q1)


def double_compress(pixels: np.ndarray, q1: QuantMatrix, q2: QuantMatrix) -> CoeffPlane:
    """Compress with q1, decompress (round + clamp), re-compress with q2."""
    if q1 == q2:
        raise SameMatrixError("double compression requires q2 != q1")
    first = single_compress(pixels, q1)
    return recompress_plane(first, q1, q2)


def recompress_plane(plane: CoeffPlane, q1: QuantMatrix, q2: QuantMatrix) -> CoeffPlane:
    """Decompress an existing single-compressed plane and re-quantize with q2."""
    if q1 == q2:
        raise SameMatrixError("recompression requires q2 != q1")
    return forward_plane(inverse_plane(plane, q1), q2)


# ---------------------------------------------------------------------------
# Q-matrix pools
# ---------------------------------------------------------------------------

def standard_q_pool(qualities) -> list[QuantMatrix]:
    pool = [standard_qmatrix(int(q)) for q in qualities]
    _check_distinct(pool)
    return pool


def _check_distinct(pool):
    seen = set()
    for q in pool:
        key = q.steps.tobytes()
        if key in seen:
            raise InsufficientQPool("q-matrix pool contains duplicate matrices")
        seen.add(key)


def save_q_pool(path, pool: list[QuantMatrix]):
    """Text format: one matrix per 8 lines of 8 integers, blank-line separated."""
    lines = []
    for q in pool:
        lines.extend(" ".join(str(v) for v in row) for row in q.steps)
        lines.append("")
    Path(path).write_text("\n".join(lines))


def load_q_pool(path) -> list[QuantMatrix]:
    rows: list[list[int]] = []
    pool: list[QuantMatrix] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        rows.append([int(v) for v in line.split()])
        if len(rows[-1]) != 8:
            raise DomainError(f"q-pool rows must have 8 integers: {line!r}")
        if len(rows) == 8:
            pool.append(QuantMatrix(np.array(rows)))
            rows = []
    if rows:
        raise DomainError("q-pool file ends mid-matrix")
    if not pool:
        raise InsufficientQPool(f"no matrices found in {path}")
    return pool


def split_q_pool(pool: list[QuantMatrix], seen_fraction: float,
                 seed: int) -> tuple[list[QuantMatrix], list[QuantMatrix]]:
    """Deterministic disjoint partition into (seen, unseen)."""
    if not 0 < seen_fraction < 1:
        raise DomainError(f"seen_fraction must be in (0, 1), got {seen_fraction}")
    if len(pool) < 2:
        raise InsufficientQPool("pool needs at least 2 matrices to split")
    _check_distinct(pool)
    n_seen = int(round(len(pool) * seen_fraction))
    n_seen = min(max(n_seen, 1), len(pool) - 1)
    perm = np.random.default_rng([seed, 17]).permutation(len(pool))
    seen = [pool[i] for i in sorted(perm[:n_seen])]
    unseen = [pool[i] for i in sorted(perm[n_seen:])]
    return seen, unseen


# ---------------------------------------------------------------------------
# Packed coefficient file (magic DJPG)
# ---------------------------------------------------------------------------

_DJPG_MAGIC = b"DJPG"
_DJPG_VERSION = 1


def save_djpg(path, plane: CoeffPlane, q: QuantMatrix):
    with open(path, "wb") as fh:
        fh.write(_DJPG_MAGIC)
        fh.write(struct.pack("<BHH", _DJPG_VERSION, plane.width_blocks, plane.height_blocks))
        fh.write(q.flat.astype(np.uint8).tobytes())
        fh.write(plane.blocks.astype("<i2").tobytes())


def load_djpg(path) -> tuple[CoeffPlane, QuantMatrix]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _DJPG_MAGIC:
            raise DomainError(f"not a DJPG file: bad magic {magic!r}")
        version, wb, hb = struct.unpack("<BHH", fh.read(5))
        if version != _DJPG_VERSION:
            raise DomainError(f"unsupported DJPG version {version}")
        q = QuantMatrix(np.frombuffer(fh.read(64), dtype=np.uint8).astype(np.int64).reshape(8, 8))
        raw = fh.read(hb * wb * 64 * 2)
        if len(raw) != hb * wb * 64 * 2:
            raise DomainError("truncated DJPG file")
        blocks = np.frombuffer(raw, dtype="<i2").astype(np.int32).reshape(hb, wb, 8, 8)
    return CoeffPlane(blocks), q


# ---------------------------------------------------------------------------
# Dataset build
# ---------------------------------------------------------------------------

@dataclass
class PatchRecord:
    patch_id: str
    label: str  # "single" | "double"
    source: str
    offset: tuple[int, int]
    split: str
    q1: QuantMatrix
    q2: QuantMatrix | None
    path: str

    def __post_init__(self):
        if self.label not in ("single", "double"):
            raise DomainError(f"bad label {self.label!r}")
        if self.label == "double" and (self.q2 is None or self.q2 == self.q1):
            raise DomainError("double records need q2 present and distinct from q1")
        if self.label == "single" and self.q2 is not None:
            raise DomainError("single records must not carry q2")

    @property
    def final_q(self) -> QuantMatrix:
        return self.q2 if self.q2 is not None else self.q1

    def to_json(self) -> dict:
        return {
            "id": self.patch_id, "label": self.label, "source": self.source,
            "offset": list(self.offset), "split": self.split,
            "q1": self.q1.flat.tolist(),
            "q2": None if self.q2 is None else self.q2.flat.tolist(),
            "path": self.path,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PatchRecord":
        return cls(obj["id"], obj["label"], obj["source"], tuple(obj["offset"]),
                   obj["split"], QuantMatrix.from_flat(obj["q1"]),
                   None if obj["q2"] is None else QuantMatrix.from_flat(obj["q2"]),
                   obj["path"])


@dataclass
class DatasetConfig:
    patch_size: int = 256
    mode: str = "subgrid"  # "subgrid": compress at gen_size, keep top-left corner
    gen_size: int = 256
    seed: int = 0
    splits: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seen_fraction: float = 0.7
    unseen_eval: bool = True
    storage: str = "djpg"  # or "jpeg"
    max_positions: int | None = None
    threads: int = 1

    def __post_init__(self):
        if self.patch_size % 8 or self.patch_size < 8:
            raise DomainError("patch_size must be a positive multiple of 8")
        if self.mode not in ("subgrid", "native"):
            raise DomainError(f"mode must be 'subgrid' or 'native', got {self.mode!r}")
        if self.mode == "subgrid" and self.patch_size > self.gen_size:
            raise DomainError("patch_size cannot exceed gen_size in subgrid mode")
        if self.storage not in ("djpg", "jpeg"):
            raise DomainError(f"storage must be 'djpg' or 'jpeg', got {self.storage!r}")
        if abs(sum(self.splits) - 1.0) > 1e-9 or any(s < 0 for s in self.splits):
            raise DomainError("split fractions must be non-negative and sum to 1")

    @property
    def compress_size(self) -> int:
        return self.gen_size if self.mode == "subgrid" else self.patch_size


@dataclass
class DatasetManifest:
    config: DatasetConfig
    seen_pool: list[QuantMatrix]
    unseen_pool: list[QuantMatrix]
    records: list[PatchRecord] = field(default_factory=list)
    root: str = "."

    def records_for_split(self, split: str) -> list[PatchRecord]:
        return [r for r in self.records if r.split == split]

    def header_json(self) -> dict:
        return {
            "kind": "header",
            "seed": self.config.seed,
            "patch_size": self.config.patch_size,
            "mode": self.config.mode,
            "gen_size": self.config.gen_size,
            "splits": list(self.config.splits),
            "seen_fraction": self.config.seen_fraction,
            "unseen_eval": self.config.unseen_eval,
            "storage": self.config.storage,
            "seen_pool": [q.flat.tolist() for q in self.seen_pool],
            "unseen_pool": [q.flat.tolist() for q in self.unseen_pool],
            "n_records": len(self.records),
        }

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(json.dumps(self.header_json(), sort_keys=True) + "\n")
            for rec in self.records:
                fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header.get("kind") != "header":
                raise DomainError("manifest must start with a header line")
            records = [PatchRecord.from_json(json.loads(line)) for line in fh if line.strip()]
        config = DatasetConfig(
            patch_size=header["patch_size"], mode=header["mode"],
            gen_size=header["gen_size"], seed=header["seed"],
            splits=tuple(header["splits"]), seen_fraction=header["seen_fraction"],
            unseen_eval=header["unseen_eval"], storage=header["storage"])
        manifest = cls(config,
                       [QuantMatrix.from_flat(v) for v in header["seen_pool"]],
                       [QuantMatrix.from_flat(v) for v in header["unseen_pool"]],
                       records, root=str(path.parent))
        return manifest

    def digest(self) -> str:
        payload = json.dumps(self.header_json(), sort_keys=True) + "".join(
            json.dumps(r.to_json(), sort_keys=True) for r in self.records)
        return hashlib.sha256(payload.encode()).hexdigest()


def check_unseen_purity(manifest: DatasetManifest):
    """Assert no unseen-test record was finally compressed with a seen matrix."""
    seen_keys = {q.steps.tobytes() for q in manifest.seen_pool}
    for rec in manifest.records_for_split("test_unseen"):
        if rec.final_q.steps.tobytes() in seen_keys:
            raise DomainError(
                f"unseen-test record {rec.patch_id} uses a training-pool matrix")


def _patch_positions(images: list[tuple[str, np.ndarray]], size: int):
    positions = []
    for name, px in images:
        h, w = px.shape
        for y in range(0, h - size + 1, size):
            for x in range(0, w - size + 1, size):
                positions.append((name, x, y))
    return positions


def _draw_pair(rng, pool):
    i1 = int(rng.integers(len(pool)))
    i2 = int(rng.integers(len(pool) - 1))
    if i2 >= i1:
        i2 += 1
    return pool[i1], pool[i2]


def _subgrid(plane: CoeffPlane, blocks: int) -> CoeffPlane:
    return CoeffPlane(plane.blocks[:blocks, :blocks], plane.component_id)


def _gen_patch_task(args):
    """Generate the single/double coefficient planes for one patch position.

    Pure function of its arguments; safe under any worker parallelism.
    """
    index, pixels, seed, seen_pool, unseen_pool, want_unseen, sub_blocks = args
    rng = np.random.default_rng([seed, 1, index])
    q1, q2 = _draw_pair(rng, seen_pool)
    single_full = forward_plane(pixels, q1)
    double_full = recompress_plane(single_full, q1, q2)
    out = {
        "single": (_subgrid(single_full, sub_blocks), q1, None),
        "double": (_subgrid(double_full, sub_blocks), q1, q2),
    }
    if want_unseen:
        rng_u = np.random.default_rng([seed, 2, index])
        q1u, q2u = _draw_pair(rng_u, unseen_pool)
        single_u = forward_plane(pixels, q1u)
        double_u = recompress_plane(single_u, q1u, q2u)
        out["single_unseen"] = (_subgrid(single_u, sub_blocks), q1u, None)
        out["double_unseen"] = (_subgrid(double_u, sub_blocks), q1u, q2u)
    return index, out


def _store_plane(root: Path, rel: str, plane: CoeffPlane, final_q: QuantMatrix, storage: str):
    path = root / rel
    if storage == "djpg":
        save_djpg(path, plane, final_q)
    else:
        side = plane.width_blocks * 8
        data = encode_jpeg([plane], [final_q], FrameInfo.grayscale(side, side))
        path.write_bytes(data)


def build_dataset(raw_dir, q_pool: list[QuantMatrix], out_dir,
                  config: DatasetConfig) -> DatasetManifest:
    """Generate the dataset under out_dir and return its manifest.

    Every usable patch position yields one single- and one double-compressed
    record assigned to the same split; test positions additionally yield an
    unseen-pool pair when unseen evaluation is enabled.
    """
    raw_dir, out_dir = Path(raw_dir), Path(out_dir)
    _check_distinct(q_pool)
    if len(q_pool) < 2:
        raise InsufficientQPool("need at least 2 matrices to build a dataset")

    if config.unseen_eval:
        seen_pool, unseen_pool = split_q_pool(q_pool, config.seen_fraction, config.seed)
        if len(seen_pool) < 2 or len(unseen_pool) < 2:
            raise InsufficientQPool("both pool halves need >= 2 matrices for double records")
    else:
        seen_pool, unseen_pool = list(q_pool), []

    names = sorted(p.name for p in raw_dir.iterdir()
                   if p.suffix.lower() in (".png", ".pgm", ".ppm", ".bmp", ".tif", ".tiff"))
    images = []
    for name in names:
        px = crop_to_blocks(load_raw_image(raw_dir / name))
        if px.shape[0] >= config.compress_size and px.shape[1] >= config.compress_size:
            images.append((name, px))
    if not images:
        raise EmptyCorpus(f"no usable raw images of size >= {config.compress_size} in {raw_dir}")

    positions = _patch_positions(images, config.compress_size)
    if not positions:
        raise EmptyCorpus("no patch positions could be extracted")

    order = np.random.default_rng([config.seed, 0]).permutation(len(positions))
    if config.max_positions is not None:
        order = order[:config.max_positions]
    n = len(order)
    n_train = int(round(n * config.splits[0]))
    n_val = int(round(n * config.splits[1]))
    split_of = {}
    for rank, pos_index in enumerate(order):
        split_of[int(pos_index)] = ("train" if rank < n_train
                                    else "val" if rank < n_train + n_val
                                    else "test")

    (out_dir / "patches").mkdir(parents=True, exist_ok=True)
    pixels_by_name = dict(images)
    sub_blocks = config.patch_size // 8
    ext = "djpg" if config.storage == "djpg" else "jpg"

    def tasks():
        for pos_index in sorted(split_of):
            name, x, y = positions[pos_index]
            patch = pixels_by_name[name][y:y + config.compress_size, x:x + config.compress_size]
            want_unseen = config.unseen_eval and split_of[pos_index] == "test"
            yield (pos_index, np.ascontiguousarray(patch), config.seed,
                   seen_pool, unseen_pool, want_unseen, sub_blocks)

    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(_gen_patch_task, tasks(), chunksize=8))
    else:
        results = [_gen_patch_task(t) for t in tasks()]

    suffix_split = {"single": None, "double": None,
                    "single_unseen": "test_unseen", "double_unseen": "test_unseen"}
    suffix_tag = {"single": "s", "double": "d", "single_unseen": "su", "double_unseen": "du"}
    records = []
    for pos_index, planes in sorted(results):
        name, x, y = positions[pos_index]
        base_split = split_of[pos_index]
        for kind in ("single", "double", "single_unseen", "double_unseen"):
            if kind not in planes:
                continue
            plane, q1, q2 = planes[kind]
            rec_id = f"p{pos_index:06d}{suffix_tag[kind]}"
            rel = f"patches/{rec_id}.{ext}"
            label = "single" if kind.startswith("single") else "double"
            split = suffix_split[kind] or base_split
            final_q = q2 if q2 is not None else q1
            _store_plane(out_dir, rel, plane, final_q, config.storage)
            records.append(PatchRecord(rec_id, label, name, (x, y), split, q1, q2, rel))

    manifest = DatasetManifest(config, seen_pool, unseen_pool, records, root=str(out_dir))
    if config.unseen_eval:
        check_unseen_purity(manifest)
    manifest.save(out_dir / "manifest.jsonl")
    return manifest


def load_record_plane(manifest: DatasetManifest, rec: PatchRecord) -> tuple[CoeffPlane, QuantMatrix]:
    """Load a record's coefficient plane and its final (header) matrix."""
    path = Path(manifest.root) / rec.path
    if path.suffix == ".djpg":
        return load_djpg(path)
    parsed = parse_jpeg(path.read_bytes())
    return parsed.planes[0], parsed.qmatrices[0]


def load_split_features(manifest: DatasetManifest, split: str, b: int):
    """Extract per-record histograms and final q-factors for one split.

    Returns (labels uint8 (n,), hists int64 (n, 63, 2b+1), qflats uint8 (n, 64)).
    """
    from .features import extract_histograms

    recs = manifest.records_for_split(split)
    labels = np.zeros(len(recs), dtype=np.uint8)
    hists = np.zeros((len(recs), 63, 2 * b + 1), dtype=np.int64)
    qflats = np.zeros((len(recs), 64), dtype=np.uint8)
    for i, rec in enumerate(recs):
        plane, q = load_record_plane(manifest, rec)
        labels[i] = 1 if rec.label == "double" else 0
        hists[i] = extract_histograms(plane, b).counts
        qflats[i] = q.flat.astype(np.uint8)
    return labels, hists, qflats


# ---------------------------------------------------------------------------
# Synthetic raw corpus (textured grayscale images for demos and tests)
# ---------------------------------------------------------------------------

def synthesize_corpus(out_dir, count: int, size: int = 512, seed: int = 0) -> list[str]:
    """Write `count` textured grayscale PNGs of side `size`; returns filenames."""
    if count < 1 or size < 8:
        raise DomainError("need count >= 1 and size >= 8")
    from scipy.ndimage import gaussian_filter

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    yy, xx = np.mgrid[0:size, 0:size] / size
    for i in range(count):
        rng = np.random.default_rng([seed, 4, i])
        img = np.zeros((size, size))
        for sigma, weight in ((1.2, 1.0), (4.0, 2.0), (12.0, 4.0)):
            img += weight * gaussian_filter(rng.normal(size=(size, size)), sigma * rng.uniform(0.6, 1.6))
        img += rng.normal(0, 0.3) * xx + rng.normal(0, 0.3) * yy
        for _ in range(rng.integers(2, 6)):
            cx, cy = rng.uniform(0, 1, 2)
            r = rng.uniform(0.05, 0.3)
            blob = np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r * r)))
            img += rng.normal(0, 0.8) * blob
        img -= img.mean()
        img *= rng.uniform(25, 45) / max(img.std(), 1e-9)
        img += rng.uniform(110, 150)
        arr = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
        name = f"synth_{i:04d}.png"
        Image.fromarray(arr, mode="L").save(out_dir / name)
        names.append(name)
    return names
