"""Many-to-one dataset construction.

Output layout under ``root``::

    <root>/<scene_id>/anchor.png         16-bit RGB, XYZ clipped to [0, 1]
    <root>/<scene_id>/variant_000.png    8-bit RGB sRGB variants
    <root>/manifest.jsonl                one row per variant
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .dng import CameraProfile
from .errors import RawForgeError
from .image import ImagePlane
from .imageio import atomic_write, quantize, write_png
from .isp import Demosaic, PipelineConfig, Stage, run_pipeline
from .photofinish import PhotoFinishParams, render_variant, sample_params
from .seeding import split_seed

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = 1
MANIFEST_NAME = "manifest.jsonl"


@dataclass
class SceneRecord:
    scene_id: str
    anchor_path: Path
    variant_paths: list[Path] = field(default_factory=list)
    params: list[PhotoFinishParams] = field(default_factory=list)
    profile_name: str = ""
    clipped_fraction: float = 0.0


def default_threads() -> int:
    env = os.environ.get("RAWFORGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise RawForgeError(f"RAWFORGE_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def build_anchor(raw: np.ndarray, profile: CameraProfile) -> ImagePlane:
    """XYZ anchor: AsShotNeutral white balance, edge-aware demosaic, stop at xyz."""
    cfg = PipelineConfig(terminal_stage=Stage.XYZ, demosaic=Demosaic.EDGE_AWARE)
    return run_pipeline(raw, profile, cfg)


def crop_resize(img: ImagePlane, size: int) -> ImagePlane:
    """Center-crop to the largest square, then Lanczos-3 resample to ``size``.

    When the crop offset is odd the extra pixel is dropped from the bottom or
    right, i.e. the crop leans one pixel toward the upper left. Upscaling is
    allowed. The result is clipped to [0, 1].
    """
    size = int(size)
    if size < 2:
        raise RawForgeError(f"output size must be >= 2, got {size}")
    h, w = img.height, img.width
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    square = img.data[top:top + side, left:left + side]
    if side == size:
        out = square
    else:
        channels = [
            np.asarray(Image.fromarray(np.ascontiguousarray(square[:, :, c]), mode="F")
                       .resize((size, size), Image.LANCZOS))
            for c in range(img.channels)
        ]
        out = np.stack(channels, axis=-1)
    return ImagePlane(np.clip(out, 0.0, 1.0), img.state)


def _write_manifest(root: Path, records: Sequence[SceneRecord]) -> None:
    with atomic_write(root / MANIFEST_NAME, "w") as fh:
        for rec in records:
            for k, (path, p) in enumerate(zip(rec.variant_paths, rec.params)):
                row = {
                    "schema": MANIFEST_SCHEMA,
                    "scene_id": rec.scene_id,
                    "variant_index": k,
                    "seed": p.seed,
                    "r": p.r, "b": p.b, "beta": p.beta, "gamma": p.gamma, "c": p.c,
                    "profile": rec.profile_name,
                    "path": path.relative_to(root).as_posix(),
                }
                fh.write(json.dumps(row) + "\n")


def read_manifest(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def params_from_manifest_row(row: dict) -> PhotoFinishParams:
    return PhotoFinishParams(r=row["r"], b=row["b"], beta=row["beta"],
                             gamma=row["gamma"], c=row["c"], seed=row["seed"])


def render_variant_file(raw, profile: CameraProfile, params: PhotoFinishParams,
                        size: Optional[int]) -> np.ndarray:
    """8-bit samples for one variant, exactly as :func:`build_scene` writes them."""
    img = render_variant(raw, profile, params)
    if size is not None:
        img = crop_resize(img, size)
    return quantize(img.data, 8)


def build_scene(raw: np.ndarray, profile: CameraProfile, n: int, base_seed: int, root,
                scene_id: str, size: Optional[int] = None, threads: int = 1,
                write_manifest: bool = True) -> SceneRecord:
    """Write one scene: a single XYZ anchor plus ``n`` photo-finished variants.

    Variant ``k`` uses the seed ``split_seed(base_seed, scene_id, k)``.
    ``size=None`` keeps the native resolution (no crop/resize).
    """
    if n < 1:
        raise RawForgeError(f"variant count must be >= 1, got {n}")
    root = Path(root)
    scene_dir = root / scene_id
    scene_dir.mkdir(parents=True, exist_ok=True)

    anchor = build_anchor(raw, profile)
    clipped = float(np.mean((anchor.data < 0.0) | (anchor.data > 1.0)))
    if size is not None:
        anchor = crop_resize(anchor, size)
    else:
        anchor = ImagePlane(np.clip(anchor.data, 0.0, 1.0), anchor.state)
    log.info("scene %s: %.4f%% of anchor samples clipped", scene_id, 100.0 * clipped)
    record = SceneRecord(scene_id=scene_id, anchor_path=scene_dir / "anchor.png",
                         profile_name=profile.name, clipped_fraction=clipped)
    write_png(record.anchor_path, quantize(anchor.data, 16))

    params = [sample_params(split_seed(base_seed, scene_id, k)) for k in range(n)]
    paths = [scene_dir / f"variant_{k:03d}.png" for k in range(n)]

    def work(k: int) -> None:
        write_png(paths[k], render_variant_file(raw, profile, params[k], size))

    if threads > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(n)))
    else:
        for k in range(n):
            work(k)
    record.variant_paths = paths
    record.params = params
    if write_manifest:
        _write_manifest(root, [record])
    return record


def build_dataset(scenes: Sequence[tuple[str, np.ndarray]], profile: CameraProfile, n: int,
                  base_seed: int, root, size: Optional[int] = None,
                  threads: int = 1) -> list[SceneRecord]:
    """Build several scenes and write one manifest covering all of them."""
    ids = [sid for sid, _ in scenes]
    if len(set(ids)) != len(ids):
        raise RawForgeError("scene ids must be unique")
    root = Path(root)
    records = [
        build_scene(raw, profile, n, base_seed, root, sid, size=size, threads=threads,
                    write_manifest=False)
        for sid, raw in scenes
    ]
    _write_manifest(root, records)
    return records
