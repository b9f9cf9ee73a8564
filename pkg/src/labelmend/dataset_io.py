"""KITTI-format label IO, soft-label sidecar files, and the dataset split."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from .geometry import BBox, InvalidBox
from .softlabel import SoftLabel


class LabelParseError(ValueError):
    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class FieldCountError(LabelParseError):
    pass


class NumericParseError(LabelParseError):
    pass


class InvalidBoxError(LabelParseError):
    pass


class UnsatisfiableSplit(RuntimeError):
    pass


DONTCARE = "DontCare"


@dataclass
class LabeledObject:
    class_name: str
    truncated: float
    occluded: int
    alpha: float
    bbox: BBox
    dimensions: tuple[float, float, float] = (-1.0, -1.0, -1.0)  # h, w, l
    location: tuple[float, float, float] = (-1000.0, -1000.0, -1000.0)
    rotation_y: float = -10.0
    score: float | None = None

    def __post_init__(self):
        if not self.class_name:
            raise ValueError("class_name must be non-empty")

    @property
    def is_dontcare(self) -> bool:
        return self.class_name == DONTCARE

    @property
    def is_prediction(self) -> bool:
        return self.score is not None


@dataclass
class SoftLabeledObject:
    image_id: str
    bbox: BBox
    soft_label: SoftLabel
    group_id: str
    tasks: list[str] = field(default_factory=list)
    box_support: int = 1  # how many annotator boxes were aggregated into this one


@dataclass
class DatasetSplit:
    seed: int
    train_images: list[str]
    val_images: list[str]
    pedestrian_fraction_train: float


def _fmt(x: float) -> str:
    # shortest decimal that round-trips
    return repr(float(x))


def parse_kitti_line(line: str, line_number: int) -> LabeledObject:
    fields = line.split()
    if len(fields) not in (15, 16):
        raise FieldCountError(f"expected 15 or 16 fields, got {len(fields)}", line_number)
    try:
        nums = [float(f) for f in fields[1:]]
    except ValueError as e:
        raise NumericParseError(str(e), line_number) from None
    try:
        bbox = BBox(nums[3], nums[4], nums[5], nums[6])
    except InvalidBox as e:
        raise InvalidBoxError(str(e), line_number) from None
    return LabeledObject(
        class_name=fields[0],
        truncated=nums[0],
        occluded=int(nums[1]),
        alpha=nums[2],
        bbox=bbox,
        dimensions=(nums[7], nums[8], nums[9]),
        location=(nums[10], nums[11], nums[12]),
        rotation_y=nums[13],
        score=nums[14] if len(nums) == 15 else None,
    )


def parse_kitti_labels(stream: IO[str] | Iterable[str]) -> list[LabeledObject]:
    objects = []
    for n, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        objects.append(parse_kitti_line(line, n))
    return objects


def format_kitti_line(obj: LabeledObject) -> str:
    parts = [
        obj.class_name,
        _fmt(obj.truncated),
        str(obj.occluded),
        _fmt(obj.alpha),
        _fmt(obj.bbox.left),
        _fmt(obj.bbox.top),
        _fmt(obj.bbox.right),
        _fmt(obj.bbox.bottom),
        *(_fmt(v) for v in obj.dimensions),
        *(_fmt(v) for v in obj.location),
        _fmt(obj.rotation_y),
    ]
    if obj.score is not None:
        parts.append(_fmt(obj.score))
    return " ".join(parts)


def write_kitti_labels(objects: Sequence[LabeledObject], stream: IO[str]) -> None:
    for obj in objects:
        stream.write(format_kitti_line(obj) + "\n")


def write_softlabel_sidecar(objects: Sequence[SoftLabeledObject], stream: IO[str]) -> None:
    for obj in objects:
        sl = obj.soft_label
        record = {
            "image_id": obj.image_id,
            "group_id": obj.group_id,
            "bbox": obj.bbox.as_list(),
            "p": sl.p_hat,
            "ci_low": sl.ci_low,
            "ci_high": sl.ci_high,
            "n_responses": sl.n_valid,
            "counts": dict(sl.counts),
            "tasks": list(obj.tasks),
            "refined": sl.refined,
        }
        stream.write(json.dumps(record) + "\n")


def parse_softlabel_sidecar(stream: IO[str] | Iterable[str]) -> list[SoftLabeledObject]:
    objects = []
    for line in stream:
        if not line.strip():
            continue
        rec = json.loads(line)
        sl = SoftLabel(
            p_hat=rec["p"],
            counts=dict(rec["counts"]),
            n_valid=rec["n_responses"],
            ci_low=rec["ci_low"],
            ci_high=rec["ci_high"],
            refined=rec["refined"],
        )
        objects.append(
            SoftLabeledObject(
                image_id=rec["image_id"],
                bbox=BBox(*rec["bbox"]),
                soft_label=sl,
                group_id=rec["group_id"],
                tasks=list(rec["tasks"]),
            )
        )
    return objects


def stratified_split(
    pedestrian_counts: dict[str, int],
    target_fraction: float = 0.8,
    tolerance: float = 0.01,
    seed: int = 0,
    max_attempts: int = 10_000,
) -> DatasetSplit:
    """Split images so ~``target_fraction`` of them, and of pedestrians, land in train.

    Image sampling is repeated with fresh seeded draws until the pedestrian
    fraction in the train split falls within ``tolerance`` of the target.
    """
    if not (0.0 < target_fraction < 1.0):
        raise ValueError("target_fraction must be in (0, 1)")
    images = sorted(pedestrian_counts)
    total_peds = sum(pedestrian_counts.values())
    if total_peds == 0:
        raise ValueError("need at least one pedestrian to stratify on")
    n_train = round(len(images) * target_fraction)
    rng = random.Random(seed)
    for _ in range(max_attempts):
        shuffled = images[:]
        rng.shuffle(shuffled)
        train, val = shuffled[:n_train], shuffled[n_train:]
        frac = sum(pedestrian_counts[i] for i in train) / total_peds
        if abs(frac - target_fraction) <= tolerance:
            return DatasetSplit(
                seed=seed,
                train_images=sorted(train),
                val_images=sorted(val),
                pedestrian_fraction_train=frac,
            )
    raise UnsatisfiableSplit(
        f"no split within {tolerance} of {target_fraction} after {max_attempts} attempts"
    )


def write_split_manifest(split: DatasetSplit, stream: IO[str]) -> None:
    json.dump(
        {"seed": split.seed, "train": split.train_images, "val": split.val_images},
        stream,
        indent=2,
    )
    stream.write("\n")


def read_split_manifest(stream: IO[str], pedestrian_counts: dict[str, int] | None = None) -> DatasetSplit:
    data = json.load(stream)
    frac = float("nan")
    if pedestrian_counts:
        total = sum(pedestrian_counts.values())
        if total:
            frac = sum(pedestrian_counts.get(i, 0) for i in data["train"]) / total
    return DatasetSplit(
        seed=data.get("seed", 0),
        train_images=list(data["train"]),
        val_images=list(data["val"]),
        pedestrian_fraction_train=frac,
    )
