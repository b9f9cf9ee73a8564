"""Stochastic annotator model for running the correction loop without humans."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .geometry import BBox
from .tasks import (
    CANT_SOLVE,
    OPTION_SETS,
    AnnotatorResponse,
    Microtask,
    MicrotaskKind,
)

# mean seconds per single response, derived from per-box costs divided by the
# number of responses contributing to a box
DEFAULT_MEAN_DURATION = {
    MicrotaskKind.DIRECT_BOX: 44.11,
    MicrotaskKind.KEYPOINT: 11.12,
    MicrotaskKind.KEYPOINT_BOX: 27.2,
    MicrotaskKind.IS_PEDESTRIAN: 3.44,  # 37.87 / 11
    MicrotaskKind.IS_HUMAN: 2.59,  # 57.03 / 22
    MicrotaskKind.ACTIVITY: 2.59,
}


@dataclass
class AnnotatorModel:
    accuracy: float = 1.0
    cant_solve_rate: float = 0.0
    duration_sigma: float = 0.35  # log-normal shape parameter
    box_jitter: float = 0.02  # edge noise as a fraction of box dimension
    mean_durations: dict[MicrotaskKind, float] = field(
        default_factory=lambda: dict(DEFAULT_MEAN_DURATION)
    )
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValueError("accuracy must be in [0, 1]")
        if not (0.0 <= self.cant_solve_rate <= 1.0):
            raise ValueError("cant_solve_rate must be in [0, 1]")

    def _rng(self, task_id: str, annotator_id: str) -> np.random.Generator:
        # independent substream per (task, annotator); deterministic given seed
        digest = hashlib.sha256(
            f"{self.seed}:{task_id}:{annotator_id}".encode()
        ).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "little"))

    def _duration(self, kind: MicrotaskKind, rng: np.random.Generator) -> float:
        mean = self.mean_durations[kind]
        # log-normal with the requested mean
        mu = np.log(mean) - self.duration_sigma**2 / 2
        return float(rng.lognormal(mu, self.duration_sigma))

    def answer(
        self, task: Microtask, latent_truth, annotator_id: str
    ) -> AnnotatorResponse:
        """One simulated response.

        For semantic tasks ``latent_truth`` is either the true option token or
        a probability that the true answer is the task's positive option.
        For localization tasks it is the true geometry (list of boxes or
        keypoints).
        """
        rng = self._rng(task.task_id, annotator_id)
        duration = self._duration(task.kind, rng)
        if task.is_semantic:
            answer = self._semantic_answer(task, latent_truth, rng)
        elif task.kind in (MicrotaskKind.DIRECT_BOX, MicrotaskKind.KEYPOINT_BOX):
            answer = [self._jitter_box(b, rng) for b in latent_truth]
        else:  # keypoints: centers of the true boxes
            answer = [list(b.center) for b in latent_truth]
        return AnnotatorResponse(
            task_id=task.task_id,
            annotator_id=annotator_id,
            answer=answer,
            duration=duration,
        )

    def _semantic_answer(self, task, latent_truth, rng) -> str:
        options = OPTION_SETS[task.kind]
        if rng.random() < self.cant_solve_rate:
            return CANT_SOLVE
        if isinstance(latent_truth, str):
            truth = latent_truth
        else:
            # probabilistic truth: positive option with probability latent_truth
            positive = options[0]
            negative = "No" if "No" in options else options[-2]
            truth = positive if rng.random() < float(latent_truth) else negative
        if rng.random() < self.accuracy:
            return truth
        wrong = [o for o in options if o not in (truth, CANT_SOLVE)]
        return wrong[rng.integers(len(wrong))]

    def _jitter_box(self, box, rng: np.random.Generator) -> list[float]:
        dx = self.box_jitter * box.width
        dy = self.box_jitter * box.height
        l = box.left + rng.normal(0, dx)
        r = box.right + rng.normal(0, dx)
        t = box.top + rng.normal(0, dy)
        b = box.bottom + rng.normal(0, dy)
        if l >= r:
            l, r = box.left, box.right
        if t >= b:
            t, b = box.top, box.bottom
        return [l, t, r, b]


def stage1_truth_lookup(image_truths: dict[str, list[BBox]]):
    """Latent-truth callable for box-collection tasks.

    Box-drawing and keypoint tasks see every true box of the image; a
    keypoint-box task sees only the true box nearest its cluster center.
    """

    def truth_for(task: Microtask):
        boxes = image_truths.get(task.image_id, [])
        if task.kind == MicrotaskKind.KEYPOINT_BOX:
            cx, cy = task.payload["cluster_center"]
            if not boxes:
                return []
            nearest = min(
                boxes,
                key=lambda b: (b.center[0] - cx) ** 2 + (b.center[1] - cy) ** 2,
            )
            return [nearest]
        return boxes

    return truth_for
