"""Standalone evaluators for the classification and boundary losses."""
import math
from dataclasses import dataclass
from typing import Optional

from .errors import ConfigError


@dataclass(frozen=True)
class LossParams:
    alpha: Optional[float] = 0.25  # None disables class balancing
    gamma: float = 2.0
    aux_weight: float = 0.2

    def __post_init__(self):
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")


def _log_sigmoid(x):
    # log(1 / (1 + e^-x)) without overflow
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def sigmoid_focal_loss(logit, target, params=LossParams()):
    """-alpha_t * (1 - p_t)^gamma * log(p_t) with p = sigmoid(logit)."""
    if target not in (0, 1):
        raise ConfigError(f"target must be 0 or 1, got {target}")
    log_pt = _log_sigmoid(logit if target == 1 else -logit)
    pt = math.exp(log_pt)
    loss = -((1.0 - pt) ** params.gamma) * log_pt
    if params.alpha is not None:
        loss *= params.alpha if target == 1 else 1.0 - params.alpha
    return loss


def diou_loss_1d(pred, gt):
    """1 - tIoU + (center distance / enclosing length)^2."""
    (ps, pe), (gs, ge) = pred, gt
    if pe < ps or ge < gs:
        raise ConfigError(f"invalid intervals {pred}, {gt}")
    enclosing = max(pe, ge) - min(ps, gs)
    if enclosing <= 0.0:
        return 0.0
    inter = max(0.0, min(pe, ge) - max(ps, gs))
    union = (pe - ps) + (ge - gs) - inter
    iou = inter / union if union > 0 else 0.0
    dist = 0.5 * (ps + pe) - 0.5 * (gs + ge)
    return 1.0 - iou + (dist / enclosing) ** 2
