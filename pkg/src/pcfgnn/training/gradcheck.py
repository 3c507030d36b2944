"""
Central finite-difference check of the pre-training gradients.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from pcfgnn.config import TrainConfig
from pcfgnn.graph.interaction import InteractionGraph
from pcfgnn.model.encoder import encode
from pcfgnn.model.params import PcfParams
from pcfgnn.training.pretrainer import backward, loss

logger = logging.getLogger(__name__)


@dataclass
class GradientMismatch:
    tensor: str
    index: tuple[int, ...]
    analytic: float
    numeric: float


@dataclass
class GradCheckReport:
    """Per-entry comparison summary; ``skipped`` entries straddle a ReLU kink."""

    checked: int = 0
    skipped: int = 0
    max_abs_error: float = 0.0
    mismatches: list[GradientMismatch] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches


def _pattern(graph: InteractionGraph, params: PcfParams) -> tuple[np.ndarray, ...]:
    return encode(graph, params).relu_pattern()


def _same_pattern(a: tuple[np.ndarray, ...], b: tuple[np.ndarray, ...]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b, strict=True))


def check_gradients(
    graph: InteractionGraph,
    params: PcfParams,
    config: TrainConfig,
    edge_set: np.ndarray | None = None,
    step: float = 1e-4,
    rtol: float = 1e-4,
    atol: float = 1e-6,
) -> GradCheckReport:
    """
    Compare every analytic gradient entry against ``(L(x+h) - L(x-h)) / 2h``.

    The check runs on a float64 copy of ``params``. An entry passes when
    ``|analytic - numeric| <= atol + rtol * max(|analytic|, |numeric|)``.
    Entries whose probe changes any layer's ReLU activation pattern are
    counted as skipped.
    """
    work = params.astype(np.float64)
    _, grads = backward(graph, work, edge_set, config)
    base = _pattern(graph, work)
    analytic = grads.named_tensors()
    report = GradCheckReport()

    for name, tensor in work.named_tensors().items():
        for index in np.ndindex(tensor.shape):
            original = tensor[index]
            tensor[index] = original + step
            plus = loss(graph, work, edge_set, config)
            crossed = not _same_pattern(base, _pattern(graph, work))
            tensor[index] = original - step
            minus = loss(graph, work, edge_set, config)
            crossed = crossed or not _same_pattern(base, _pattern(graph, work))
            tensor[index] = original

            if crossed:
                report.skipped += 1
                continue
            numeric = (plus - minus) / (2 * step)
            exact = float(analytic[name][index])
            error = abs(exact - numeric)
            report.checked += 1
            report.max_abs_error = max(report.max_abs_error, error)
            if error > atol + rtol * max(abs(exact), abs(numeric)):
                report.mismatches.append(GradientMismatch(name, index, exact, numeric))

    logger.debug(
        "gradient check: %d checked, %d skipped, %d mismatched",
        report.checked,
        report.skipped,
        len(report.mismatches),
    )
    return report
