"""
Training Math Module - Fine-tuning loss kernels (in-batch negatives, FLOPS,
joint FLOPS) with analytic gradients and a finite-difference checker
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
import structlog

from errors import InvalidInputError

logger = structlog.get_logger(__name__)

LOSS_NAMES = ("inbatch", "flops", "jflops", "combined")


def _as_matrix(vectors, name: str) -> np.ndarray:
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise InvalidInputError(f"{name} must be a non-empty list of equal-width vectors")
    if not np.isfinite(matrix).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    if (matrix < 0).any():
        raise InvalidInputError(f"{name} must be non-negative")
    return matrix


@dataclass
class Batch:
    """|B| query vectors and their paired positive documents (q_i <-> d_i)"""
    q_vectors: np.ndarray
    d_vectors: np.ndarray

    def __post_init__(self):
        self.q_vectors = _as_matrix(self.q_vectors, "q_vectors")
        self.d_vectors = _as_matrix(self.d_vectors, "d_vectors")
        if self.q_vectors.shape != self.d_vectors.shape:
            raise InvalidInputError(
                f"q and d batches differ in shape: {self.q_vectors.shape} vs {self.d_vectors.shape}"
            )

    @property
    def size(self) -> int:
        return self.q_vectors.shape[0]


@dataclass
class LossValue:
    """Loss value plus gradients keyed by the differentiated input name"""
    value: float
    gradients: Dict[str, np.ndarray] = field(default_factory=dict)


def similarity(q: np.ndarray, d: np.ndarray) -> float:
    """s(q, d) = q . d"""
    q = np.asarray(q, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if q.shape != d.shape or q.ndim != 1:
        raise InvalidInputError(f"width mismatch: {q.shape} vs {d.shape}")
    return float(np.dot(q, d))


def _logsumexp_rows(scores: np.ndarray) -> np.ndarray:
    peak = scores.max(axis=1, keepdims=True)
    return (peak + np.log(np.exp(scores - peak).sum(axis=1, keepdims=True)))[:, 0]


def row_log_softmax(scores: np.ndarray) -> np.ndarray:
    """Stable log-softmax over each row of a similarity matrix"""
    return scores - _logsumexp_rows(scores)[:, None]


def in_batch_loss(batch: Batch) -> LossValue:
    """
    -(1/|B|) sum_i log(e^{s_ii} / (e^{s_ii} + sum_{j != i} e^{s_ij}))

    Negatives are the other documents of the batch; the row's own positive
    is counted once, so |B| = 1 gives exactly 0.
    """
    Q, D = batch.q_vectors, batch.d_vectors
    n = batch.size
    scores = Q @ D.T
    log_probs = row_log_softmax(scores)
    value = -float(np.trace(log_probs)) / n

    grad_scores = (np.exp(log_probs) - np.eye(n)) / n
    return LossValue(value=value, gradients={"q": grad_scores @ D, "d": grad_scores.T @ Q})


def flops_loss(vectors) -> LossValue:
    """w_bar . w_bar where w_bar is the elementwise mean over the batch"""
    matrix = _as_matrix(vectors, "vectors")
    n = matrix.shape[0]
    mean = matrix.mean(axis=0)
    value = float(mean @ mean)
    grad = np.broadcast_to(2.0 * mean / n, matrix.shape).copy()
    return LossValue(value=value, gradients={"vectors": grad})


def joint_flops_loss(q_vectors, d_vectors) -> LossValue:
    """mean(Q) . mean(D)"""
    Q = _as_matrix(q_vectors, "q_vectors")
    D = _as_matrix(d_vectors, "d_vectors")
    if Q.shape[1] != D.shape[1]:
        raise InvalidInputError(f"width mismatch: {Q.shape[1]} vs {D.shape[1]}")
    q_mean = Q.mean(axis=0)
    d_mean = D.mean(axis=0)
    value = float(q_mean @ d_mean)
    return LossValue(value=value, gradients={
        "q": np.broadcast_to(d_mean / Q.shape[0], Q.shape).copy(),
        "d": np.broadcast_to(q_mean / D.shape[0], D.shape).copy(),
    })


def combined_objective(batch: Batch, lambda_j: float) -> LossValue:
    """in_batch_loss + lambda_j * joint_flops_loss"""
    if lambda_j < 0:
        raise InvalidInputError(f"lambda_j must be non-negative, got {lambda_j}")
    ranking = in_batch_loss(batch)
    regularizer = joint_flops_loss(batch.q_vectors, batch.d_vectors)
    return LossValue(
        value=ranking.value + lambda_j * regularizer.value,
        gradients={key: ranking.gradients[key] + lambda_j * regularizer.gradients[key]
                   for key in ("q", "d")},
    )


def flops_objective(batch: Batch, lambda_q: float, lambda_d: float) -> LossValue:
    """in_batch_loss with separate FLOPS regularizers on the Q and D batches"""
    if lambda_q < 0 or lambda_d < 0:
        raise InvalidInputError("regularizer weights must be non-negative")
    ranking = in_batch_loss(batch)
    q_reg = flops_loss(batch.q_vectors)
    d_reg = flops_loss(batch.d_vectors)
    return LossValue(
        value=ranking.value + lambda_q * q_reg.value + lambda_d * d_reg.value,
        gradients={
            "q": ranking.gradients["q"] + lambda_q * q_reg.gradients["vectors"],
            "d": ranking.gradients["d"] + lambda_d * d_reg.gradients["vectors"],
        },
    )


def topk_mask_dense(matrix: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Keep the k largest entries of each row (ties to the lower index)

    Returns:
        (masked matrix, boolean keep mask); gradients w.r.t. the input are
        the upstream gradients multiplied by the mask
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    matrix = np.asarray(matrix, dtype=np.float64)
    keep = np.zeros(matrix.shape, dtype=bool)
    if k >= matrix.shape[1]:
        keep[:] = True
    else:
        columns = np.arange(matrix.shape[1])
        for row in range(matrix.shape[0]):
            order = np.lexsort((columns, -matrix[row]))
            keep[row, order[:k]] = True
    return np.where(keep, matrix, 0.0), keep


class LambdaScheduler:
    """Quadratic warm-up of a regularizer weight until step T"""

    def __init__(self, lambda_: float, warmup_steps: int):
        if lambda_ < 0 or warmup_steps < 1:
            raise InvalidInputError("lambda must be >= 0 and warmup_steps >= 1")
        self.lambda_ = lambda_
        self.warmup_steps = warmup_steps
        self.step_count = 0
        self.current = 0.0

    def step(self) -> float:
        if self.step_count < self.warmup_steps:
            self.step_count += 1
            self.current = self.lambda_ * (self.step_count / self.warmup_steps) ** 2
        return self.current


# Gradient checking

LossFn = Callable[[Dict[str, np.ndarray]], LossValue]
DEFAULT_ERROR_FLOOR = 1e-3


def relative_error(analytic: float, numeric: float, floor: float = DEFAULT_ERROR_FLOOR) -> float:
    """
    |a - n| / max(|a|, |n|, floor)

    Below the floor the result is an absolute error scaled by 1/floor, so a
    relative tolerance tol bounds |a - n| by tol * floor for small gradients.
    """
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def numerical_gradient_error(fn: LossFn, inputs: Dict[str, np.ndarray], rng: np.random.Generator,
                             coords_per_input: int = 100, step: float = 1e-5,
                             floor: float = DEFAULT_ERROR_FLOOR) -> float:
    """
    Max relative error between analytic and central-difference gradients

    Checks up to coords_per_input random coordinates of every input (all of
    them when the input is smaller).
    """
    analytic = fn(inputs).gradients
    worst = 0.0
    for name, array in inputs.items():
        flat_count = array.size
        count = min(coords_per_input, flat_count)
        coords = rng.choice(flat_count, size=count, replace=False)
        for flat in coords:
            index = np.unravel_index(int(flat), array.shape)
            original = array[index]
            array[index] = original + step
            plus = fn(inputs).value
            array[index] = original - step
            minus = fn(inputs).value
            array[index] = original
            numeric = (plus - minus) / (2.0 * step)
            worst = max(worst, relative_error(float(analytic[name][index]), numeric, floor))
    return worst


def loss_function(name: str, lambda_j: float = 5.0) -> LossFn:
    """Adapter mapping named inputs to a loss kernel"""
    if name == "inbatch":
        return lambda x: in_batch_loss(Batch(x["q"], x["d"]))
    if name == "flops":
        return lambda x: flops_loss(x["vectors"])
    if name == "jflops":
        return lambda x: joint_flops_loss(x["q"], x["d"])
    if name == "combined":
        return lambda x: combined_objective(Batch(x["q"], x["d"]), lambda_j)
    raise InvalidInputError(f"unknown loss {name!r}; expected one of {LOSS_NAMES}")


@dataclass
class GradCheckRow:
    batch_size: int
    width: int
    max_relative_error: float


@dataclass
class GradCheckReport:
    loss: str
    seed: int
    tolerance: float
    error_floor: float = DEFAULT_ERROR_FLOOR
    rows: List[GradCheckRow] = field(default_factory=list)

    @property
    def max_relative_error(self) -> float:
        return max((row.max_relative_error for row in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


def gradient_check(loss: str, seed: int, batch_sizes: Sequence[int] = (1, 2, 4, 8),
                   widths: Sequence[int] = (8, 64), repeats: int = 1, lambda_j: float = 5.0,
                   step: float = 1e-5, tolerance: float = 1e-4,
                   coords_per_input: int = 100,
                   error_floor: float = DEFAULT_ERROR_FLOOR) -> GradCheckReport:
    """Finite-difference check of one loss over a |B| x width grid of random batches"""
    fn = loss_function(loss, lambda_j)
    rng = np.random.default_rng(seed)
    report = GradCheckReport(loss=loss, seed=seed, tolerance=tolerance, error_floor=error_floor)
    for batch_size in batch_sizes:
        for width in widths:
            worst = 0.0
            for _ in range(repeats):
                # keep every coordinate further than `step` from zero
                q = rng.uniform(0.1, 1.0, size=(batch_size, width))
                d = rng.uniform(0.1, 1.0, size=(batch_size, width))
                inputs = {"vectors": q} if loss == "flops" else {"q": q, "d": d}
                worst = max(worst, numerical_gradient_error(fn, inputs, rng,
                                                            coords_per_input, step, error_floor))
            report.rows.append(GradCheckRow(batch_size, width, worst))
            logger.debug("gradcheck_cell", loss=loss, batch_size=batch_size, width=width,
                         max_relative_error=worst)
    logger.info("gradcheck_done", loss=loss, seed=seed,
                max_relative_error=report.max_relative_error, passed=report.passed)
    return report
