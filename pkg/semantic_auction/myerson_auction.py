"""Trainable monotone-transform single-item auction and its baselines.

Each bidder's bid goes through a strictly increasing piecewise-linear transform
Phi_n(b) = min_q max_s (w_qs b + beta_qs). The item is allocated by a softmax over
the transformed bids plus a dummy bidder fixed at 0, and the payment is the
second-price-with-zero-reserve price mapped back through Phi_n^-1. The hard
version of this auction is a monotone-transformed second-price auction, so it is
truthful and individually rational for any parameters; training only moves revenue.
"""

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import NumericalError
from .log import get_logger

logger = get_logger(__name__)

# Payments above the winning bid by more than this count as IR violations
IR_TOLERANCE = 1e-12

# Gradients smaller than this are compared in absolute terms by finite_difference_check
FD_SCALE_FLOOR = 1e-3


class AuctionConfig(BaseModel):
    """Shape of the transform network and the SGD schedule."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    N: int = Field(default=10, ge=2)
    Q: int = Field(default=5, ge=1)
    S: int = Field(default=10, ge=1)
    kappa: float = Field(default=1000.0, gt=0)
    lr: float = Field(default=0.001, ge=0)
    batch_size: int = Field(default=100, ge=1)
    iterations: int = Field(default=2000, ge=0)
    seed: int = 0
    eval_every: int = Field(default=100, ge=0)
    keep_best: bool = True


@dataclass
class AuctionNetParams:
    """Per-bidder transform parameters; slopes are stored as log_w."""

    log_w: np.ndarray
    beta: np.ndarray

    def __post_init__(self) -> None:
        self.log_w = np.asarray(self.log_w, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if self.log_w.ndim != 3 or self.log_w.shape != self.beta.shape:
            raise ValueError(
                f"log_w and beta must share an N x Q x S shape, got {self.log_w.shape} and {self.beta.shape}"
            )

    @property
    def w(self) -> np.ndarray:
        return np.exp(self.log_w)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.log_w.shape  # type: ignore[return-value]

    @property
    def N(self) -> int:
        return self.log_w.shape[0]

    def copy(self) -> "AuctionNetParams":
        return AuctionNetParams(self.log_w.copy(), self.beta.copy())


@dataclass(frozen=True)
class AuctionOutcome:
    """Result of one soft auction over N bidders plus the dummy."""

    transformed: np.ndarray
    alloc: np.ndarray
    payments: np.ndarray
    winner: int
    revenue: float

    @property
    def is_sale(self) -> bool:
        return self.winner < len(self.payments)


class HardResult(NamedTuple):
    winner: Optional[int]
    payment: float


@dataclass
class TrainingHistory:
    """Per-iteration soft revenue plus periodic hard revenue on held-out bids.

    holdout_revenue is keyed by iteration; 0 is the identity network.
    best_iteration names the checkpoint train returned.
    """

    train_revenue: List[float] = field(default_factory=list)
    holdout_revenue: Dict[int, float] = field(default_factory=dict)
    best_iteration: int = 0


@dataclass
class _BatchForward:
    # Intermediates kept for the analytic gradient
    bids: np.ndarray
    transformed: np.ndarray
    t_q: np.ndarray
    t_s: np.ndarray
    alloc: np.ndarray
    spa0: np.ndarray
    other: np.ndarray
    spa0_active: np.ndarray
    payments: np.ndarray
    p_q: np.ndarray
    p_s: np.ndarray
    pay_active: np.ndarray
    revenue: np.ndarray


def init_params(N: int, Q: int, S: int) -> AuctionNetParams:
    """Identity transforms (slopes 1, intercepts 0): the auction starts as a second-price auction."""
    return AuctionNetParams(np.zeros((N, Q, S)), np.zeros((N, Q, S)))


def random_params(rng: np.random.Generator, N: int, Q: int, S: int, scale: float = 0.5) -> AuctionNetParams:
    """Random transform parameters for property checks."""
    return AuctionNetParams(
        rng.normal(0.0, scale, size=(N, Q, S)),
        rng.normal(0.0, scale, size=(N, Q, S)),
    )


def transform(params: AuctionNetParams, bidder: int, bid: float) -> float:
    """Phi_n(bid) = min over q of max over s of (w * bid + beta)."""
    lines = np.exp(params.log_w[bidder]) * bid + params.beta[bidder]
    return float(np.min(np.max(lines, axis=1)))


def inverse_transform(params: AuctionNetParams, bidder: int, y: float) -> float:
    """Phi_n^-1(y) = max over q of min over s of ((y - beta) / w)."""
    inverted = (y - params.beta[bidder]) / np.exp(params.log_w[bidder])
    return float(np.max(np.min(inverted, axis=1)))


def _transform_pieces(params: AuctionNetParams, bids: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # lines: B x N x Q x S
    lines = params.w[None] * bids[:, :, None, None] + params.beta[None]
    t_s = np.argmax(lines, axis=3)
    group_max = np.take_along_axis(lines, t_s[..., None], axis=3)[..., 0]
    t_q = np.argmin(group_max, axis=2)
    transformed = np.take_along_axis(group_max, t_q[..., None], axis=2)[..., 0]
    t_s = np.take_along_axis(t_s, t_q[..., None], axis=2)[..., 0]
    return transformed, t_q, t_s


def _inverse_pieces(params: AuctionNetParams, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    inverted = (y[:, :, None, None] - params.beta[None]) / params.w[None]
    p_s = np.argmin(inverted, axis=3)
    group_min = np.take_along_axis(inverted, p_s[..., None], axis=3)[..., 0]
    p_q = np.argmax(group_min, axis=2)
    values = np.take_along_axis(group_min, p_q[..., None], axis=2)[..., 0]
    p_s = np.take_along_axis(p_s, p_q[..., None], axis=2)[..., 0]
    return values, p_q, p_s


def transform_batch(params: AuctionNetParams, bids: np.ndarray) -> np.ndarray:
    """Transform a B x N batch of bids."""
    return _transform_pieces(params, np.asarray(bids, dtype=float))[0]


def inverse_transform_batch(params: AuctionNetParams, y: np.ndarray) -> np.ndarray:
    """Invert a B x N batch of transformed values, bidder by bidder."""
    return _inverse_pieces(params, np.asarray(y, dtype=float))[0]


def allocate_soft(transformed: np.ndarray, kappa: float) -> np.ndarray:
    """Softmax of kappa * transformed along the last axis.

    Args:
        transformed: Transformed bids with the dummy 0 as the last entry.
        kappa: Softmax temperature, larger is closer to argmax.

    Returns:
        Allocation probabilities summing to 1.
    """
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    scaled = kappa * np.asarray(transformed, dtype=float)
    scaled = scaled - np.max(scaled, axis=-1, keepdims=True)
    weights = np.exp(scaled)
    return weights / np.sum(weights, axis=-1, keepdims=True)


def spa0_payment(transformed: np.ndarray, bidder: int) -> float:
    """Highest transformed bid among the other real bidders, floored at 0.

    Args:
        transformed: N real transformed bids followed by the dummy 0.
        bidder: Index of the paying bidder.
    """
    others = np.delete(np.asarray(transformed, dtype=float)[:-1], bidder)
    return float(max(0.0, np.max(others)))


def _spa0_batch(transformed: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # For each bidder, the strongest rival (lowest index on ties) and its ReLU'd value
    B, N = transformed.shape
    rows = np.arange(B)
    first = np.argmax(transformed, axis=1)
    masked = transformed.copy()
    masked[rows, first] = -np.inf
    second = np.argmax(masked, axis=1)
    is_first = np.arange(N)[None, :] == first[:, None]
    other = np.where(is_first, second[:, None], first[:, None])
    rival = np.take_along_axis(transformed, other, axis=1)
    active = rival > 0
    return np.where(active, rival, 0.0), other, active


def _forward_batch(params: AuctionNetParams, bids: np.ndarray, kappa: float) -> _BatchForward:
    bids = np.asarray(bids, dtype=float)
    if bids.ndim != 2 or bids.shape[1] != params.N:
        raise ValueError(f"bids must be B x {params.N}, got shape {bids.shape}")
    transformed, t_q, t_s = _transform_pieces(params, bids)
    with_dummy = np.concatenate([transformed, np.zeros((bids.shape[0], 1))], axis=1)
    alloc = allocate_soft(with_dummy, kappa)
    spa0, other, spa0_active = _spa0_batch(transformed)
    inverted, p_q, p_s = _inverse_pieces(params, spa0)
    pay_active = inverted > 0
    payments = np.where(pay_active, inverted, 0.0)
    revenue = np.sum(alloc[:, :-1] * payments, axis=1)
    return _BatchForward(
        bids=bids,
        transformed=with_dummy,
        t_q=t_q,
        t_s=t_s,
        alloc=alloc,
        spa0=spa0,
        other=other,
        spa0_active=spa0_active,
        payments=payments,
        p_q=p_q,
        p_s=p_s,
        pay_active=pay_active,
        revenue=revenue,
    )


def forward(params: AuctionNetParams, bids: Sequence[float], kappa: float) -> AuctionOutcome:
    """Run the soft auction on one bid profile.

    Args:
        params: Transform parameters.
        bids: N bids.
        kappa: Softmax temperature.

    Returns:
        Transformed bids, allocation, conditional payments, hard winner (N means
        no sale) and the expected revenue under the soft allocation.
    """
    fb = _forward_batch(params, np.asarray(bids, dtype=float)[None, :], kappa)
    transformed = fb.transformed[0]
    return AuctionOutcome(
        transformed=transformed,
        alloc=fb.alloc[0],
        payments=fb.payments[0],
        winner=int(np.argmax(transformed)),
        revenue=float(fb.revenue[0]),
    )


def forward_batch(params: AuctionNetParams, bids: np.ndarray, kappa: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched soft auction.

    Returns:
        Tuple (alloc B x (N+1), payments B x N, revenue B).
    """
    fb = _forward_batch(params, bids, kappa)
    return fb.alloc, fb.payments, fb.revenue


def loss_and_gradient(
    params: AuctionNetParams, batch: np.ndarray, kappa: float
) -> Tuple[float, AuctionNetParams]:
    """Negated mean soft revenue and its analytic gradient.

    Max/min selections and the ReLU floors pass gradient through the active piece
    only, ties going to the lowest index.

    Args:
        params: Transform parameters.
        batch: B x N bids, B >= 1.
        kappa: Softmax temperature.

    Returns:
        Tuple (loss, gradient) with the gradient taken w.r.t. log_w and beta.
    """
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ValueError("batch must be a non-empty B x N array")
    fb = _forward_batch(params, batch, kappa)
    B, N = batch.shape
    w = params.w
    rows = np.broadcast_to(np.arange(B)[:, None], (B, N))
    bidders = np.broadcast_to(np.arange(N)[None, :], (B, N))

    alloc = fb.alloc[:, :N]
    revenue = fb.revenue
    grad_log_w = np.zeros_like(params.log_w)
    grad_beta = np.zeros_like(params.beta)

    # Softmax: d revenue / d transformed_k = kappa z_k (p_k - revenue)
    grad_t = kappa * alloc * (fb.payments - revenue[:, None])

    # Payment p_n = (y_n - beta*) / w* on the active inverse piece, floored at 0
    w_pay = w[bidders, fb.p_q, fb.p_s]
    d_pay = np.where(fb.pay_active, alloc, 0.0)
    np.add.at(grad_beta, (bidders, fb.p_q, fb.p_s), -d_pay / w_pay)
    np.add.at(grad_log_w, (bidders, fb.p_q, fb.p_s), -d_pay * fb.payments)

    # y_n is the rival's transformed bid when the ReLU is open
    d_rival = np.where(fb.spa0_active, d_pay / w_pay, 0.0)
    np.add.at(grad_t, (rows, fb.other), d_rival)

    # Transform t_n = w* b_n + beta* on the active forward piece
    w_t = w[bidders, fb.t_q, fb.t_s]
    np.add.at(grad_beta, (bidders, fb.t_q, fb.t_s), grad_t)
    np.add.at(grad_log_w, (bidders, fb.t_q, fb.t_s), grad_t * w_t * batch)

    scale = -1.0 / B
    loss = -float(np.mean(revenue))
    return loss, AuctionNetParams(grad_log_w * scale, grad_beta * scale)


def _check_dataset(dataset: np.ndarray, N: int) -> np.ndarray:
    dataset = np.asarray(dataset, dtype=float)
    if dataset.ndim != 2 or dataset.shape[0] == 0:
        raise ValueError("dataset must be a non-empty M x N array")
    if dataset.shape[1] != N:
        raise ValueError(f"dataset has {dataset.shape[1]} bidders, config expects {N}")
    return dataset


def train(
    config: AuctionConfig,
    dataset: np.ndarray,
    holdout: Optional[np.ndarray] = None,
) -> Tuple[AuctionNetParams, TrainingHistory]:
    """Fit the transforms by plain SGD on shuffled minibatches.

    With held-out bids the hard revenue is scored at iteration 0, every
    config.eval_every iterations and at the last iteration. When
    config.keep_best is set the best scored checkpoint is returned; ties keep
    the earlier one, so training never returns less than the identity network,
    which is the second-price auction.

    Args:
        config: Network shape, temperature and schedule.
        dataset: M x N training bids with M >= batch_size.
        holdout: Optional held-out bids used to score and select checkpoints.

    Returns:
        Tuple (params, history).

    Raises:
        ValueError: If the dataset is empty, has the wrong width, or is smaller than a batch.
        NumericalError: If the loss becomes NaN or infinite.
    """
    dataset = _check_dataset(dataset, config.N)
    M = dataset.shape[0]
    if M < config.batch_size:
        raise ValueError(f"dataset has {M} samples, fewer than batch_size={config.batch_size}")
    if holdout is not None:
        holdout = _check_dataset(holdout, config.N)

    rng = np.random.default_rng(config.seed)
    params = init_params(config.N, config.Q, config.S)
    history = TrainingHistory()
    order = rng.permutation(M)
    cursor = 0

    best = params.copy()
    best_revenue = -np.inf

    def score(iteration: int) -> None:
        nonlocal best, best_revenue
        revenue = hard_revenue(params, holdout)
        history.holdout_revenue[iteration] = revenue
        if revenue > best_revenue:
            best, best_revenue = params.copy(), revenue
            history.best_iteration = iteration

    if holdout is not None:
        score(0)

    for iteration in range(1, config.iterations + 1):
        if cursor + config.batch_size > M:
            order = rng.permutation(M)
            cursor = 0
        batch = dataset[order[cursor:cursor + config.batch_size]]
        cursor += config.batch_size

        loss, grad = loss_and_gradient(params, batch, config.kappa)
        if not np.isfinite(loss):
            raise NumericalError(f"loss became {loss} at iteration {iteration}")
        params.log_w -= config.lr * grad.log_w
        params.beta -= config.lr * grad.beta
        history.train_revenue.append(-loss)

        if holdout is not None and (
            iteration == config.iterations
            or (config.eval_every and iteration % config.eval_every == 0)
        ):
            score(iteration)
        if iteration % 100 == 0:
            logger.debug("iteration %d: soft revenue %.6f", iteration, -loss)

    if history.train_revenue:
        logger.info(
            "trained %d iterations, final soft revenue %.6f",
            config.iterations,
            history.train_revenue[-1],
        )
    if holdout is not None and config.keep_best:
        logger.info(
            "kept checkpoint %d, held-out revenue %.6f",
            history.best_iteration,
            best_revenue,
        )
        return best, history
    history.best_iteration = config.iterations
    return params, history


def hard_auction_batch(params: AuctionNetParams, bids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Hard argmax auction over a B x N batch.

    Returns:
        Tuple (winners, payments): winner -1 means no sale; losers pay 0.
    """
    bids = np.asarray(bids, dtype=float)
    B, N = bids.shape
    transformed = transform_batch(params, bids)
    with_dummy = np.concatenate([transformed, np.zeros((B, 1))], axis=1)
    winners = np.argmax(with_dummy, axis=1)
    spa0, _, _ = _spa0_batch(transformed)
    prices = np.maximum(inverse_transform_batch(params, spa0), 0.0)
    sold = winners < N
    payments = np.where(sold, prices[np.arange(B), np.minimum(winners, N - 1)], 0.0)
    return np.where(sold, winners, -1), payments


def run_hard_auction(params: AuctionNetParams, bids: Sequence[float]) -> HardResult:
    """Winner and payment of the hard auction on one bid profile.

    The winner is the argmax of the transformed bids including the dummy 0 (lowest
    index on ties). When the dummy wins there is no sale.
    """
    winners, payments = hard_auction_batch(params, np.asarray(bids, dtype=float)[None, :])
    winner = int(winners[0])
    if winner < 0:
        return HardResult(None, 0.0)
    return HardResult(winner, float(payments[0]))


def spa_baseline(bids: Sequence[float]) -> HardResult:
    """Second-price auction: the highest bidder pays the second-highest bid."""
    bids = np.asarray(bids, dtype=float)
    if bids.size < 2:
        raise ValueError("a second-price auction needs at least two bids")
    winner = int(np.argmax(bids))
    return HardResult(winner, float(np.max(np.delete(bids, winner))))


def fpa_baseline(bids: Sequence[float]) -> HardResult:
    """First-price auction: the highest bidder pays its own bid."""
    bids = np.asarray(bids, dtype=float)
    if bids.size < 1:
        raise ValueError("a first-price auction needs at least one bid")
    winner = int(np.argmax(bids))
    return HardResult(winner, float(bids[winner]))


def spa_revenue(dataset: np.ndarray) -> float:
    """Mean second-highest bid over an M x N dataset."""
    dataset = np.asarray(dataset, dtype=float)
    return float(np.mean(np.sort(dataset, axis=1)[:, -2]))


def fpa_revenue(dataset: np.ndarray) -> float:
    """Mean highest bid over an M x N dataset."""
    return float(np.mean(np.max(np.asarray(dataset, dtype=float), axis=1)))


def hard_revenue(params: AuctionNetParams, dataset: np.ndarray) -> float:
    """Mean hard-auction revenue over an M x N dataset."""
    _, payments = hard_auction_batch(params, dataset)
    return float(np.mean(payments))


def ir_violations(params: AuctionNetParams, dataset: np.ndarray, chunk: int = 10_000) -> int:
    """Count instances where the hard winner pays more than its bid."""
    dataset = np.asarray(dataset, dtype=float)
    violations = 0
    for start in range(0, dataset.shape[0], chunk):
        block = dataset[start:start + chunk]
        winners, payments = hard_auction_batch(params, block)
        sold = winners >= 0
        winning_bids = block[np.arange(block.shape[0]), np.maximum(winners, 0)]
        violations += int(np.sum(sold & (payments > winning_bids + IR_TOLERANCE)))
    return violations


def ic_regret(
    params: AuctionNetParams,
    bids: Sequence[float],
    bidder: int,
    misreport_grid: Sequence[float],
) -> float:
    """Largest utility gain a bidder gets by misreporting on a grid.

    Args:
        params: Transform parameters.
        bids: True values of all bidders.
        bidder: Index of the deviating bidder.
        misreport_grid: Candidate misreports.

    Returns:
        max over the grid of utility(misreport) - utility(truthful).
    """
    grid = np.asarray(misreport_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("misreport grid must not be empty")
    bids = np.asarray(bids, dtype=float)
    value = bids[bidder]

    profiles = np.vstack([bids[None, :], np.repeat(bids[None, :], grid.size, axis=0)])
    profiles[1:, bidder] = grid
    winners, payments = hard_auction_batch(params, profiles)
    utility = np.where(winners == bidder, value - payments, 0.0)
    return float(np.max(utility[1:] - utility[0]))


def max_ic_regret(
    params: AuctionNetParams,
    dataset: np.ndarray,
    misreport_grid: Sequence[float],
    chunk: int = 50,
) -> float:
    """Worst ic_regret over every instance and bidder of a dataset.

    Instances are evaluated `chunk` at a time, each with every bidder's
    truthful profile and misreports in one hard-auction batch.
    """
    dataset = np.asarray(dataset, dtype=float)
    grid = np.asarray(misreport_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("misreport grid must not be empty")
    if dataset.shape[0] == 0:
        return float(-np.inf)
    M, N = dataset.shape
    G = grid.size + 1
    # Row 0 of each (instance, bidder) block is truthful, rows 1.. are misreports
    reports = np.concatenate([[np.nan], grid])
    bidder_of = np.arange(N)
    worst = -np.inf
    for start in range(0, M, chunk):
        block = dataset[start:start + chunk]
        B = block.shape[0]
        profiles = np.repeat(block[:, None, None, :], N, axis=1)
        profiles = np.repeat(profiles, G, axis=2)
        misreport = np.broadcast_to(reports, (B, N, G)).copy()
        misreport[:, :, 0] = block
        profiles[:, bidder_of, :, bidder_of] = np.moveaxis(misreport, 1, 0)
        winners, payments = hard_auction_batch(params, profiles.reshape(-1, N))
        winners = winners.reshape(B, N, G)
        payments = payments.reshape(B, N, G)
        value = block[:, :, None]
        utility = np.where(winners == bidder_of[None, :, None], value - payments, 0.0)
        worst = max(worst, float(np.max(utility[:, :, 1:] - utility[:, :, :1])))
    return float(worst)


def _top_gap(values: np.ndarray, axis: int) -> np.ndarray:
    # Distance between the largest and second-largest entry along an axis
    if values.shape[axis] < 2:
        return np.full(np.delete(values.shape, axis), np.inf)
    top2 = -np.partition(-values, 1, axis=axis)
    top2 = np.take(top2, [0, 1], axis=axis)
    return np.abs(np.take(top2, 0, axis=axis) - np.take(top2, 1, axis=axis))


def degeneracy_margin(params: AuctionNetParams, batch: np.ndarray) -> float:
    """Smallest distance to a kink of the loss at a batch.

    Covers the max/min selections of the transform and its inverse, the ordering of
    the top three transformed bids, and both ReLU floors. Finite differences are
    only meaningful when this margin exceeds the perturbation's effect.
    """
    batch = np.asarray(batch, dtype=float)
    lines = params.w[None] * batch[:, :, None, None] + params.beta[None]
    group_max = np.max(lines, axis=3)
    gaps = [_top_gap(lines, 3).min(), _top_gap(-group_max, 2).min()]

    transformed = transform_batch(params, batch)
    spa0, _, _ = _spa0_batch(transformed)
    inverted = (spa0[:, :, None, None] - params.beta[None]) / params.w[None]
    group_min = np.min(inverted, axis=3)
    gaps += [_top_gap(-inverted, 3).min(), _top_gap(group_min, 2).min()]

    ordered = -np.sort(-transformed, axis=1)
    depth = min(3, transformed.shape[1])
    if depth >= 2:
        gaps.append(np.min(np.abs(np.diff(ordered[:, :depth], axis=1))))
    gaps.append(np.min(np.abs(transformed)))
    gaps.append(np.min(np.abs(inverse_transform_batch(params, spa0))))
    return float(min(gaps))


def finite_difference_check(
    params: AuctionNetParams, batch: np.ndarray, kappa: float, h: float = 1e-6
) -> float:
    """Max per-coordinate relative error between analytic and central-difference gradients."""
    _, grad = loss_and_gradient(params, batch, kappa)
    worst = 0.0
    for name in ("log_w", "beta"):
        analytic = getattr(grad, name)
        for index in np.ndindex(analytic.shape):
            plus = params.copy()
            getattr(plus, name)[index] += h
            minus = params.copy()
            getattr(minus, name)[index] -= h
            numeric = (loss_and_gradient(plus, batch, kappa)[0] - loss_and_gradient(minus, batch, kappa)[0]) / (2 * h)
            scale = max(abs(analytic[index]), abs(numeric), FD_SCALE_FLOOR)
            worst = max(worst, abs(analytic[index] - numeric) / scale)
    return worst
