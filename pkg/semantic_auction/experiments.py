"""Scenario generation and the revenue and bid-sweep experiments."""

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, TypedDict, Union

import numpy as np
import pandas as pd
from matplotlib.figure import Figure
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats

from .log import get_logger
from .myerson_auction import (
    AuctionConfig,
    AuctionNetParams,
    hard_revenue,
    spa_revenue,
    train,
)
from .param_store import atomic_write_text
from .semantic_valuation import builtin_curves, jitter_scores, lookup_scores
from .wpcn_channel import CALIBRATION_SEED, WpcnParams, bits_budget_batch, sample_channels

logger = get_logger(__name__)

J_PRESETS: Dict[str, Tuple[float, float]] = {
    "low_j": (0.1, 0.4),
    "high_j": (0.6, 0.9),
}

SWEEP_PARAMETERS = ("tau", "d_AU", "L", "N_s")

DEFAULT_SWEEP_VALUES: Dict[str, List[float]] = {
    "tau": [0.8, 0.9, 1.0, 1.1, 1.2],
    "d_AU": [8.0, 9.0, 10.0, 11.0, 12.0],
    "L": [20, 22, 24, 26, 28, 30, 32],
    "N_s": [15, 18, 21, 24, 27, 30],
}

# Sign of the Spearman correlation of the mean bid with the swept value
EXPECTED_TREND: Dict[str, int] = {"tau": 1, "d_AU": -1, "L": -1, "N_s": -1}

# Range converged revenues are expected to reach with the calibrated gain
REVENUE_BAND: Tuple[float, float] = (0.70, 0.95)

HOLDOUT_SEED_OFFSET = 7919
VALIDATION_SEED_OFFSET = 104729


class ScenarioConfig(BaseModel):
    """How device workloads, positions and preferences are drawn."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    wpcn: WpcnParams = Field(default_factory=WpcnParams)
    n_devices: int = Field(default=10, ge=2)
    n_samples: int = Field(default=1000, ge=1)
    j_range: Tuple[float, float] = J_PRESETS["high_j"]
    Ns_range: Tuple[int, int] = (15, 30)
    L_range: Tuple[int, int] = (20, 32)
    b_f: int = Field(default=32, ge=1)
    d_range: Tuple[float, float] = (8.0, 10.0)
    seed: int = 0
    jitter: bool = True

    @model_validator(mode="after")
    def _check_ranges(self) -> "ScenarioConfig":
        for name in ("j_range", "Ns_range", "L_range", "d_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must satisfy lo <= hi, got ({lo}, {hi})")
        if not (0.0 <= self.j_range[0] and self.j_range[1] <= 1.0):
            raise ValueError(f"j_range must lie in [0, 1], got {self.j_range}")
        if self.Ns_range[0] < 1 or self.L_range[0] < 1:
            raise ValueError("Ns_range and L_range must start at 1 or more")
        if self.d_range[0] <= 0:
            raise ValueError(f"d_range must be positive, got {self.d_range}")
        return self

    def updated(self, **changes) -> "ScenarioConfig":
        """Validated copy with some fields replaced."""
        data = self.model_dump()
        data.update(changes)
        return ScenarioConfig.model_validate(data)


class MetricsRow(TypedDict):
    """One sweep point for one preference preset."""
    sweep_value: float
    preset: str
    avg_bid: float
    avg_highest_bid: float
    se_bid: float


class TrendReport(TypedDict):
    preset: str
    spearman: float
    expected_sign: int
    saturating: bool


@dataclass
class RevenueExperiment:
    """Output of the revenue-vs-iteration experiment."""

    table: pd.DataFrame
    params: Dict[str, AuctionNetParams] = field(default_factory=dict)
    holdout: Dict[str, Dict[str, float]] = field(default_factory=dict)


def generate_dataset(config: ScenarioConfig) -> np.ndarray:
    """Draw an M x N matrix of truthful bids.

    Each device draws a distance, a text workload and a preference, gets a channel
    and a bit budget, looks up and jitters its semantic scores and bids its valuation.
    Devices below one feature dimension bid exactly 0.

    Args:
        config: Scenario configuration.

    Returns:
        Bids of shape (n_samples, n_devices).
    """
    rng = np.random.default_rng(config.seed)
    shape = (config.n_samples, config.n_devices)
    sim_curve, bleu_curve = builtin_curves()

    d_AU = rng.uniform(config.d_range[0], config.d_range[1], size=shape)
    N_s = rng.integers(config.Ns_range[0], config.Ns_range[1] + 1, size=shape)
    L = rng.integers(config.L_range[0], config.L_range[1] + 1, size=shape)
    j = rng.uniform(config.j_range[0], config.j_range[1], size=shape)

    h_norm2, g_norm2 = sample_channels(rng, config.wpcn, d_AU)
    bits = bits_budget_batch(config.wpcn, h_norm2, g_norm2)
    D = bits / (N_s * L * config.b_f)

    sim = lookup_scores(sim_curve, D)
    bleu = lookup_scores(bleu_curve, D)
    if config.jitter:
        feasible = D >= 1.0
        sim = np.where(feasible, jitter_scores(rng, sim, sim_curve.mu_d), 0.0)
        bleu = np.where(feasible, jitter_scores(rng, bleu, bleu_curve.mu_d), 0.0)
    return j * sim + (1.0 - j) * bleu


def holdout_config(config: ScenarioConfig, n_samples: Optional[int] = None) -> ScenarioConfig:
    """Same scenario with a disjoint seed, for evaluation."""
    return config.updated(
        seed=config.seed + HOLDOUT_SEED_OFFSET,
        n_samples=n_samples or config.n_samples,
    )


def validation_config(config: ScenarioConfig, n_samples: Optional[int] = None) -> ScenarioConfig:
    """Same scenario with a third seed, for checkpoint selection during training."""
    return config.updated(
        seed=config.seed + VALIDATION_SEED_OFFSET,
        n_samples=n_samples or config.n_samples,
    )


def split_dataset(
    bids: np.ndarray, holdout_fraction: float, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Shuffle rows and split them into (train, held-out)."""
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    order = rng.permutation(bids.shape[0])
    cut = int(round(bids.shape[0] * (1.0 - holdout_fraction)))
    return bids[order[:cut]], bids[order[cut:]]


def revenue_experiment(
    config: ScenarioConfig,
    auction_config: AuctionConfig,
    n_holdout: Optional[int] = None,
) -> RevenueExperiment:
    """Train the auction for both preference presets and tabulate revenue per iteration.

    Args:
        config: Scenario configuration; its j_range is replaced by each preset.
        auction_config: Network and training schedule.
        n_holdout: Size of the validation and held-out sets; defaults to n_samples.
            Checkpoints are selected on the validation set and reported on the
            held-out set.

    Returns:
        A table with columns iteration, dl_rev_low_j, dl_rev_high_j, spa_low_j,
        spa_high_j, plus the trained parameters and held-out revenues per preset.
    """
    columns: Dict[str, np.ndarray] = {"iteration": np.arange(1, auction_config.iterations + 1)}
    result = RevenueExperiment(table=pd.DataFrame())

    for preset, j_range in J_PRESETS.items():
        scenario = config.updated(j_range=j_range)
        dataset = generate_dataset(scenario)
        validation = generate_dataset(validation_config(scenario, n_holdout))
        holdout = generate_dataset(holdout_config(scenario, n_holdout))

        params, history = train(auction_config, dataset, holdout=validation)
        spa = spa_revenue(dataset)
        columns[f"dl_rev_{preset}"] = np.asarray(history.train_revenue)
        columns[f"spa_{preset}"] = np.full(auction_config.iterations, spa)

        result.params[preset] = params
        result.holdout[preset] = {
            "dl_revenue": hard_revenue(params, holdout),
            "spa_revenue": spa_revenue(holdout),
            "train_spa_revenue": spa,
            "best_iteration": float(history.best_iteration),
        }
        logger.info(
            "%s: held-out revenue %.4f vs SPA %.4f (checkpoint %d)",
            preset,
            result.holdout[preset]["dl_revenue"],
            result.holdout[preset]["spa_revenue"],
            history.best_iteration,
        )

    order = ["iteration", "dl_rev_low_j", "dl_rev_high_j", "spa_low_j", "spa_high_j"]
    result.table = pd.DataFrame(columns)[order]
    return result


class RevenueBandReport(TypedDict):
    lo: float
    hi: float
    in_band: bool


def revenue_band(result: RevenueExperiment, window: int = 100) -> RevenueBandReport:
    """Achieved range of converged revenue across presets, checked against REVENUE_BAND.

    Converged revenue is the mean soft revenue over the last `window` iterations
    and the held-out hard revenue of the returned parameters. Falling outside the
    band is logged, not raised.
    """
    values: List[float] = []
    for preset in result.params:
        tail = result.table[f"dl_rev_{preset}"].iloc[-window:]
        if len(tail):
            values.append(float(tail.mean()))
        values.append(float(result.holdout[preset]["dl_revenue"]))
    if not values:
        raise ValueError("revenue experiment has no presets")
    lo, hi = min(values), max(values)
    in_band = REVENUE_BAND[0] <= lo and hi <= REVENUE_BAND[1]
    log = logger.info if in_band else logger.warning
    log("converged revenue band [%.4f, %.4f], expected [%.2f, %.2f]", lo, hi, *REVENUE_BAND)
    return RevenueBandReport(lo=lo, hi=hi, in_band=in_band)


def _sweep_point(config: ScenarioConfig, parameter: str, value: float, seed: int) -> List[MetricsRow]:
    if parameter == "tau":
        base = config.updated(wpcn={**config.wpcn.model_dump(), "tau": float(value)}, seed=seed)
    elif parameter == "d_AU":
        base = config.updated(d_range=(float(value), float(value)), seed=seed)
    elif parameter == "L":
        base = config.updated(L_range=(int(value), int(value)), seed=seed)
    else:
        base = config.updated(Ns_range=(int(value), int(value)), seed=seed)

    rows: List[MetricsRow] = []
    for preset, j_range in J_PRESETS.items():
        bids = generate_dataset(base.updated(j_range=j_range))
        rows.append({
            "sweep_value": float(value),
            "preset": preset,
            "avg_bid": float(np.mean(bids)),
            "avg_highest_bid": float(np.mean(np.max(bids, axis=1))),
            "se_bid": float(np.std(bids, ddof=1) / np.sqrt(bids.size)),
        })
    logger.info("sweep %s=%s done", parameter, value)
    return rows


def sweep(
    config: ScenarioConfig,
    parameter: str,
    values: Optional[Sequence[float]] = None,
    workers: int = 1,
) -> List[MetricsRow]:
    """Average bid and average highest bid as one scenario parameter varies.

    The random range of the swept parameter collapses to the fixed value. Point i
    uses seed config.seed + i, so serial and parallel runs agree.

    Args:
        config: Base scenario.
        parameter: One of tau, d_AU, L, N_s.
        values: Points to evaluate; defaults to DEFAULT_SWEEP_VALUES.
        workers: Number of threads evaluating points.

    Returns:
        One MetricsRow per (value, preset), ordered by value then preset.

    Raises:
        ValueError: For an unknown parameter name.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter '{parameter}', expected one of {SWEEP_PARAMETERS}")
    points = list(values) if values is not None else DEFAULT_SWEEP_VALUES[parameter]
    jobs = [(config, parameter, value, config.seed + i) for i, value in enumerate(points)]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _sweep_point(*job), jobs))
    else:
        results = [_sweep_point(*job) for job in jobs]
    return [row for rows in results for row in rows]


def trend_statistics(rows: Sequence[MetricsRow], parameter: str) -> List[TrendReport]:
    """Spearman correlation of avg_bid with the swept value and the saturation flag, per preset."""
    reports: List[TrendReport] = []
    for preset in J_PRESETS:
        series = sorted((r for r in rows if r["preset"] == preset), key=lambda r: r["sweep_value"])
        x = [r["sweep_value"] for r in series]
        highest = [r["avg_highest_bid"] for r in series]
        rho = float("nan")
        if len(series) > 1:
            rho, _ = stats.spearmanr(x, [r["avg_bid"] for r in series])
        saturating = len(highest) >= 3 and (highest[-1] - highest[-2]) < (highest[1] - highest[0])
        reports.append({
            "preset": preset,
            "spearman": float(rho),
            "expected_sign": EXPECTED_TREND[parameter],
            "saturating": bool(saturating),
        })
    return reports


def calibrate_budget_gain(
    config: ScenarioConfig,
    target_median_D: float = 8.0,
    d_AU: float = 10.0,
    lo: float = 1.0,
    hi: float = 1e4,
    tol: float = 1e-4,
    n_samples: int = 20000,
    seed: int = CALIBRATION_SEED,
) -> float:
    """Bisect the budget gain until the median feature dimension at d_AU hits the target.

    Channel and workload draws are fixed across bisection steps, so the median is
    monotone in the gain.

    Args:
        config: Scenario whose physical constants and N_s / L / b_f ranges are used.
        target_median_D: Desired median feature dimension.
        d_AU: Distance at which the median is measured.
        lo: Lower end of the gain bracket (>= 1).
        hi: Upper end of the gain bracket.
        tol: Relative width at which bisection stops.
        n_samples: Number of devices drawn.
        seed: Calibration seed.

    Returns:
        The calibrated gain.

    Raises:
        ValueError: If the target is not reached inside the bracket.
    """
    rng = np.random.default_rng(seed)
    N_s = rng.integers(config.Ns_range[0], config.Ns_range[1] + 1, size=n_samples)
    L = rng.integers(config.L_range[0], config.L_range[1] + 1, size=n_samples)
    h_norm2, g_norm2 = sample_channels(rng, config.wpcn, np.full(n_samples, d_AU))
    workload = N_s * L * config.b_f

    def median_dim(gain: float) -> float:
        params = WpcnParams.model_validate({**config.wpcn.model_dump(), "budget_gain": gain})
        return float(np.median(bits_budget_batch(params, h_norm2, g_norm2) / workload))

    if median_dim(hi) < target_median_D:
        raise ValueError(f"median D stays below {target_median_D} even at budget_gain={hi}")
    if median_dim(lo) >= target_median_D:
        return lo
    while hi / lo > 1.0 + tol:
        mid = float(np.sqrt(lo * hi))
        if median_dim(mid) < target_median_D:
            lo = mid
        else:
            hi = mid
        logger.debug("calibration bracket [%.6g, %.6g]", lo, hi)
    return hi


def bids_frame(bids: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame(bids, columns=[f"bidder_{n}" for n in range(bids.shape[1])])


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write a table as CSV atomically."""
    return atomic_write_text(path, frame.to_csv(index=False, float_format="%.10g"))


def read_bids(path: Union[str, Path]) -> np.ndarray:
    """Load a bid matrix written by write_csv(bids_frame(...))."""
    return pd.read_csv(path).to_numpy(dtype=float)


def write_sweep_chart(rows: Sequence[MetricsRow], parameter: str, path: Union[str, Path]) -> Path:
    """Line chart of both bid series per preset, saved as SVG."""
    fig = Figure(figsize=(6, 4))
    ax = fig.subplots()
    styles = {"low_j": "tab:red", "high_j": "tab:blue"}
    for preset, j_range in J_PRESETS.items():
        series = sorted((r for r in rows if r["preset"] == preset), key=lambda r: r["sweep_value"])
        x = [r["sweep_value"] for r in series]
        label = f"j ~ U[{j_range[0]}, {j_range[1]}]"
        ax.plot(x, [r["avg_highest_bid"] for r in series], color=styles[preset], marker="o",
                label=f"average highest bid, {label}")
        ax.plot(x, [r["avg_bid"] for r in series], color=styles[preset], linestyle="--",
                label=f"average bid, {label}")
    ax.set_xlabel(parameter)
    ax.set_ylabel("bid")
    ax.grid(True, linestyle="--")
    ax.legend(fontsize="small")

    buffer = io.StringIO()
    fig.savefig(buffer, format="svg")
    return atomic_write_text(path, buffer.getvalue())
