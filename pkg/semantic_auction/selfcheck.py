"""Property checks run by the `selfcheck` subcommand."""

from typing import List, NamedTuple

import numpy as np

from .myerson_auction import (
    degeneracy_margin,
    finite_difference_check,
    hard_auction_batch,
    init_params,
    inverse_transform_batch,
    ir_violations,
    random_params,
    transform_batch,
)

GRADIENT_TOLERANCE = 1e-4
ROUNDTRIP_TOLERANCE = 1e-9
KINK_MARGIN = 1e-4
# Training temperature, checked with a finer difference step
SHARP_KAPPA = 1000.0
SHARP_STEP = 1e-7


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def check_gradient(
    rng: np.random.Generator,
    points: int = 100,
    N: int = 3,
    Q: int = 2,
    S: int = 3,
    batch_size: int = 4,
    kappa: float = 10.0,
    h: float = 1e-6,
    name: str = "gradient",
) -> CheckResult:
    """Analytic vs central-difference gradients at random points away from kinks.

    Sharper softmax temperatures need a smaller step h to keep the truncation
    error of the central difference under GRADIENT_TOLERANCE.
    """
    worst = 0.0
    checked = 0
    attempts = 0
    while checked < points:
        attempts += 1
        if attempts > 50 * points:
            return CheckResult(name, False, f"only {checked} non-degenerate points found")
        params = random_params(rng, N, Q, S)
        batch = rng.uniform(0.0, 1.0, size=(batch_size, N))
        if degeneracy_margin(params, batch) < KINK_MARGIN:
            continue
        worst = max(worst, finite_difference_check(params, batch, kappa, h=h))
        checked += 1
    return CheckResult(
        name, worst < GRADIENT_TOLERANCE, f"kappa={kappa:g}: max relative error {worst:.3e} over {checked} points"
    )


def check_roundtrip(rng: np.random.Generator, samples: int = 10_000, Q: int = 5, S: int = 10) -> CheckResult:
    """Phi^-1(Phi(b)) == b for independent random transforms and bids in [0, 1.5]."""
    # One bidder per sample: each column owns its own parameters
    params = random_params(rng, samples, Q, S)
    bids = rng.uniform(0.0, 1.5, size=(1, samples))
    recovered = inverse_transform_batch(params, transform_batch(params, bids))
    worst = float(np.max(np.abs(recovered - bids)))
    return CheckResult("roundtrip", worst < ROUNDTRIP_TOLERANCE, f"max error {worst:.3e} over {samples} bids")


def check_identity_spa(rng: np.random.Generator, instances: int = 10_000, N: int = 10) -> CheckResult:
    """At initialisation the hard auction equals the second-price auction exactly."""
    bids = rng.uniform(0.0, 1.0, size=(instances, N))
    winners, payments = hard_auction_batch(init_params(N, 5, 10), bids)
    spa_winners = np.argmax(bids, axis=1)
    spa_payments = np.sort(bids, axis=1)[:, -2]
    mismatches = int(np.sum((winners != spa_winners) | (payments != spa_payments)))
    return CheckResult("identity_spa", mismatches == 0, f"{mismatches} mismatches over {instances} instances")


def check_ir(rng: np.random.Generator, instances: int = 10_000, N: int = 10, chunk: int = 2_000) -> CheckResult:
    """No hard winner pays more than its bid under random parameters."""
    violations = 0
    for start in range(0, instances, chunk):
        size = min(chunk, instances - start)
        params = random_params(rng, N, 5, 10)
        violations += ir_violations(params, rng.uniform(0.0, 1.0, size=(size, N)))
    return CheckResult("ir", violations == 0, f"{violations} violations over {instances} instances")


def run_selfcheck(seed: int = 0, gradient_points: int = 100) -> List[CheckResult]:
    """Run every check with one seeded generator."""
    rng = np.random.default_rng(seed)
    return [
        check_gradient(rng, points=gradient_points),
        check_gradient(rng, points=gradient_points, kappa=SHARP_KAPPA, h=SHARP_STEP, name="gradient_sharp"),
        check_roundtrip(rng),
        check_identity_spa(rng),
        check_ir(rng),
    ]
