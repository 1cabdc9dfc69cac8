"""Publisher-loss analysis: closed forms, exhaustive oracle, Monte Carlo.

Setting: n bidders with bids d_1 >= ... >= d_n land independently and
uniformly on k >= 2 networks. Honest networks forward their internal
runner-up as the optional bid; "liars" withhold it (optional 0) and pocket
the spread. The publisher's loss per auction is the true global second
price minus the exchange clearing price.

Three routes to the same quantity keep each other honest:

  closed_form_publisher_loss  exact series  sum_i (d_{i+1} - d_{i+2}) / k^i
                              (zero-padded past d_n), the expected loss
                              when the winning network always lies
  enumerate_losses            brute force over all k^n assignments,
                              running the real bidding/auction pipeline
                              with exact integer arithmetic
  simulate_losses             seeded Monte Carlo over random assignments
                              (and optionally uniform random bids)

Closed forms and enumeration use exact rationals; floats appear only in
Monte Carlo standard errors.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .auction import AuctionOutcome, run_osp_auction, second_price_oracle
from .errors import ConfigError, InstanceTooLarge, KTooSmall, NotSorted
from .money import MICROS_PER_UNIT, Micros, require_micros
from .networks import AdvertiserBook, HonestSecondPrice, PocketDifference, form_exchange_bid

ENUMERATION_GUARD = 10_000_000
_CHUNK = 1 << 16  # trials per vectorized block; fixed so results never depend on it


def _check_sorted_bids(sorted_bids) -> list[int]:
    bids = list(sorted_bids)
    for amount in bids:
        require_micros(amount)
    if any(bids[i] < bids[i + 1] for i in range(len(bids) - 1)):
        raise NotSorted("bids must be non-increasing")
    return bids


def closed_form_publisher_loss(sorted_bids, k: int) -> Fraction:
    """Expected publisher loss, in micros, when the winner's network lies.

    Computes sum_{i=1}^{n} (d_{i+1} - d_{i+2}) / k^i with d_m = 0 for
    m > n, exactly. This is the magnitude of the price shortfall: the
    runner-up bid minus the expected clearing price when the network
    holding the top bid withholds its optional bid.
    """
    if k < 2:
        raise KTooSmall(f"need k >= 2, got {k}")
    d = _check_sorted_bids(sorted_bids)
    d += [0, 0]
    return sum(
        (Fraction(d[i] - d[i + 1], k**i) for i in range(1, len(d) - 1)),
        Fraction(0),
    )


def loss_upper_bound(d2: Micros, k: int, t: int) -> Fraction:
    """Bound t * d2 / k^2 on the expected loss with t lying networks.

    At t = k this is d2 / k, the loss bound conditioned on the winning
    network lying.
    """
    require_micros(d2, "runner-up bid")
    if k < 2:
        raise KTooSmall(f"need k >= 2, got {k}")
    if not 0 <= t <= k:
        raise ConfigError(f"liar count {t} outside 0..{k}")
    return Fraction(t * d2, k * k)


class UniformExpectation(NamedTuple):
    """Exact unit-interval expectations for i.i.d. uniform bids."""

    loss: Fraction
    expected_runner_up: Fraction  # E of the second-highest of n uniforms


def expected_loss_uniform(n: int, k: int) -> UniformExpectation:
    """Exact expected loss for n i.i.d. uniform-[0,1] bids, winner lying.

    The expected gap between consecutive order statistics is 1/(n+1), so
    the loss series becomes sum_{i=1}^{n-1} 1/((n+1) k^i). The sum stops
    at n-1: the i = n term pairs two order statistics past the sample and
    is identically zero. Also returns E[d_2] = 1 - 2/(n+1), the revenue a
    truthful market would earn.
    """
    if n < 1:
        raise ConfigError(f"need n >= 1, got {n}")
    if k < 2:
        raise KTooSmall(f"need k >= 2, got {k}")
    loss = sum((Fraction(1, (n + 1) * k**i) for i in range(1, n)), Fraction(0))
    return UniformExpectation(loss, Fraction(n - 1, n + 1))


def _rank_ids(n: int) -> list[str]:
    width = len(str(n))
    return [f"a{rank:0{width}d}" for rank in range(1, n + 1)]


def _network_ids(k: int) -> list[str]:
    width = len(str(k))
    return [f"net{g + 1:0{width}d}" for g in range(k)]


def pipeline_loss(
    sorted_bids, assignment, k: int, liar_count: int, reserve: Micros = 0
) -> int:
    """Publisher loss for one explicit bidder-to-network assignment.

    Runs the real pipeline: build books, form exchange bids (networks
    1..liar_count withhold the optional bid, the rest are honest), clear
    the auction, and compare with the global second-price oracle. Both
    sides fill under exactly the same condition, so an unfilled auction
    loses nothing.
    """
    d = _check_sorted_bids(sorted_bids)
    ids = _rank_ids(len(d))
    net_ids = _network_ids(k)
    entries: list[list[tuple[str, int]]] = [[] for _ in range(k)]
    for rank, g in enumerate(assignment):
        entries[g].append((ids[rank], d[rank]))

    exchange_bids = []
    for g in range(k):
        if not entries[g]:
            continue
        book = AdvertiserBook(net_ids[g], tuple(entries[g]))
        policy = PocketDifference() if g < liar_count else HonestSecondPrice()
        bid = form_exchange_bid(book, policy)
        if bid is not None:
            exchange_bids.append(bid)

    outcome = run_osp_auction(exchange_bids, reserve)
    oracle = second_price_oracle(list(zip(ids, d)), reserve)
    if not outcome.filled:
        return 0
    return oracle.price - outcome.clearing_price


def enumerate_losses(sorted_bids, k: int, t: int) -> Fraction:
    """Exact expected loss by exhausting all k^n equiprobable assignments.

    Every assignment goes through the real bidding and auction pipeline
    in integer arithmetic; the average is the exact rational that the
    closed forms must reproduce. Guarded at k^n <= 10^7 assignments.
    """
    d = _check_sorted_bids(sorted_bids)
    if k < 2:
        raise KTooSmall(f"need k >= 2, got {k}")
    if not 0 <= t <= k:
        raise ConfigError(f"liar count {t} outside 0..{k}")
    n = len(d)
    total_assignments = k**n
    if total_assignments > ENUMERATION_GUARD:
        raise InstanceTooLarge(f"{k}^{n} = {total_assignments} assignments exceed the guard")

    ids = _rank_ids(n)
    net_ids = _network_ids(k)
    policies = [PocketDifference() if g < t else HonestSecondPrice() for g in range(k)]
    oracle = second_price_oracle(list(zip(ids, d)), 0)
    oracle_price = oracle.price if oracle.filled else 0

    total = 0
    for assignment in itertools.product(range(k), repeat=n):
        entries: list[list[tuple[str, int]]] = [[] for _ in range(k)]
        for rank, g in enumerate(assignment):
            entries[g].append((ids[rank], d[rank]))
        exchange_bids = []
        for g in range(k):
            if entries[g]:
                bid = form_exchange_bid(AdvertiserBook(net_ids[g], tuple(entries[g])), policies[g])
                if bid is not None:
                    exchange_bids.append(bid)
        outcome = run_osp_auction(exchange_bids, 0)
        total += oracle_price - outcome.clearing_price
    return Fraction(total, total_assignments)


def fill_rate(outcomes: Iterable[AuctionOutcome]) -> Fraction:
    """Fraction of auctions that returned an ad; 0 for no auctions."""
    filled = total = 0
    for outcome in outcomes:
        total += 1
        filled += outcome.filled
    return Fraction(filled, total) if total else Fraction(0)


# ---------------------------------------------------------------------------
# Monte Carlo simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedBids:
    """Every trial reuses this non-increasing bid vector (micros)."""

    bids: tuple[Micros, ...]

    def __post_init__(self):
        if not self.bids:
            raise ConfigError("fixed bid vector must not be empty")
        _check_sorted_bids(self.bids)

    @property
    def n(self) -> int:
        return len(self.bids)


@dataclass(frozen=True)
class UniformBids:
    """Each trial draws n i.i.d. uniform unit-interval bids, in micros."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"need at least one bidder, got n={self.n}")


BidModel = FixedBids | UniformBids


@dataclass(frozen=True)
class SimulationConfig:
    bid_model: BidModel
    k: int
    liar_count: int
    trials: int
    seed: int
    reserve: Micros = 0

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError(f"need k >= 2 networks, got {self.k}")
        if not 0 <= self.liar_count <= self.k:
            raise ConfigError(f"liar count {self.liar_count} outside 0..{self.k}")
        if self.trials < 1:
            raise ConfigError(f"need at least one trial, got {self.trials}")
        require_micros(self.reserve, "reserve")

    @property
    def n(self) -> int:
        return self.bid_model.n


@dataclass(frozen=True)
class LossReport:
    """Empirical vs. analytic publisher loss for one configuration.

    Money fields are micros. Means are exact rationals (integer losses
    averaged over trials); standard errors are floats. closed_form is
    None when no closed form applies (liars strictly between 0 and k, or
    a nonzero reserve).
    """

    trials: int
    mean_loss: Fraction
    std_error: float
    closed_form: Fraction | None
    upper_bound: Fraction
    revenue_baseline: Fraction
    mean_revenue: Fraction
    revenue_std_error: float
    fill_rate: Fraction


class TrialBlock(NamedTuple):
    """One vectorized block of trials, exposed for cross-checking."""

    start: int
    bids: np.ndarray  # (m, n) int64 micros, rows sorted non-increasing
    assignment: np.ndarray  # (m, n) small ints in [0, k)
    losses: np.ndarray  # (m,) int64 micros
    revenues: np.ndarray  # (m,) int64 micros, oracle price when filled
    filled: np.ndarray  # (m,) bool


def _iter_trial_blocks(config: SimulationConfig) -> Iterator[TrialBlock]:
    """Run the simulation in fixed-size blocks.

    Block c draws from a generator seeded by (seed, c), so every trial's
    randomness is a fixed function of the seed and its index and the
    aggregate cannot depend on evaluation order (losses are summed as
    exact integers by the caller).
    """
    n, k, t = config.n, config.k, config.liar_count
    seed_entropy = config.seed & 0xFFFFFFFFFFFFFFFF
    fixed_row = (
        np.asarray(config.bid_model.bids, dtype=np.int64)
        if isinstance(config.bid_model, FixedBids)
        else None
    )

    for chunk_index, start in enumerate(range(0, config.trials, _CHUNK)):
        m = min(_CHUNK, config.trials - start)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed_entropy, chunk_index])))
        # Draw full chunks and slice, so trial i's randomness depends only
        # on (seed, i), never on the total trial count.
        if fixed_row is not None:
            bids = np.broadcast_to(fixed_row, (m, n))
        else:
            bids = (rng.random((_CHUNK, n)) * MICROS_PER_UNIT).astype(np.int64)[:m]
            bids[:, ::-1].sort(axis=1)
        assignment = rng.integers(0, k, size=(_CHUNK, n), dtype=np.int16)[:m]

        rows = np.arange(m)
        tops = np.empty((k, m), dtype=np.int64)
        seconds = np.empty((k, m), dtype=np.int64)
        for g in range(k):
            vals = np.where(assignment == g, bids, np.int64(-1))
            tops[g] = vals.max(axis=1)
            vals[rows, vals.argmax(axis=1)] = -1
            seconds[g] = vals.max(axis=1)

        win = tops.argmax(axis=0)  # first max: lowest network index wins ties
        winner_top = tops[win, rows]
        tops[win, rows] = -1
        others = np.maximum(tops.max(axis=0), 0)
        tops[win, rows] = winner_top

        optional = np.where(win < t, 0, np.maximum(seconds[win, rows], 0))
        filled = winner_top >= config.reserve
        price = np.maximum(np.maximum(others, optional), config.reserve)
        runner_up = bids[:, 1] if n > 1 else np.zeros(m, dtype=np.int64)
        oracle_price = np.maximum(runner_up, config.reserve)

        losses = np.where(filled, oracle_price - price, 0)
        revenues = np.where(filled, oracle_price, 0)
        yield TrialBlock(start, bids, assignment, losses, revenues, filled)


def _mean_and_se(total: int, total_sq: float, trials: int) -> tuple[Fraction, float]:
    mean = Fraction(total, trials)
    if trials < 2:
        return mean, 0.0
    variance = max(total_sq - trials * float(mean) ** 2, 0.0) / (trials - 1)
    return mean, math.sqrt(variance / trials)


def simulate_losses(config: SimulationConfig) -> LossReport:
    """Monte Carlo estimate of the publisher loss under the config.

    Per trial: draw bids (fixed vector or fresh uniforms, sorted), assign
    bidders uniformly to networks, let networks 1..liar_count withhold
    the optional bid while the rest stay honest, clear the exchange at
    the configured reserve, and score the loss against the global
    second-price oracle. Deterministic given the seed; with uniform bids
    the sub-micro flooring of draws is far below Monte Carlo resolution.
    """
    loss_total = 0
    loss_sq = 0.0
    rev_total = 0
    rev_sq = 0.0
    filled_total = 0
    for block in _iter_trial_blocks(config):
        loss_total += int(block.losses.sum(dtype=object))
        loss_sq += float((block.losses.astype(np.float64) ** 2).sum())
        rev_total += int(block.revenues.sum(dtype=object))
        rev_sq += float((block.revenues.astype(np.float64) ** 2).sum())
        filled_total += int(block.filled.sum())

    mean_loss, loss_se = _mean_and_se(loss_total, loss_sq, config.trials)
    mean_rev, rev_se = _mean_and_se(rev_total, rev_sq, config.trials)

    t, k = config.liar_count, config.k
    if isinstance(config.bid_model, FixedBids):
        d2 = config.bid_model.bids[1] if config.n > 1 else 0
        baseline = Fraction(d2)
    else:
        uniform = expected_loss_uniform(config.n, k)
        baseline = uniform.expected_runner_up * MICROS_PER_UNIT

    closed: Fraction | None = None
    if config.reserve == 0:
        if t == 0:
            closed = Fraction(0)
        elif t == k:
            if isinstance(config.bid_model, FixedBids):
                closed = closed_form_publisher_loss(config.bid_model.bids, k)
            else:
                closed = expected_loss_uniform(config.n, k).loss * MICROS_PER_UNIT

    return LossReport(
        trials=config.trials,
        mean_loss=mean_loss,
        std_error=loss_se,
        closed_form=closed,
        upper_bound=Fraction(t, k * k) * baseline,
        revenue_baseline=baseline,
        mean_revenue=mean_rev,
        revenue_std_error=rev_se,
        fill_rate=Fraction(filled_total, config.trials),
    )


def format_report_table(
    config: SimulationConfig,
    report: LossReport,
    exact_enumeration: Fraction | None = None,
) -> str:
    """Human-readable report block; money shown in units, six decimals."""
    from .money import format_micros  # local: analysis stays importable standalone

    if isinstance(config.bid_model, FixedBids):
        bids_text = "fixed " + ", ".join(format_micros(b) for b in config.bid_model.bids)
    else:
        bids_text = f"uniform[0,1) x {config.n}"
    rows = [
        ("bids", bids_text),
        ("networks (k)", str(config.k)),
        ("liars (t)", str(config.liar_count)),
        ("trials", str(config.trials)),
        ("seed", str(config.seed)),
        ("reserve", format_micros(config.reserve)),
        ("fill rate", f"{float(report.fill_rate):.4f}"),
        ("mean loss", format_micros(report.mean_loss)),
        ("std error", format_micros(report.std_error)),
    ]
    if report.closed_form is not None:
        rows.append(("closed form", format_micros(report.closed_form)))
    if exact_enumeration is not None:
        rows.append(("exact enumeration", format_micros(exact_enumeration)))
    rows += [
        ("upper bound", format_micros(report.upper_bound)),
        ("revenue baseline", format_micros(report.revenue_baseline)),
        ("mean revenue", format_micros(report.mean_revenue)),
    ]
    width = max(len(label) for label, _ in rows)
    return "\n".join(f"{label:<{width}}  {value}" for label, value in rows)


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------

REPORT_COLUMNS = [
    "bid_model",
    "n",
    "k",
    "liars",
    "trials",
    "seed",
    "reserve_micros",
    "mean_loss_micros",
    "std_error_micros",
    "closed_form_micros",
    "upper_bound_micros",
    "revenue_baseline_micros",
    "mean_revenue_micros",
    "revenue_std_error_micros",
    "fill_rate",
]


def _encode_bid_model(model: BidModel) -> str:
    if isinstance(model, UniformBids):
        return "uniform"
    return "fixed:" + ";".join(str(b) for b in model.bids)


def _decode_bid_model(text: str, n: int) -> BidModel:
    if text == "uniform":
        return UniformBids(n)
    if text.startswith("fixed:"):
        return FixedBids(tuple(int(b) for b in text[len("fixed:"):].split(";")))
    raise ConfigError(f"unknown bid model {text!r}")


def write_reports_csv(path, rows: Iterable[tuple[SimulationConfig, LossReport]]) -> None:
    """Write (config, report) rows; rationals as p/q so re-parsing is exact."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_COLUMNS)
        for config, report in rows:
            writer.writerow(
                [
                    _encode_bid_model(config.bid_model),
                    config.n,
                    config.k,
                    config.liar_count,
                    config.trials,
                    config.seed,
                    config.reserve,
                    str(report.mean_loss),
                    repr(report.std_error),
                    "" if report.closed_form is None else str(report.closed_form),
                    str(report.upper_bound),
                    str(report.revenue_baseline),
                    str(report.mean_revenue),
                    repr(report.revenue_std_error),
                    str(report.fill_rate),
                ]
            )


def read_reports_csv(path) -> list[tuple[SimulationConfig, LossReport]]:
    rows = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        for record in reader:
            config = SimulationConfig(
                bid_model=_decode_bid_model(record["bid_model"], int(record["n"])),
                k=int(record["k"]),
                liar_count=int(record["liars"]),
                trials=int(record["trials"]),
                seed=int(record["seed"]),
                reserve=int(record["reserve_micros"]),
            )
            report = LossReport(
                trials=int(record["trials"]),
                mean_loss=Fraction(record["mean_loss_micros"]),
                std_error=float(record["std_error_micros"]),
                closed_form=(
                    Fraction(record["closed_form_micros"])
                    if record["closed_form_micros"]
                    else None
                ),
                upper_bound=Fraction(record["upper_bound_micros"]),
                revenue_baseline=Fraction(record["revenue_baseline_micros"]),
                mean_revenue=Fraction(record["mean_revenue_micros"]),
                revenue_std_error=float(record["revenue_std_error_micros"]),
                fill_rate=Fraction(record["fill_rate"]),
            )
            rows.append((config, report))
    return rows
