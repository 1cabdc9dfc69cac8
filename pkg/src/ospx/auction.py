"""Optional-second-price auction core.

Each participating network submits a mandatory bid (the most it will pay)
and an optional bid no larger than it. The highest mandatory bid at or
above the publisher's reserve wins, and the winner pays

    max( highest competing mandatory bid, own optional bid, reserve )

where the competing maximum of an empty set counts as 0. A network that
forwards its internal second-highest advertiser bid as the optional bid
therefore reproduces, for its own advertisers, exactly the prices of a
single second-price auction over everyone's books; `second_price_oracle`
is the brute-force implementation of that global auction and serves as
the ground truth in equivalence tests.

All functions here are pure and safe for concurrent use.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .errors import (
    DuplicateAdvertiserId,
    DuplicateNetworkId,
    OptionalExceedsMandatory,
)
from .money import Micros, require_micros


@dataclass(frozen=True)
class NetworkBid:
    """One network's exchange submission."""

    network_id: str
    mandatory: Micros
    optional: Micros
    creative_id: str


@dataclass(frozen=True)
class AuctionRequest:
    """A publisher's request to sell one impression."""

    request_id: str
    page_id: str
    user_info: str
    reserve: Micros


@dataclass(frozen=True)
class AuctionOutcome:
    """Filled (winner, creative, clearing price) or unfilled (all None)."""

    winner_network_id: str | None = None
    creative_id: str | None = None
    clearing_price: Micros | None = None

    @property
    def filled(self) -> bool:
        return self.winner_network_id is not None


UNFILLED = AuctionOutcome()


@dataclass(frozen=True)
class LowestNetworkId:
    """Deterministic tie rule: smallest network id wins."""


@dataclass(frozen=True)
class SeededRandom:
    """Tie rule choosing uniformly among tied networks, fixed by seed."""

    seed: int


TieRule = LowestNetworkId | SeededRandom

LOWEST_NETWORK_ID = LowestNetworkId()


def validate_network_bid(bid: NetworkBid) -> None:
    """Reject (never clamp) a bid whose optional part exceeds the mandatory.

    Also rejects amounts that are not non-negative integer micros.
    """
    require_micros(bid.mandatory, f"mandatory bid of {bid.network_id!r}")
    require_micros(bid.optional, f"optional bid of {bid.network_id!r}")
    if bid.optional > bid.mandatory:
        raise OptionalExceedsMandatory(bid.network_id, bid.mandatory, bid.optional)


def _pick_winner(candidates: list[NetworkBid], tie_rule: TieRule) -> NetworkBid:
    top = max(b.mandatory for b in candidates)
    tied = sorted((b for b in candidates if b.mandatory == top), key=lambda b: b.network_id)
    if len(tied) == 1 or isinstance(tie_rule, LowestNetworkId):
        return tied[0]
    return random.Random(tie_rule.seed).choice(tied)


def run_osp_auction(
    bids: list[NetworkBid],
    reserve: Micros,
    tie_rule: TieRule = LOWEST_NETWORK_ID,
) -> AuctionOutcome:
    """Clear one impression among network bids.

    The winner is the eligible bid (mandatory >= reserve) with the largest
    mandatory value; the clearing price is the max of the best competing
    mandatory bid (every non-winner counts, eligible or not), the winner's
    own optional bid, and the reserve. Returns UNFILLED when nothing
    clears the reserve.
    """
    require_micros(reserve, "reserve")
    seen: set[str] = set()
    for bid in bids:
        if bid.network_id in seen:
            raise DuplicateNetworkId(f"network id {bid.network_id!r} submitted twice")
        seen.add(bid.network_id)
        validate_network_bid(bid)

    eligible = [b for b in bids if b.mandatory >= reserve]
    if not eligible:
        return UNFILLED

    winner = _pick_winner(eligible, tie_rule)
    competitor = max((b.mandatory for b in bids if b.network_id != winner.network_id), default=0)
    price = max(competitor, winner.optional, reserve)
    return AuctionOutcome(winner.network_id, winner.creative_id, price)


def price_components(
    bids: list[NetworkBid], winner_network_id: str, reserve: Micros
) -> tuple[Micros, Micros, Micros]:
    """The three terms whose max is the clearing price, for reporting."""
    competitor = max((b.mandatory for b in bids if b.network_id != winner_network_id), default=0)
    optional = next(b.optional for b in bids if b.network_id == winner_network_id)
    return competitor, optional, reserve


@dataclass(frozen=True)
class OracleOutcome:
    """Result of the global second-price scan."""

    advertiser_id: str | None = None
    price: Micros | None = None

    @property
    def filled(self) -> bool:
        return self.advertiser_id is not None


ORACLE_UNFILLED = OracleOutcome()


def second_price_oracle(
    advertiser_bids: list[tuple[str, Micros]], reserve: Micros
) -> OracleOutcome:
    """True second-price auction over a flat book of advertiser bids.

    Winner is the highest bid at or above the reserve (ties to the lowest
    advertiser id); the price is the larger of the second-highest bid
    overall and the reserve. Direct scan, no shortcuts: this is the
    ground-truth oracle the exchange auction is checked against.
    """
    require_micros(reserve, "reserve")
    seen: set[str] = set()
    for advertiser_id, amount in advertiser_bids:
        if advertiser_id in seen:
            raise DuplicateAdvertiserId(f"advertiser id {advertiser_id!r} appears twice")
        seen.add(advertiser_id)
        require_micros(amount, f"bid of {advertiser_id!r}")

    if not advertiser_bids:
        return ORACLE_UNFILLED
    top = max(amount for _, amount in advertiser_bids)
    if top < reserve:
        return ORACLE_UNFILLED
    winner_id = min(a for a, amount in advertiser_bids if amount == top)

    second = 0
    skipped_top = False
    for _, amount in advertiser_bids:
        if amount == top and not skipped_top:
            skipped_top = True
            continue
        second = max(second, amount)
    return OracleOutcome(winner_id, max(second, reserve))
