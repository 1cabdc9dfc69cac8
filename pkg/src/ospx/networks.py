"""Intermediary ad networks: internal books, bidding policies, settlement.

A network holds a private book of advertiser bids and turns it into one
exchange submission under a chosen policy:

  HonestSecondPrice   forward the internal runner-up as the optional bid,
                      so its advertisers see a faithful second-price sale
  PocketDifference    optional 0; charge the internal second price anyway
                      and keep the spread over the exchange price
  BiddingClub         optional 0; pass the exchange price straight through
  FixedPrice(p)       bid p, sell at p to anyone willing to pay it
  FirstPriceInternal  optional 0; the internal winner pays its own bid

After the exchange clears, `settle_internal` computes what the internal
winner pays and the network's margin. Internal ties always resolve to the
lowest advertiser id, matching the second-price oracle.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .auction import NetworkBid
from .errors import (
    DuplicateAdvertiserId,
    KTooSmall,
    NotSorted,
    PreconditionViolated,
)
from .money import Micros, require_micros


@dataclass(frozen=True)
class AdvertiserBook:
    """One network's private advertiser bids."""

    network_id: str
    entries: tuple[tuple[str, Micros], ...]

    def __post_init__(self):
        seen: set[str] = set()
        for advertiser_id, amount in self.entries:
            if advertiser_id in seen:
                raise DuplicateAdvertiserId(
                    f"book {self.network_id!r}: advertiser {advertiser_id!r} listed twice"
                )
            seen.add(advertiser_id)
            require_micros(amount, f"bid of {advertiser_id!r}")


@dataclass(frozen=True)
class HonestSecondPrice:
    pass


@dataclass(frozen=True)
class PocketDifference:
    pass


@dataclass(frozen=True)
class BiddingClub:
    pass


@dataclass(frozen=True)
class FixedPrice:
    price: Micros

    def __post_init__(self):
        require_micros(self.price, "fixed price")


@dataclass(frozen=True)
class FirstPriceInternal:
    pass


NetworkPolicy = HonestSecondPrice | PocketDifference | BiddingClub | FixedPrice | FirstPriceInternal


@dataclass(frozen=True)
class Settlement:
    """Money flow for one cleared (or lost) impression at one network."""

    winning_advertiser_id: str | None
    advertiser_payment: Micros
    exchange_payment: Micros
    network_margin: int  # advertiser_payment - exchange_payment, signed

    @property
    def won(self) -> bool:
        return self.winning_advertiser_id is not None


NO_SALE = Settlement(None, 0, 0, 0)


def creative_for(advertiser_id: str) -> str:
    """Creative shown when this advertiser's bid wins."""
    return f"ad:{advertiser_id}"


def _top_two(entries) -> tuple[tuple[str, Micros], Micros]:
    """Best entry (ties to lowest advertiser id) and the runner-up amount."""
    best = min(entries, key=lambda e: (-e[1], e[0]))
    second = 0
    skipped_best = False
    for entry in entries:
        if entry == best and not skipped_best:
            skipped_best = True
            continue
        second = max(second, entry[1])
    return best, second


def _select_advertiser(book: AdvertiserBook, policy: NetworkPolicy) -> tuple[str, Micros] | None:
    """Which advertiser the network sells to if its exchange bid wins."""
    if not book.entries:
        return None
    if isinstance(policy, FixedPrice):
        willing = [e for e in book.entries if e[1] >= policy.price]
        if not willing:
            return None
        return min(willing, key=lambda e: e[0])
    best, _ = _top_two(book.entries)
    return best


def form_exchange_bid(book: AdvertiserBook, policy: NetworkPolicy) -> NetworkBid | None:
    """Turn a book into an exchange submission; None means decline."""
    selected = _select_advertiser(book, policy)
    if selected is None:
        return None
    advertiser_id, amount = selected
    if isinstance(policy, FixedPrice):
        mandatory, optional = policy.price, 0
    elif isinstance(policy, HonestSecondPrice):
        _, second = _top_two(book.entries)
        mandatory, optional = amount, second
    else:  # PocketDifference, BiddingClub, FirstPriceInternal all withhold
        mandatory, optional = amount, 0
    return NetworkBid(book.network_id, mandatory, optional, creative_for(advertiser_id))


def settle_internal(
    book: AdvertiserBook,
    policy: NetworkPolicy,
    won: bool,
    clearing_price: Micros,
) -> Settlement:
    """Charge the internal winner and account the network's margin.

    Requires, when won, that this book actually produced a bid under this
    policy and that the exchange price does not exceed it; violations
    signal an exchange or transport fault, not a pricing case.
    """
    if not won:
        return NO_SALE
    require_micros(clearing_price, "clearing price")
    bid = form_exchange_bid(book, policy)
    if bid is None:
        raise PreconditionViolated(
            f"book {book.network_id!r} declined under this policy but was marked as winner"
        )
    if clearing_price > bid.mandatory:
        raise PreconditionViolated(
            f"clearing price {clearing_price} exceeds own mandatory bid {bid.mandatory}"
        )
    advertiser_id, amount = _select_advertiser(book, policy)

    if isinstance(policy, HonestSecondPrice) or isinstance(policy, BiddingClub):
        payment = clearing_price
    elif isinstance(policy, PocketDifference):
        _, second = _top_two(book.entries)
        payment = max(second, clearing_price)
    elif isinstance(policy, FixedPrice):
        payment = policy.price
    else:  # FirstPriceInternal
        payment = amount
    return Settlement(advertiser_id, payment, clearing_price, payment - clearing_price)


def assign_bidders_uniform(
    sorted_bids: list[Micros], k: int, rng_seed: int
) -> list[AdvertiserBook]:
    """Place each bidder in one of k books, independently and uniformly.

    Bids must arrive sorted non-increasing; advertiser ids encode rank
    (a1 is the top bid) and book ids are net1..netk, both zero-padded so
    lexicographic order matches rank order. Reproducible given the seed.
    """
    if k < 2:
        raise KTooSmall(f"need at least 2 networks, got {k}")
    if not sorted_bids:
        raise ValueError("need at least one bidder")
    if any(sorted_bids[i] < sorted_bids[i + 1] for i in range(len(sorted_bids) - 1)):
        raise NotSorted("bids must be non-increasing")
    for amount in sorted_bids:
        require_micros(amount)

    rng = random.Random(rng_seed)
    id_width = len(str(len(sorted_bids)))
    net_width = len(str(k))
    entries: list[list[tuple[str, Micros]]] = [[] for _ in range(k)]
    for rank, amount in enumerate(sorted_bids, start=1):
        entries[rng.randrange(k)].append((f"a{rank:0{id_width}d}", amount))
    return [
        AdvertiserBook(f"net{g + 1:0{net_width}d}", tuple(book_entries))
        for g, book_entries in enumerate(entries)
    ]
