"""Shared test utilities: set partitions and honest-network pipelines."""

from __future__ import annotations

from ospx.auction import run_osp_auction, second_price_oracle
from ospx.networks import AdvertiserBook, HonestSecondPrice, form_exchange_bid

MICROS = 1_000_000


def set_partitions(items, max_blocks):
    """Every partition of items into at most max_blocks non-empty blocks."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in set_partitions(rest, max_blocks):
        for i in range(len(partition)):
            yield partition[:i] + [partition[i] + [first]] + partition[i + 1 :]
        if len(partition) < max_blocks:
            yield partition + [[first]]


def books_for_partition(partition):
    """Build books whose ids sort like the advertiser each would sell to.

    A book's exchange bid is tagged by its selected advertiser (lowest id
    among its top-value holders); naming the book after that advertiser
    makes cross-network mandatory-bid ties resolve toward the same
    advertiser the global second-price scan picks.
    """
    books = []
    for block in partition:
        top = max(bid for _, bid in block)
        selected = min(aid for aid, bid in block if bid == top)
        books.append(AdvertiserBook(f"net-{selected}", tuple(sorted(block))))
    return books


def run_all_honest(partition, reserve):
    """Clear one auction where every network forwards its runner-up bid."""
    books = books_for_partition(partition)
    bids = [form_exchange_bid(book, HonestSecondPrice()) for book in books]
    outcome = run_osp_auction([b for b in bids if b is not None], reserve)
    return outcome, books


def assert_matches_oracle(advertisers, partition, reserve):
    """All-honest exchange == global second price: fill, price, winner."""
    outcome, books = run_all_honest(partition, reserve)
    oracle = second_price_oracle(advertisers, reserve)
    assert outcome.filled == oracle.filled, (partition, reserve)
    if not oracle.filled:
        return
    assert outcome.clearing_price == oracle.price, (partition, reserve)
    winner_book = next(b for b in books if b.network_id == outcome.winner_network_id)
    members = {aid for aid, _ in winner_book.entries}
    assert oracle.advertiser_id in members, (partition, reserve)
