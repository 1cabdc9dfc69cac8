"""Command-line front end.

Subcommands:

  auction       clear one auction from a bid file and print the outcome
  simulate      run a loss-analysis battery, print a table, optionally CSV
  serve         run the exchange service from a config file
  mock-network  run a bidder endpoint over a static book

Money on flags is written in decimal currency units (up to six decimal
places, e.g. "2.75"); files and wire messages carry integer micros in
*_micros fields. Exit codes: 0 success/filled, 1 unfilled, 2 usage or
parse error, 3 runtime error.
"""

from __future__ import annotations

import asyncio
import json
import secrets
import sys

import click

from . import analysis
from .auction import NetworkBid, price_components, run_osp_auction
from .errors import InvalidBid, InvalidMoney, OspxError
from .mocknet import MockNetwork, load_book
from .money import format_micros, units_to_micros
from .networks import (
    BiddingClub,
    FirstPriceInternal,
    FixedPrice,
    HonestSecondPrice,
    PocketDifference,
)
from .service import ExchangeService, load_service_config, parse_address

DEFAULT_SEED = 1729
DEFAULT_TRIALS = 100_000

EXIT_UNFILLED = 1
EXIT_PARSE = 2
EXIT_RUNTIME = 3


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main() -> None:
    """Optional-second-price exchange toolkit."""


@main.command()
@click.argument("input_file", type=click.Path(exists=True, dir_okay=False))
def auction(input_file: str) -> None:
    """Run one auction from INPUT_FILE and print winner, price, and terms.

    INPUT_FILE is JSON: {"reserve_micros": int, "bids": [{"network_id",
    "mandatory_micros", "optional_micros", "creative_id"}, ...]}.
    """
    try:
        with open(input_file) as handle:
            raw = json.load(handle)
        reserve = int(raw["reserve_micros"])
        bids = [
            NetworkBid(
                network_id=str(entry["network_id"]),
                mandatory=int(entry["mandatory_micros"]),
                optional=int(entry["optional_micros"]),
                creative_id=str(entry.get("creative_id", "")),
            )
            for entry in raw["bids"]
        ]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        _fail(EXIT_PARSE, f"cannot parse {input_file}: {exc}")

    try:
        outcome = run_osp_auction(bids, reserve)
    except (InvalidBid, InvalidMoney, OspxError) as exc:
        _fail(EXIT_PARSE, str(exc))

    if not outcome.filled:
        click.echo("unfilled")
        sys.exit(EXIT_UNFILLED)
    competitor, optional, _ = price_components(bids, outcome.winner_network_id, reserve)
    click.echo(f"winner={outcome.winner_network_id} price={format_micros(outcome.clearing_price)}")
    click.echo(
        f"price_terms: competitor={format_micros(competitor)}"
        f" optional={format_micros(optional)} reserve={format_micros(reserve)}"
    )


def _parse_seed(text: str) -> int:
    if text == "random":
        return secrets.randbits(63)
    try:
        return int(text)
    except ValueError:
        _fail(EXIT_PARSE, f"seed must be an integer or 'random', got {text!r}")


def _parse_bid_model(bids: str, n: int | None) -> analysis.BidModel:
    if bids == "uniform":
        if n is None:
            _fail(EXIT_PARSE, "--bids uniform requires --n")
        return analysis.UniformBids(n)
    try:
        with open(bids) as handle:
            bids = handle.read().replace("\n", ",")
    except OSError:
        pass  # not a file: parse inline
    try:
        values = tuple(
            units_to_micros(part.strip()) for part in bids.split(",") if part.strip()
        )
        model = analysis.FixedBids(tuple(sorted(values, reverse=True)))
    except (InvalidMoney, OspxError) as exc:
        _fail(EXIT_PARSE, f"bad bid list: {exc}")
    if n is not None and n != model.n:
        _fail(EXIT_PARSE, f"--n {n} does not match {model.n} fixed bids")
    return model


ENUMERATION_PRINT_LIMIT = 300_000  # assignments; keep the exact column instant


@main.command()
@click.option("--bids", default="uniform", show_default=True,
              help="'uniform', a comma list of unit amounts, or a file of amounts")
@click.option("--n", type=int, default=None, help="bidder count (uniform model)")
@click.option("--k", type=int, required=True, help="network count, at least 2")
@click.option("--liars", type=int, default=0, show_default=True,
              help="networks that withhold the optional bid")
@click.option("--trials", type=int, default=DEFAULT_TRIALS, show_default=True)
@click.option("--seed", default=str(DEFAULT_SEED), show_default=True,
              help="integer, or 'random' for a fresh seed")
@click.option("--reserve", default="0", show_default=True, help="reserve in units")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="also write the report as one CSV row")
def simulate(bids, n, k, liars, trials, seed, reserve, csv_path) -> None:
    """Monte Carlo publisher-loss report, with closed forms where defined."""
    try:
        config = analysis.SimulationConfig(
            bid_model=_parse_bid_model(bids, n),
            k=k,
            liar_count=liars,
            trials=trials,
            seed=_parse_seed(seed),
            reserve=units_to_micros(reserve),
        )
    except (InvalidMoney, OspxError) as exc:
        _fail(EXIT_PARSE, str(exc))

    report = analysis.simulate_losses(config)
    exact = None
    if (
        isinstance(config.bid_model, analysis.FixedBids)
        and config.reserve == 0
        and config.k**config.n <= ENUMERATION_PRINT_LIMIT
    ):
        exact = analysis.enumerate_losses(config.bid_model.bids, config.k, config.liar_count)
    click.echo(analysis.format_report_table(config, report, exact))
    if csv_path:
        analysis.write_reports_csv(csv_path, [(config, report)])
        click.echo(f"csv written to {csv_path}")


@main.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
def serve(config_file: str) -> None:
    """Run the exchange service until interrupted; print stats on exit."""
    try:
        config = load_service_config(config_file)
    except (OspxError, OSError) as exc:
        _fail(EXIT_PARSE, f"cannot load {config_file}: {exc}")

    async def _run() -> None:
        service = ExchangeService(config)
        try:
            await service.start()
        except OSError as exc:
            _fail(EXIT_RUNTIME, f"cannot bind {config.listen_host}:{config.listen_port}: {exc}")
        click.echo(f"exchange listening on {config.listen_host}:{service.port}")
        try:
            await asyncio.Event().wait()
        finally:
            stats = service.query_stats()
            await service.stop()
            click.echo(
                json.dumps(
                    {
                        "auctions_handled": stats["auctions_handled"],
                        "fill_rate": float(stats["fill_rate"]),
                        "mean_elapsed_ms": stats["mean_elapsed_ms"],
                        "network_response_rate": {
                            nid: float(rate)
                            for nid, rate in stats["network_response_rate"].items()
                        },
                    },
                    sort_keys=True,
                )
            )

    try:
        asyncio.run(_run())
    except KeyboardInterrupt:
        pass


POLICIES = {
    "honest": lambda price: HonestSecondPrice(),
    "pocket-difference": lambda price: PocketDifference(),
    "bidding-club": lambda price: BiddingClub(),
    "fixed-price": lambda price: FixedPrice(price),
    "first-price": lambda price: FirstPriceInternal(),
}


@main.command(name="mock-network")
@click.option("--policy", type=click.Choice(sorted(POLICIES)), default="honest",
              show_default=True)
@click.option("--book", "book_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--latency-ms", type=int, default=0, show_default=True,
              help="artificial delay before answering, for deadline tests")
@click.option("--listen", default="127.0.0.1:0", show_default=True)
@click.option("--fixed-price", "fixed_price", default=None,
              help="price in units (fixed-price policy only)")
def mock_network(policy, book_path, latency_ms, listen, fixed_price) -> None:
    """Run a bidder endpoint applying POLICY to the book in BOOK file."""
    if (policy == "fixed-price") != (fixed_price is not None):
        _fail(EXIT_PARSE, "--fixed-price is required for, and only for, the fixed-price policy")
    try:
        book = load_book(book_path)
        price = units_to_micros(fixed_price) if fixed_price is not None else 0
        chosen = POLICIES[policy](price)
        host, port = parse_address(listen)
    except (OspxError, OSError) as exc:
        _fail(EXIT_PARSE, str(exc))

    async def _run() -> None:
        mock = MockNetwork(book, chosen, latency_ms, host, port, printer=click.echo)
        try:
            await mock.start()
        except OSError as exc:
            _fail(EXIT_RUNTIME, f"cannot bind {listen}: {exc}")
        click.echo(f"network {book.network_id} listening on {host}:{mock.port}")
        try:
            await asyncio.Event().wait()
        finally:
            await mock.stop()

    try:
        asyncio.run(_run())
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
