"""Optional-second-price ad exchange toolkit.

An auction engine where each network submits a mandatory bid plus an
optional bid that can only raise its own price, a simulator for the
internal strategies such intermediaries run against their advertisers,
an analysis harness for the publisher revenue those strategies cost,
and a deadline-driven TCP exchange service tying it together.
"""

from .analysis import (
    FixedBids,
    LossReport,
    SimulationConfig,
    UniformBids,
    closed_form_publisher_loss,
    enumerate_losses,
    expected_loss_uniform,
    fill_rate,
    loss_upper_bound,
    simulate_losses,
)
from .auction import (
    AuctionOutcome,
    AuctionRequest,
    LowestNetworkId,
    NetworkBid,
    OracleOutcome,
    SeededRandom,
    run_osp_auction,
    second_price_oracle,
    validate_network_bid,
)
from .networks import (
    AdvertiserBook,
    BiddingClub,
    FirstPriceInternal,
    FixedPrice,
    HonestSecondPrice,
    PocketDifference,
    Settlement,
    assign_bidders_uniform,
    form_exchange_bid,
    settle_internal,
)
from .service import ExchangeService, NetworkEndpoint, ServiceConfig

__version__ = "0.1.0"

__all__ = [
    "AdvertiserBook",
    "AuctionOutcome",
    "AuctionRequest",
    "BiddingClub",
    "ExchangeService",
    "FirstPriceInternal",
    "FixedBids",
    "FixedPrice",
    "HonestSecondPrice",
    "LossReport",
    "LowestNetworkId",
    "NetworkBid",
    "NetworkEndpoint",
    "OracleOutcome",
    "PocketDifference",
    "SeededRandom",
    "ServiceConfig",
    "Settlement",
    "SimulationConfig",
    "UniformBids",
    "assign_bidders_uniform",
    "closed_form_publisher_loss",
    "enumerate_losses",
    "expected_loss_uniform",
    "fill_rate",
    "form_exchange_bid",
    "loss_upper_bound",
    "run_osp_auction",
    "second_price_oracle",
    "settle_internal",
    "simulate_losses",
    "validate_network_bid",
]
