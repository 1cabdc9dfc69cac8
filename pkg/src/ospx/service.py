"""Deadline-driven exchange service.

Accepts publisher ad requests over TCP (one JSON object per line),
fans a bid request out to every enabled network endpoint, collects
answers until the deadline, clears the auction, notifies the winner of
its price, answers the publisher, and appends one log record per
request to an append-only JSON-lines log.

Timing contract: the publisher gets its answer within deadline_ms plus a
small fixed grace allowance for bookkeeping, no matter how endpoints
behave. Late answers are discarded as timed out, never queued.

Information containment: the bid request carries only page/user context
and the deadline; the clearing price travels solely in the winner's win
notice (and optionally in the publisher response when explicitly
configured); losers hear nothing after bidding.
"""

from __future__ import annotations

import asyncio
import json
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction

from . import protocol
from .auction import (
    AuctionOutcome,
    AuctionRequest,
    NetworkBid,
    run_osp_auction,
    validate_network_bid,
)
from .errors import ConfigError, InvalidBid, InvalidMoney, ProtocolError

GRACE_MS = 10

STATUS_BID = "bid"
STATUS_DECLINED = "declined"
STATUS_TIMED_OUT = "timed_out"
STATUS_INVALID = "invalid"
STATUS_TRANSPORT_ERROR = "transport_error"
RESPONSIVE_STATUSES = (STATUS_BID, STATUS_DECLINED)


@dataclass(frozen=True)
class NetworkEndpoint:
    network_id: str
    host: str
    port: int
    enabled: bool = True

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"


def parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"address {address!r} is not host:port")
    return host, int(port)


@dataclass(frozen=True)
class ServiceConfig:
    endpoints: tuple[NetworkEndpoint, ...] = ()
    listen_host: str = "127.0.0.1"
    listen_port: int = 0
    deadline_ms: int = 100
    log_path: str | None = None
    include_price_in_ad_response: bool = False
    token: str | None = None

    def __post_init__(self):
        if self.deadline_ms <= 0:
            raise ConfigError("deadline_ms must be positive")
        ids = [e.network_id for e in self.endpoints]
        if len(set(ids)) != len(ids):
            raise ConfigError("network ids in the registry must be unique")


def load_service_config(path) -> ServiceConfig:
    """Read a JSON config file: registry, deadline, log path, listen address."""
    with open(path) as handle:
        raw = json.load(handle)
    try:
        listen_host, listen_port = parse_address(raw.get("listen", "127.0.0.1:0"))
        endpoints = []
        for entry in raw.get("networks", []):
            host, port = parse_address(entry["address"])
            endpoints.append(
                NetworkEndpoint(entry["network_id"], host, port, bool(entry.get("enabled", True)))
            )
        return ServiceConfig(
            endpoints=tuple(endpoints),
            listen_host=listen_host,
            listen_port=listen_port,
            deadline_ms=int(raw.get("deadline_ms", 100)),
            log_path=raw.get("log_path"),
            include_price_in_ad_response=bool(raw.get("include_price_in_ad_response", False)),
            token=raw.get("token"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad service config: {exc}") from exc


@dataclass
class _CalloutSlot:
    """Mutable per-endpoint state for one fan-out."""

    status: str = STATUS_TIMED_OUT
    bid: NetworkBid | None = None
    detail: str | None = None
    duplicates: int = 0
    writer: asyncio.StreamWriter | None = None
    answered: asyncio.Event = field(default_factory=asyncio.Event)


def outcome_payload(outcome: AuctionOutcome) -> dict:
    if not outcome.filled:
        return {"filled": False}
    return {
        "filled": True,
        "winner_network_id": outcome.winner_network_id,
        "creative_id": outcome.creative_id,
        "clearing_price_micros": outcome.clearing_price,
    }


def canonical_outcome_bytes(payload: dict) -> bytes:
    return json.dumps(payload, separators=(",", ":"), sort_keys=True).encode()


def surviving_bids(record: dict) -> tuple[list[NetworkBid], int]:
    """The bids a log record admitted to the auction, plus the reserve."""
    bids = [
        NetworkBid(network_id, entry["mandatory_micros"], entry["optional_micros"],
                   entry["creative_id"])
        for network_id, entry in sorted(record["networks"].items())
        if entry["status"] == STATUS_BID
    ]
    return bids, record["reserve_micros"]


def replay_log_record(record: dict) -> dict:
    """Re-run the auction a log record describes; must match its outcome."""
    bids, reserve = surviving_bids(record)
    return outcome_payload(run_osp_auction(bids, reserve))


def read_log(path) -> list[dict]:
    with open(path) as handle:
        return [json.loads(line) for line in handle if line.strip()]


class ExchangeService:
    """One exchange instance; start() binds, stop() tears down."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.records: list[dict] = []
        self._server: asyncio.AbstractServer | None = None
        self._log_handle = None
        self._log_lock = asyncio.Lock()
        self._connections: set[asyncio.Task] = set()

    @property
    def port(self) -> int:
        assert self._server is not None, "service not started"
        return self._server.sockets[0].getsockname()[1]

    async def start(self) -> None:
        if self.config.log_path:
            self._log_handle = open(self.config.log_path, "a")
        self._server = await asyncio.start_server(
            self._serve_publisher, self.config.listen_host, self.config.listen_port
        )

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None
        for task in list(self._connections):
            task.cancel()
        await asyncio.gather(*self._connections, return_exceptions=True)
        if self._log_handle is not None:
            self._log_handle.close()
            self._log_handle = None

    async def _serve_publisher(self, reader: asyncio.StreamReader,
                               writer: asyncio.StreamWriter) -> None:
        task = asyncio.current_task()
        self._connections.add(task)
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                try:
                    request = protocol.parse_ad_request(protocol.decode_line(line))
                except ProtocolError:
                    break  # protocol violation from the publisher: drop the connection

                async def respond(response: dict) -> None:
                    writer.write(protocol.encode_message(response))
                    await writer.drain()

                await self.handle_publisher_request(request, respond)
        except (ConnectionResetError, BrokenPipeError, ValueError):
            pass  # ValueError: a line beyond the stream limit; drop the peer
        finally:
            self._connections.discard(task)
            writer.close()

    async def handle_publisher_request(self, request: AuctionRequest,
                                       respond=None) -> dict:
        """Call out, clear, answer the publisher, notify the winner, log.

        When `respond` (an async callable) is given, the publisher answer
        is delivered through it before the win notice and bookkeeping, so
        the latency-critical party never waits on them.
        """
        started = time.perf_counter()
        enabled = [e for e in self.config.endpoints if e.enabled]
        slots = await self._callout_all(request, enabled)

        bids = [slot.bid for slot in slots.values() if slot.status == STATUS_BID]
        outcome = run_osp_auction(bids, request.reserve)
        price = outcome.clearing_price if self.config.include_price_in_ad_response else None
        response = protocol.make_ad_response(
            request.request_id, outcome.filled, outcome.creative_id, price
        )
        if respond is not None:
            await respond(response)
        elapsed_ms = (time.perf_counter() - started) * 1000.0

        await self._notify_winner(request.request_id, outcome, slots)
        self._close_callouts(slots)
        record = {
            "request_id": request.request_id,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "reserve_micros": request.reserve,
            "networks": {nid: self._slot_log_entry(slot) for nid, slot in slots.items()},
            "outcome": outcome_payload(outcome),
            "elapsed_ms": round(elapsed_ms, 3),
        }
        await self._append_record(record)
        return response

    async def _callout_all(self, request: AuctionRequest,
                           endpoints: list[NetworkEndpoint]) -> dict[str, _CalloutSlot]:
        if not endpoints:
            return {}
        deadline_s = self.config.deadline_ms / 1000.0
        payload = protocol.encode_message(
            protocol.make_bid_request(
                request.request_id, request.page_id, request.user_info,
                self.config.deadline_ms, self.config.token,
            )
        )
        slots = {endpoint.network_id: _CalloutSlot() for endpoint in endpoints}
        tasks = [
            asyncio.ensure_future(
                self._callout_one(endpoint, payload, request.request_id,
                                  slots[endpoint.network_id])
            )
            for endpoint in endpoints
        ]
        waiters = [asyncio.ensure_future(slot.answered.wait()) for slot in slots.values()]
        try:
            await asyncio.wait_for(asyncio.gather(*waiters), timeout=deadline_s)
        except asyncio.TimeoutError:
            pass
        finally:
            for task in waiters + tasks:
                task.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)
        return slots

    async def _callout_one(self, endpoint: NetworkEndpoint, payload: bytes,
                           request_id: str, slot: _CalloutSlot) -> None:
        try:
            reader, writer = await asyncio.open_connection(endpoint.host, endpoint.port)
        except OSError as exc:
            slot.status = STATUS_TRANSPORT_ERROR
            slot.detail = str(exc)
            slot.answered.set()
            return
        slot.writer = writer
        try:
            writer.write(payload)
            await writer.drain()
            while True:
                line = await reader.readline()
                if not line:
                    if not slot.answered.is_set():
                        slot.status = STATUS_TRANSPORT_ERROR
                        slot.detail = "connection closed before answering"
                        slot.answered.set()
                    return
                if slot.answered.is_set():
                    slot.duplicates += 1  # first answer stands, extras are logged
                    continue
                self._classify_response(line, endpoint.network_id, request_id, slot)
                slot.answered.set()
        except (OSError, ValueError, asyncio.IncompleteReadError) as exc:
            if not slot.answered.is_set():
                slot.status = STATUS_TRANSPORT_ERROR
                slot.detail = str(exc)
                slot.answered.set()

    @staticmethod
    def _classify_response(line: bytes, network_id: str, request_id: str,
                           slot: _CalloutSlot) -> None:
        try:
            bid = protocol.parse_network_response(
                protocol.decode_line(line), network_id, request_id
            )
        except ProtocolError as exc:
            slot.status = STATUS_TRANSPORT_ERROR
            slot.detail = str(exc)
            return
        if bid is None:
            slot.status = STATUS_DECLINED
            return
        try:
            validate_network_bid(bid)
        except (InvalidBid, InvalidMoney) as exc:
            slot.status = STATUS_INVALID
            slot.detail = str(exc)
            return
        slot.status = STATUS_BID
        slot.bid = bid

    async def _notify_winner(self, request_id: str, outcome: AuctionOutcome,
                             slots: dict[str, _CalloutSlot]) -> None:
        if not outcome.filled:
            return
        slot = slots[outcome.winner_network_id]
        if slot.writer is None:
            return
        try:
            slot.writer.write(protocol.encode_message(
                protocol.make_win_notice(request_id, outcome.clearing_price)
            ))
            await slot.writer.drain()
        except (ConnectionResetError, BrokenPipeError, OSError):
            pass  # winner vanished; the log already has the outcome

    @staticmethod
    def _close_callouts(slots: dict[str, _CalloutSlot]) -> None:
        for slot in slots.values():
            if slot.writer is not None:
                slot.writer.close()

    @staticmethod
    def _slot_log_entry(slot: _CalloutSlot) -> dict:
        entry: dict = {"status": slot.status}
        if slot.bid is not None:
            entry["mandatory_micros"] = slot.bid.mandatory
            entry["optional_micros"] = slot.bid.optional
            entry["creative_id"] = slot.bid.creative_id
        if slot.detail is not None:
            entry["detail"] = slot.detail
        if slot.duplicates:
            entry["duplicates"] = slot.duplicates
        return entry

    async def _append_record(self, record: dict) -> None:
        async with self._log_lock:
            self.records.append(record)
            if self._log_handle is not None:
                self._log_handle.write(json.dumps(record, sort_keys=True) + "\n")
                self._log_handle.flush()

    def query_stats(self) -> dict:
        """Counters derived from the append-only log.

        A network counts as responsive on a request when it answered the
        callout in time with a bid or a decline.
        """
        records = list(self.records)
        handled = len(records)
        filled = sum(1 for r in records if r["outcome"]["filled"])
        callouts: dict[str, int] = {}
        responses: dict[str, int] = {}
        for record in records:
            for network_id, entry in record["networks"].items():
                callouts[network_id] = callouts.get(network_id, 0) + 1
                if entry["status"] in RESPONSIVE_STATUSES:
                    responses[network_id] = responses.get(network_id, 0) + 1
        return {
            "auctions_handled": handled,
            "fill_rate": Fraction(filled, handled) if handled else Fraction(0),
            "mean_elapsed_ms": (
                sum(r["elapsed_ms"] for r in records) / handled if handled else 0.0
            ),
            "network_response_rate": {
                network_id: Fraction(responses.get(network_id, 0), total)
                for network_id, total in sorted(callouts.items())
            },
        }
