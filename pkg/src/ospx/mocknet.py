"""Mock network endpoint: a bidder that serves a static advertiser book.

Answers every bid request by applying one network policy to its book,
optionally after an injected delay (for deadline tests). Win notices
received on the same connection are recorded and, when a printer is
given, echoed there.
"""

from __future__ import annotations

import asyncio
import json
from typing import Callable

from . import protocol
from .errors import ConfigError, ProtocolError
from .networks import AdvertiserBook, NetworkPolicy, form_exchange_bid


def load_book(path) -> AdvertiserBook:
    """Read a book file: {"network_id": ..., "advertisers": [{...}]}."""
    with open(path) as handle:
        raw = json.load(handle)
    try:
        entries = tuple(
            (entry["advertiser_id"], int(entry["bid_micros"]))
            for entry in raw["advertisers"]
        )
        return AdvertiserBook(raw["network_id"], entries)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad book file: {exc}") from exc


class MockNetwork:
    def __init__(
        self,
        book: AdvertiserBook,
        policy: NetworkPolicy,
        latency_ms: int = 0,
        host: str = "127.0.0.1",
        port: int = 0,
        printer: Callable[[str], None] | None = None,
    ):
        self.book = book
        self.policy = policy
        self.latency_ms = latency_ms
        self.host = host
        self._requested_port = port
        self._printer = printer
        self.requests_seen: list[dict] = []
        self.win_notices: list[dict] = []
        self._server: asyncio.AbstractServer | None = None
        self._handlers: set[asyncio.Task] = set()

    @property
    def port(self) -> int:
        assert self._server is not None, "mock network not started"
        return self._server.sockets[0].getsockname()[1]

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._serve, self.host, self._requested_port)

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None
        for task in list(self._handlers):
            task.cancel()
        await asyncio.gather(*self._handlers, return_exceptions=True)

    async def _serve(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.current_task()
        self._handlers.add(task)
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                try:
                    message = protocol.decode_line(line)
                except ProtocolError:
                    break
                if message.get("type") == protocol.WIN:
                    self.win_notices.append(message)
                    if self._printer:
                        self._printer(json.dumps(message, sort_keys=True))
                    continue
                try:
                    callout = protocol.parse_bid_request(message)
                except ProtocolError:
                    break
                self.requests_seen.append(message)
                if self.latency_ms:
                    await asyncio.sleep(self.latency_ms / 1000.0)
                bid = form_exchange_bid(self.book, self.policy)
                if bid is None:
                    reply = protocol.make_decline(callout["request_id"])
                else:
                    reply = protocol.make_bid_response(callout["request_id"], bid)
                writer.write(protocol.encode_message(reply))
                await writer.drain()
        except (ConnectionResetError, BrokenPipeError, OSError, ValueError):
            pass
        finally:
            self._handlers.discard(task)
            writer.close()
