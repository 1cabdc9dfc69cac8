"""Run the exchange and mock networks on a background event loop so
synchronous tests can drive them over real sockets."""

from __future__ import annotations

import asyncio
import json
import socket
import threading
import time

from ospx import protocol
from ospx.mocknet import MockNetwork
from ospx.service import ExchangeService, NetworkEndpoint, ServiceConfig


class LoopThread:
    def __init__(self):
        self.loop = asyncio.new_event_loop()
        self._thread = threading.Thread(target=self.loop.run_forever, daemon=True)
        self._thread.start()

    def run(self, coro, timeout=30):
        return asyncio.run_coroutine_threadsafe(coro, self.loop).result(timeout)

    def close(self):
        self.loop.call_soon_threadsafe(self.loop.stop)
        self._thread.join(timeout=5)
        self.loop.close()


class ExchangeFixture:
    """An exchange plus its endpoints, started together, stopped together."""

    def __init__(self, loop_thread: LoopThread, deadline_ms=100, log_path=None,
                 include_price=False, token=None):
        self.loop_thread = loop_thread
        self.deadline_ms = deadline_ms
        self.log_path = log_path
        self.include_price = include_price
        self.token = token
        self.mocks: dict[str, MockNetwork] = {}
        self.raw_servers: list = []
        self.endpoints: list[NetworkEndpoint] = []
        self.service: ExchangeService | None = None

    def add_mock(self, network_id: str, mock: MockNetwork, enabled=True) -> MockNetwork:
        self.loop_thread.run(mock.start())
        self.mocks[network_id] = mock
        self.endpoints.append(NetworkEndpoint(network_id, "127.0.0.1", mock.port, enabled))
        return mock

    def add_raw(self, network_id: str, handler, enabled=True) -> None:
        """A scripted endpoint speaking raw bytes, for protocol-abuse tests."""
        server = self.loop_thread.run(asyncio.start_server(handler, "127.0.0.1", 0))
        self.raw_servers.append(server)
        port = server.sockets[0].getsockname()[1]
        self.endpoints.append(NetworkEndpoint(network_id, "127.0.0.1", port, enabled))

    def add_dead(self, network_id: str) -> None:
        """An endpoint nobody listens on: connections are refused."""
        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        probe.close()
        self.endpoints.append(NetworkEndpoint(network_id, "127.0.0.1", port))

    def start(self) -> "ExchangeFixture":
        config = ServiceConfig(
            endpoints=tuple(self.endpoints),
            deadline_ms=self.deadline_ms,
            log_path=str(self.log_path) if self.log_path else None,
            include_price_in_ad_response=self.include_price,
            token=self.token,
        )
        self.service = ExchangeService(config)
        self.loop_thread.run(self.service.start())
        return self

    def stop(self) -> None:
        if self.service is not None:
            self.loop_thread.run(self.service.stop())
        for mock in self.mocks.values():
            self.loop_thread.run(mock.stop())
        for server in self.raw_servers:
            server.close()

    @property
    def port(self) -> int:
        return self.service.port


class PublisherClient:
    """Blocking newline-JSON client, one connection."""

    def __init__(self, port: int, timeout=10.0):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=timeout)
        self.reader = self.sock.makefile("rb")

    def request(self, request_id: str, reserve_micros: int = 0,
                page: str = "page-1", user: str = "user-1") -> tuple[dict, float]:
        payload = protocol.encode_message(
            protocol.make_ad_request(request_id, page, user, reserve_micros)
        )
        started = time.perf_counter()
        self.sock.sendall(payload)
        line = self.reader.readline()
        elapsed = time.perf_counter() - started
        return json.loads(line), elapsed

    def send_raw(self, data: bytes) -> bytes:
        self.sock.sendall(data)
        return self.reader.readline()

    def close(self) -> None:
        self.reader.close()
        self.sock.close()
