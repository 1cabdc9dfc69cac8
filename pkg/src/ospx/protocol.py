"""Newline-delimited JSON wire protocol.

One JSON object per line, UTF-8. Message kinds:

  publisher -> exchange   ad_request   request_id, page, user, reserve_micros
  exchange  -> network    bid_request  request_id, page_info, user_info, deadline_ms
  network   -> exchange   bid          request_id, mandatory_micros,
                                       optional_micros, creative_id
  network   -> exchange   decline      request_id
  exchange  -> publisher  ad_response  request_id, filled, creative_id?
  exchange  -> winner     win          request_id, clearing_price_micros

Every message also accepts an optional "token" field, reserved for a
shared-secret deployment scheme; it is passed through, never enforced.
Structural problems (bad JSON, wrong type, missing or ill-typed fields)
raise ProtocolError; auction-level validity (optional <= mandatory) is
the auction's business, not the parser's.
"""

from __future__ import annotations

import json

from .auction import AuctionRequest, NetworkBid
from .errors import ProtocolError

AD_REQUEST = "ad_request"
BID_REQUEST = "bid_request"
BID = "bid"
DECLINE = "decline"
AD_RESPONSE = "ad_response"
WIN = "win"


def encode_message(message: dict) -> bytes:
    return (json.dumps(message, separators=(",", ":"), sort_keys=True) + "\n").encode()


def decode_line(line: bytes | str) -> dict:
    try:
        message = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"bad JSON line: {exc}") from None
    if not isinstance(message, dict):
        raise ProtocolError("message must be a JSON object")
    return message


def _field(message: dict, name: str, kind) -> object:
    if name not in message:
        raise ProtocolError(f"missing field {name!r}")
    value = message[name]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ProtocolError(f"field {name!r} has wrong type")
    return value


def _non_negative_int(message: dict, name: str) -> int:
    value = _field(message, name, int)
    if value < 0:
        raise ProtocolError(f"field {name!r} must be non-negative")
    return value


def make_ad_request(request_id: str, page: str, user: str, reserve_micros: int,
                    token: str | None = None) -> dict:
    message = {
        "type": AD_REQUEST,
        "request_id": request_id,
        "page": page,
        "user": user,
        "reserve_micros": reserve_micros,
    }
    if token is not None:
        message["token"] = token
    return message


def parse_ad_request(message: dict) -> AuctionRequest:
    if message.get("type") != AD_REQUEST:
        raise ProtocolError(f"expected {AD_REQUEST!r}, got {message.get('type')!r}")
    return AuctionRequest(
        request_id=_field(message, "request_id", str),
        page_id=_field(message, "page", str),
        user_info=_field(message, "user", str),
        reserve=_non_negative_int(message, "reserve_micros"),
    )


def make_bid_request(request_id: str, page_info: str, user_info: str,
                     deadline_ms: int, token: str | None = None) -> dict:
    message = {
        "type": BID_REQUEST,
        "request_id": request_id,
        "page_info": page_info,
        "user_info": user_info,
        "deadline_ms": deadline_ms,
    }
    if token is not None:
        message["token"] = token
    return message


def parse_bid_request(message: dict) -> dict:
    if message.get("type") != BID_REQUEST:
        raise ProtocolError(f"expected {BID_REQUEST!r}, got {message.get('type')!r}")
    deadline = _field(message, "deadline_ms", int)
    if deadline <= 0:
        raise ProtocolError("deadline_ms must be positive")
    return {
        "request_id": _field(message, "request_id", str),
        "page_info": _field(message, "page_info", str),
        "user_info": _field(message, "user_info", str),
        "deadline_ms": deadline,
    }


def make_bid_response(request_id: str, bid: NetworkBid) -> dict:
    return {
        "type": BID,
        "request_id": request_id,
        "mandatory_micros": bid.mandatory,
        "optional_micros": bid.optional,
        "creative_id": bid.creative_id,
    }


def make_decline(request_id: str) -> dict:
    return {"type": DECLINE, "request_id": request_id}


def parse_network_response(message: dict, network_id: str, request_id: str) -> NetworkBid | None:
    """A network's answer to a callout: a NetworkBid, or None for a decline.

    The returned bid is structurally sound but not auction-validated;
    run it through validate_network_bid before admitting it.
    """
    kind = message.get("type")
    if kind == DECLINE:
        if _field(message, "request_id", str) != request_id:
            raise ProtocolError("decline for a different request")
        return None
    if kind != BID:
        raise ProtocolError(f"expected {BID!r} or {DECLINE!r}, got {kind!r}")
    if _field(message, "request_id", str) != request_id:
        raise ProtocolError("bid for a different request")
    return NetworkBid(
        network_id=network_id,
        mandatory=_non_negative_int(message, "mandatory_micros"),
        optional=_non_negative_int(message, "optional_micros"),
        creative_id=_field(message, "creative_id", str),
    )


def make_ad_response(request_id: str, filled: bool, creative_id: str | None = None,
                     clearing_price_micros: int | None = None) -> dict:
    message: dict = {"type": AD_RESPONSE, "request_id": request_id, "filled": filled}
    if creative_id is not None:
        message["creative_id"] = creative_id
    if clearing_price_micros is not None:
        message["clearing_price_micros"] = clearing_price_micros
    return message


def make_win_notice(request_id: str, clearing_price_micros: int) -> dict:
    return {
        "type": WIN,
        "request_id": request_id,
        "clearing_price_micros": clearing_price_micros,
    }
