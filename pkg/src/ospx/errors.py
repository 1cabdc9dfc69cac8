"""Exception taxonomy shared by every ospx module."""


class OspxError(Exception):
    """Base class for all errors raised by this package."""


class InvalidBid(OspxError):
    """A network submission that cannot enter the auction."""


class OptionalExceedsMandatory(InvalidBid):
    """Optional bid above the mandatory bid; rejected, never clamped."""

    def __init__(self, network_id: str, mandatory: int, optional: int):
        self.network_id = network_id
        self.mandatory = mandatory
        self.optional = optional
        super().__init__(
            f"network {network_id!r}: optional bid {optional} exceeds mandatory {mandatory}"
        )


class InvalidMoney(OspxError):
    """A monetary amount that is not a non-negative integer micro value."""


class DuplicateNetworkId(OspxError):
    pass


class DuplicateAdvertiserId(OspxError):
    pass


class KTooSmall(OspxError):
    """Fewer than two networks; the intermediary analysis needs k >= 2."""


class NotSorted(OspxError):
    """Bid vector expected in non-increasing order."""


class InstanceTooLarge(OspxError):
    """Exhaustive enumeration would exceed the assignment-count guard."""


class PreconditionViolated(OspxError):
    """Caller-side contract breach, e.g. a clearing price above own bid."""


class ConfigError(OspxError):
    """Invalid simulation or service configuration."""


class ProtocolError(OspxError):
    """Malformed wire message."""
