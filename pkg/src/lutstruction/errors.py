"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class LutstructionError(Exception):
    code = "error"

    def __str__(self):
        msg = super().__str__()
        return f"{self.code}: {msg}" if msg else self.code


class ParameterError(LutstructionError, ValueError):
    code = "invalid-parameter"


class NetlistError(LutstructionError):
    code = "netlist-error"


class UnsupportedWidthError(NetlistError):
    code = "unsupported-width"


class UnsupportedFeatureError(NetlistError):
    code = "unsupported-feature"


class CycleError(NetlistError):
    code = "cycle"


class ResolutionError(NetlistError, KeyError):
    code = "unresolved-signal"

    # KeyError.__str__ would repr() the message
    def __str__(self):
        return LutstructionError.__str__(self)


class CapacityError(LutstructionError):
    code = "capacity"


class RoutingError(LutstructionError):
    code = "routing-failure"

    def __init__(self, msg, nets=()):
        super().__init__(msg)
        self.nets = list(nets)


class FormatError(LutstructionError, ValueError):
    code = "format-error"


class EncodeError(LutstructionError, ValueError):
    code = "encode-error"


class LayoutError(LutstructionError, ValueError):
    code = "layout-error"


class NotConfiguredError(LutstructionError, RuntimeError):
    code = "not-configured"


class TraceError(LutstructionError, ValueError):
    code = "trace-error"


class AddressRangeError(LutstructionError, ValueError):
    code = "address-range"
