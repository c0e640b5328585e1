"""Exception types shared across the package."""

PROTO_NONFINITE = "PROTO_NONFINITE"
PROTO_POINTCOUNT = "PROTO_POINTCOUNT"
PROTO_MALFORMED = "PROTO_MALFORMED"
PROTO_DOMAIN = "PROTO_DOMAIN"
PROTO_ADAPTIVE = "PROTO_ADAPTIVE"
PROTO_TIMEOUT = "PROTO_TIMEOUT"
PROTO_EXIT = "PROTO_EXIT"

PROTOCOL_CODES = {
    PROTO_NONFINITE: "a point, value or prediction is NaN or infinite",
    PROTO_POINTCOUNT: "the client declared a number of points (or functions) other than n, "
                      "or returned the wrong number of predictions",
    PROTO_MALFORMED: "a line is not a JSON object of the expected type and shape",
    PROTO_DOMAIN: "a declared point lies outside [0,1]^d or a function has the wrong grid size",
    PROTO_ADAPTIVE: "the client declared different points for the same (n, d) in the same run",
    PROTO_TIMEOUT: "no complete reply within the configured timeout",
    PROTO_EXIT: "the client process exited or closed its output early",
}


class GapbenchError(Exception):
    pass


class ConfigError(GapbenchError):
    """A configuration failed validation; ``problems`` lists every violation."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ProtocolError(GapbenchError):
    """A reconstruction algorithm broke the sampling protocol."""

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class NonFiniteError(ValueError):
    pass
