"""Exception hierarchy shared by the simulator and protocol modules."""


class SatSplitError(Exception):
    """Base class for all errors raised by this package."""


# --- simulation engine ---

class SchedulingInPast(SatSplitError):
    """An event was scheduled with fire_at earlier than the current clock."""


class NoRoute(SatSplitError):
    """No role-path connects the two nodes."""


class InvalidParameter(SatSplitError):
    """A topology or scenario parameter is out of its valid range."""


# --- configuration / CLI ---

class ConfigError(SatSplitError):
    """Bad scenario or topology configuration.

    Carries file/line diagnostics when parsed from a config file.
    """

    def __init__(self, message, *, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        elif field is not None:
            prefix = f"{field}: "
        super().__init__(prefix + message)


class UnknownKnob(ConfigError):
    """A sweep was requested over a parameter that is not a recognized knob."""


# --- TLS interception ---

class MalformedSni(SatSplitError):
    """ClientHello carried an empty or unparseable server name."""


# --- keyless delegation channel ---

class Unauthorized(SatSplitError):
    """Terminal has no provisioned client certificate for the channel."""


class ChannelDown(SatSplitError):
    """The delegation channel is not up (never established or revoked)."""


class RevokedChannel(ChannelDown):
    """The delegation channel was revoked by the origin."""


class KxMismatch(SatSplitError):
    """Private-key operation does not match the session's key-exchange mode."""


# --- DNS / certificate pinning ---

class NxDomain(SatSplitError):
    """No TLSA record published for the requested domain."""


class BogusSignature(SatSplitError):
    """TLSA response failed DNSSEC validation."""


# --- encrypted content-encoding codec ---

class EceError(SatSplitError):
    """Base class for content-encoding codec failures."""


class InvalidRecordSize(EceError):
    """Record size below the 18-octet minimum."""


class UnknownKeyId(EceError):
    """No keying material available for the body's key identifier."""


class AuthenticationFailure(EceError):
    """AEAD tag verification failed for a record."""


class FramingError(EceError):
    """Record layout or padding delimiters violate the coding rules."""


# --- broadcast cache ---

class KeyEpochMismatch(SatSplitError):
    """Cache entry was encrypted under an epoch whose key is no longer obtainable."""


class SessionExpired(SatSplitError):
    """The TLS session's key material is past its time-to-live."""
