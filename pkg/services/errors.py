"""
Exception hierarchy shared by the protocol services and the simulator
"""


class AnyTrustError(Exception):
    """Base error for the Any-Trust DKG toolkit"""


class CryptoError(AnyTrustError):
    """Misuse of a cryptographic primitive (bad length, erased key, range)"""


class DecodingError(CryptoError):
    """Bytes that do not decode to a canonical scalar, point or message"""


class ProtocolFailure(AnyTrustError):
    """A protocol assumption was violated and the run cannot produce output"""


class ChainVerificationError(ProtocolFailure):
    """Checkpoint chain walk failed at a specific epoch"""

    def __init__(self, epoch, message):
        super().__init__(f'epoch {epoch}: {message}')
        self.epoch = epoch


class ConfigError(AnyTrustError):
    """Invalid simulation or session configuration"""


class InvariantViolation(AnyTrustError):
    """A simulator verdict failed; names the violated invariant"""

    def __init__(self, invariant, detail=''):
        message = f'invariant violated: {invariant}'
        if detail:
            message += f' ({detail})'
        super().__init__(message)
        self.invariant = invariant
