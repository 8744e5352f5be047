"""Exception hierarchy shared across the stack.

Every error a caller may want to branch on gets its own class; the class
name doubles as the machine-readable reason code on the wire.
"""


class A2AXError(Exception):
    """Base class for all domain errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- crypto ---------------------------------------------------------------

class InvalidKey(A2AXError):
    pass


class InvalidSignature(A2AXError):
    pass


# --- ledger ---------------------------------------------------------------

class DuplicateAccount(A2AXError):
    pass


class UnknownToken(A2AXError):
    pass


class UnknownAgent(A2AXError):
    pass


class UnknownFactory(A2AXError):
    pass


class UnknownRegistry(A2AXError):
    pass


class NotOwner(A2AXError):
    pass


class NotAuthorized(A2AXError):
    pass


class AlreadyEnrolled(A2AXError):
    pass


class InsufficientFunds(A2AXError):
    pass


class BadSignature(A2AXError):
    pass


class AuthorizationExpired(A2AXError):
    pass


class AuthorizationNotYetValid(A2AXError):
    pass


class NonceAlreadyUsed(A2AXError):
    pass


# --- agent card -----------------------------------------------------------

class InvalidCard(A2AXError):
    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ParseError(A2AXError):
    pass


class MalformedExtension(A2AXError):
    pass


# --- wire formats ---------------------------------------------------------

class NotBase64(A2AXError):
    pass


class MalformedPayload(A2AXError):
    pass


class UnsupportedScheme(A2AXError):
    pass


class UnsupportedVersion(A2AXError):
    pass


# --- client / transport ---------------------------------------------------

class TransportError(A2AXError):
    pass


class UnknownSkill(A2AXError):
    pass


class PaymentRejected(A2AXError):
    """Raised when the server rejects a request after payment was attached.

    Carries the decoded failure receipt when the server supplied one.
    """

    def __init__(self, message, receipt=None):
        super().__init__(message)
        self.receipt = receipt


class SpendCapExceeded(A2AXError):
    pass


class LedgerUnavailable(A2AXError):
    pass
