"""Exception types shared across the package."""


class CashTreeError(Exception):
    """Base class for all package errors."""


# -- search space ------------------------------------------------------------

class SchemaError(CashTreeError):
    """Search-space document violates the file schema."""


class InvariantError(CashTreeError):
    """A domain-type invariant does not hold."""


class UnknownAlgorithm(CashTreeError):
    """Algorithm id not present in the search space."""


class DimensionMismatch(CashTreeError):
    """Encoded vector does not match the algorithm's dimensionality."""


class AlgorithmMismatch(CashTreeError):
    """Configuration belongs to a different algorithm than expected."""


class OutOfBounds(CashTreeError):
    """Value outside its declared parameter range."""


class LengthMismatch(CashTreeError):
    """Paired sequences have different lengths."""


class ShapeMismatch(CashTreeError):
    """Array arguments have incompatible shapes."""


# -- tree --------------------------------------------------------------------

class NoLeaf(CashTreeError):
    """Every node in the subtree is fully expanded."""


class FullyExpanded(CashTreeError):
    """Node has no open directive slot."""


# -- surrogate ---------------------------------------------------------------

class InsufficientData(CashTreeError):
    """Too few observations for the requested operation."""


class NumericalFailure(CashTreeError):
    """Factorization failed even after jitter escalation."""


class EmptyPool(CashTreeError):
    """Candidate pool is empty."""


# -- LLM ----------------------------------------------------------------------

class ParseFailure(CashTreeError):
    """LLM response could not be turned into a valid configuration."""


class MalformedPrompt(CashTreeError):
    """Mock client could not locate the expected prompt markers."""


class LlmError(CashTreeError):
    """Base class for chat-client failures."""


class LlmUnavailable(LlmError):
    """All retries exhausted."""


class LlmTimeout(LlmError):
    """Request exceeded the configured timeout."""


class AuthError(LlmError):
    """Endpoint rejected the credentials."""


# -- evaluation --------------------------------------------------------------

class EvalError(CashTreeError):
    """Base class for evaluator failures."""


class EvalTimeout(EvalError):
    """Evaluation exceeded its time limit."""


class EvalCrash(EvalError):
    """Evaluator reported a failure for this configuration."""


class ProtocolError(EvalError):
    """External worker violated the wire protocol."""
