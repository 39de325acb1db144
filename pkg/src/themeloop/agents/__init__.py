"""Role-conditioned agents over a pluggable text-generation backend."""

from .backends import (
    API_KEY_ENV,
    AgentRequest,
    Backend,
    BackendConfig,
    MockBackend,
    RemoteBackend,
    ReplayBackend,
    make_backend,
)
from .core import (
    DEFAULT_IDENTITIES,
    NO_IDENTITY,
    ExchangeRecorder,
    Identity,
    code_chunk,
    code_chunks,
    credibility_only_scorer,
    critique,
    derive_seed,
    generate_themes,
    identities_by_name,
    load_template,
    polish_themes,
    render_template,
)
from ..model import AgentExchange

__all__ = [
    "API_KEY_ENV",
    "AgentExchange",
    "AgentRequest",
    "Backend",
    "BackendConfig",
    "DEFAULT_IDENTITIES",
    "ExchangeRecorder",
    "Identity",
    "MockBackend",
    "NO_IDENTITY",
    "RemoteBackend",
    "ReplayBackend",
    "code_chunk",
    "code_chunks",
    "credibility_only_scorer",
    "critique",
    "derive_seed",
    "generate_themes",
    "identities_by_name",
    "load_template",
    "make_backend",
    "polish_themes",
    "render_template",
]
