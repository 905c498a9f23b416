from .branch import (
    Description,
    DescriptionError,
    MSCoTScores,
    PairTransportError,
    cpdg,
    describe_crops,
    mscot,
    run_ordered,
)
from .clients import (
    BoundedClient,
    CachingClient,
    ChatClient,
    HttpChatClient,
    MockClient,
    RetryingClient,
    TransportError,
    build_client,
    fingerprint,
)
from .parse import ParseError, parse_prediction
from .prompts import PromptTemplates


def mock_client(seed: int = 0) -> MockClient:
    return MockClient(seed)


__all__ = [
    "BoundedClient", "CachingClient", "ChatClient", "Description", "DescriptionError",
    "HttpChatClient", "MSCoTScores", "MockClient", "PairTransportError", "ParseError",
    "PromptTemplates", "RetryingClient", "TransportError", "build_client", "cpdg",
    "describe_crops", "fingerprint", "mock_client", "mscot", "parse_prediction", "run_ordered",
]
