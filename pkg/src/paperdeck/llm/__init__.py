from .gateway import (
    CassetteProvider,
    CompletionRequest,
    Gateway,
    HTTPProvider,
    JUDGE_TEMPERATURE,
    PIPELINE_TEMPERATURE,
    Provider,
    ScriptedProvider,
    parse_json_payload,
    request_digest,
)
from .templates import PromptTemplate, load_template

__all__ = [
    "CassetteProvider",
    "CompletionRequest",
    "Gateway",
    "HTTPProvider",
    "JUDGE_TEMPERATURE",
    "PIPELINE_TEMPERATURE",
    "PromptTemplate",
    "Provider",
    "ScriptedProvider",
    "load_template",
    "parse_json_payload",
    "request_digest",
]
