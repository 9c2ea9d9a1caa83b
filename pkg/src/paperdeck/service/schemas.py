"""Request and response bodies for the session HTTP API."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class SessionCreated(BaseModel):
    session_id: str
    state: str


class SessionState(BaseModel):
    session_id: str
    state: str
    theme_name: str
    created: str
    updated: str
    error: str
    revision: int
    artifacts: dict[str, bool]


class EditRequestBody(BaseModel):
    request: str = Field(min_length=1)


class StepOutcomeModel(BaseModel):
    action: str
    description: str
    ok: bool
    detail: str = ""


class EditResponseBody(BaseModel):
    ok: bool
    steps: list[StepOutcomeModel]
    failed_step: Optional[int] = None
    error: str = ""
    rolled_back: bool = False
    revision: int


class HistoryActionModel(BaseModel):
    action: str
    description: str


class HistoryEntryModel(BaseModel):
    request: str
    ok: bool
    timestamp: float
    revision: int
    error: str = ""
    actions: list[HistoryActionModel] = []


class HistoryResponse(BaseModel):
    session_id: str
    entries: list[HistoryEntryModel]
