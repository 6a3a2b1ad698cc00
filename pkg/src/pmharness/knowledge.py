"""Per-agent note, belief and plan storage with size limits."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

MAX_NOTE_BYTES = 10_240
MAX_NOTES = 100


class NoteKind(str, Enum):
    NOTE = "note"
    BELIEF = "belief"
    PLAN = "plan"


class NoteLimitError(ValueError):
    pass


@dataclass(frozen=True)
class Note:
    key: str
    body: str
    kind: NoteKind
    updated: int  # logical clock; larger is more recent

    def to_dict(self) -> dict:
        return {"key": self.key, "body": self.body, "kind": self.kind.value, "updated": self.updated}


class KnowledgeStore:
    """Isolated key/value notes per agent.

    Search is a case-insensitive substring match over keys and bodies and
    returns the most recently written notes first.
    """

    def __init__(self, max_note_bytes: int = MAX_NOTE_BYTES, max_notes: int = MAX_NOTES):
        self.max_note_bytes = max_note_bytes
        self.max_notes = max_notes
        self._spaces: dict[str, dict[str, Note]] = {}
        self._clock = 0

    def _space(self, agent_id: str) -> dict[str, Note]:
        return self._spaces.setdefault(agent_id, {})

    def _check_body(self, body: str) -> None:
        size = len(body.encode("utf-8"))
        if size > self.max_note_bytes:
            raise NoteLimitError(
                f"note body is {size} bytes; limit is {self.max_note_bytes} bytes"
            )

    def put_note(self, agent_id: str, key: str, body: str, kind: NoteKind = NoteKind.NOTE) -> Note:
        self._check_body(body)
        space = self._space(agent_id)
        if key not in space and len(space) >= self.max_notes:
            raise NoteLimitError(f"note count limit of {self.max_notes} reached")
        self._clock += 1
        note = Note(key, body, NoteKind(kind), self._clock)
        space[key] = note
        return note

    def edit_note(self, agent_id: str, key: str, body: str) -> Note:
        space = self._space(agent_id)
        if key not in space:
            raise KeyError(f"no note named {key!r}")
        return self.put_note(agent_id, key, body, space[key].kind)

    def put_belief(self, agent_id: str, key: str, body: str) -> Note:
        return self.put_note(agent_id, key, body, NoteKind.BELIEF)

    def put_plan(self, agent_id: str, key: str, body: str) -> Note:
        return self.put_note(agent_id, key, body, NoteKind.PLAN)

    def get(self, agent_id: str, key: str) -> Note | None:
        return self._spaces.get(agent_id, {}).get(key)

    def search_notes(self, agent_id: str, query: str, kind: NoteKind | None = None) -> list[Note]:
        needle = query.lower()
        hits = [
            n for n in self._spaces.get(agent_id, {}).values()
            if (kind is None or n.kind is kind)
            and (needle in n.key.lower() or needle in n.body.lower())
        ]
        return sorted(hits, key=lambda n: -n.updated)

    def notes(self, agent_id: str) -> list[Note]:
        return sorted(self._spaces.get(agent_id, {}).values(), key=lambda n: -n.updated)
