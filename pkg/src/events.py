# Simulation events shared by the world, the metrics accumulator and the event log.
# Version: 1.0.0

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, TextIO

from .errors import FileLoadError


class EventKind(Enum):
    MESSAGE_CREATED = "MessageCreated"
    TRANSFER_STARTED = "TransferStarted"
    TRANSFER_RELAYED = "TransferRelayed"
    TRANSFER_ABORTED = "TransferAborted"
    MESSAGE_DROPPED = "MessageDropped"
    MESSAGE_REMOVED = "MessageRemoved"
    MESSAGE_DELIVERED = "MessageDelivered"
    CONNECTION_UP = "ConnectionUp"
    CONNECTION_DOWN = "ConnectionDown"


@dataclass(frozen=True)
class SimEvent:
    """Something that happened in the world at a given time.

    Attributes:
        time: Sim-seconds.
        kind: Event kind.
        host: Acting host (creator, sender, holder, lower connection endpoint).
        peer: Other host (destination, receiver, upper connection endpoint).
        message_id: Message concerned, if any.
        created_at: Creation time of the message (created/delivered events).
        hop_count: Hops of the delivered copy.
        residency: Time the copy spent in the buffer it left (drops/removals).
    """
    time: float
    kind: EventKind
    host: str
    peer: str | None = None
    message_id: str | None = None
    created_at: float | None = None
    hop_count: int | None = None
    residency: float | None = None


EventListener = Callable[[SimEvent], None]


def format_event(event: SimEvent) -> str:
    """Tab-separated `time kind subject...` log line."""
    fields = [f"{event.time:.4f}", event.kind.value, event.host]
    if event.peer is not None:
        fields.append(event.peer)
    if event.message_id is not None:
        fields.append(event.message_id)
    if event.hop_count is not None:
        fields.append(f"hops={event.hop_count}")
    return "\t".join(fields)


class EventLogWriter:
    """Listener that writes one formatted line per event."""

    def __init__(self, stream: TextIO) -> None:
        self.stream = stream
        self.count = 0

    def __call__(self, event: SimEvent) -> None:
        self.stream.write(format_event(event) + "\n")
        self.count += 1


def open_event_log(path: str | Path) -> TextIO:
    """Open an event log for writing, creating parent directories."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", encoding="utf-8", newline="\n")
    except OSError as e:
        raise FileLoadError(str(path), e)
