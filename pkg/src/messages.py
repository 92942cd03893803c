# Messages and per-host message buffers.
# Version: 1.0.0
# Provides the copy-carrying Message record and the capacity-bounded MessageBuffer.

from dataclasses import dataclass, field, replace
from typing import Iterator, KeysView

from .errors import SimulationError


@dataclass(frozen=True)
class Message:
    """One copy of an emergency message.

    Copies of the same message share id, endpoints, size and creation
    time; path and received_at belong to the copy.

    Attributes:
        id: Message id such as "M12".
        seq: Creation sequence number (numeric part of the id).
        source: Host id of the creator.
        destination: Host id of the recipient.
        size: Size in bytes.
        created_at: Creation time in sim-seconds.
        path: Host ids this copy has visited, starting at the source.
        received_at: Time the copy entered the buffer holding it.
        response_size: Requested response size in bytes, 0 for none.
    """
    id: str
    seq: int
    source: str
    destination: str
    size: int
    created_at: float
    path: tuple[str, ...] = ()
    received_at: float = 0.0
    response_size: int = 0

    @property
    def hop_count(self) -> int:
        return len(self.path) - 1

    def replicate(self, receiver: str, time: float) -> "Message":
        """The copy the receiver stores after a completed transfer."""
        return replace(self, path=self.path + (receiver,), received_at=time)


@dataclass
class MessageBuffer:
    """Resident message copies of one host, in receive order.

    Attributes:
        capacity: Capacity in bytes.
        used: Bytes currently occupied.
        version: Incremented on every add or remove.
        added: Copies stored so far.
        removed: Copies taken out so far.
    """
    capacity: int
    used: int = 0
    version: int = 0
    added: int = 0
    removed: int = 0
    _messages: dict[str, Message] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self._messages)

    def __contains__(self, message_id: object) -> bool:
        return message_id in self._messages

    def __iter__(self) -> Iterator[Message]:
        return iter(list(self._messages.values()))

    @property
    def free(self) -> int:
        return self.capacity - self.used

    def ids(self) -> set[str]:
        return set(self._messages)

    def id_view(self) -> KeysView[str]:
        """Live view of the resident ids, usable in set expressions without copying."""
        return self._messages.keys()

    def get(self, message_id: str) -> Message | None:
        return self._messages.get(message_id)

    def add(self, message: Message) -> None:
        """Store a copy.

        Raises:
            SimulationError: If the id is already resident or the copy does not fit.
        """
        if message.id in self._messages:
            raise SimulationError(
                f"Buffer already holds {message.id}",
                {"message": message.id}
            )
        if message.size > self.free:
            raise SimulationError(
                f"Buffer overflow storing {message.id}",
                {"message": message.id, "size": message.size, "free": self.free}
            )
        self._messages[message.id] = message
        self.used += message.size
        self.version += 1
        self.added += 1

    def remove(self, message_id: str) -> Message:
        message = self._messages.pop(message_id)
        self.used -= message.size
        self.version += 1
        self.removed += 1
        return message
