"""Static pipe topology loaded from a peers file."""

import json
from pathlib import Path

from pydantic import BaseModel, Field, ValidationError

from ditforge.rpc.registry import Mode
from ditforge.workload.types import SpecValidationError


class PeerConsumer(BaseModel):
    addr: str
    job_id: str


class PeerPipe(BaseModel):
    name: str
    producers: list[str] = Field(min_length=1)
    consumers: list[PeerConsumer] = Field(default_factory=list)
    mode: Mode = "broadcast"

    def consumers_of(self, job_id: str) -> list[PeerConsumer]:
        return [c for c in self.consumers if c.job_id == job_id]


class PeersFile(BaseModel):
    pipes: list[PeerPipe]

    def pipe(self, name: str) -> PeerPipe:
        for pipe in self.pipes:
            if pipe.name == name:
                return pipe
        raise SpecValidationError(f"pipe {name!r} is not in the peers file")

    @classmethod
    def load(cls, path: Path) -> "PeersFile":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls.model_validate(data)
        except (OSError, json.JSONDecodeError, ValidationError) as e:
            raise SpecValidationError(f"{path}: invalid peers file ({e})") from e


def parse_addr(addr: str) -> tuple[str, int]:
    """Split "host:port"; a bare ":port" listens on every interface."""
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise SpecValidationError(f"address {addr!r} is not host:port")
    return host or "0.0.0.0", int(port)
