"""TCP transport for named pipes: producers serve, consumers connect."""

import asyncio
from contextlib import suppress

import msgpack
from loguru import logger
from pydantic import ValidationError

from ditforge.config.schema import RpcSettings
from ditforge.errors import DitforgeError
from ditforge.rpc.frame import DType, Frame, encode_frame, read_frame
from ditforge.rpc.peers import parse_addr
from ditforge.rpc.registry import ConsumerHandle, PipeDecl, PipeRegistry

HELLO = "$hello"
EOS = "$eos"


class HandshakeError(DitforgeError):
    """Raised when a connection does not open with a valid consumer hello."""


def control_frame(name: str, payload: bytes = b"") -> Frame:
    return Frame(seq_no=0, name=name, dtype=DType.uint8, shape=(len(payload),), payload=payload)


def hello_frame(decl: PipeDecl) -> Frame:
    return control_frame(HELLO, msgpack.packb(decl.model_dump(exclude_none=True)))


def parse_hello(frame: Frame | None) -> PipeDecl:
    if frame is None or frame.name != HELLO:
        raise HandshakeError("connection did not open with a hello frame")
    try:
        decl = PipeDecl.model_validate(msgpack.unpackb(frame.payload))
    except (ValidationError, ValueError, msgpack.UnpackException) as e:
        raise HandshakeError(f"bad hello: {e}") from e
    if decl.role != "consumer":
        raise HandshakeError("only consumers connect to a pipe server")
    return decl


class PipeServer:
    """
    Producer-side endpoint.

    Every accepted connection becomes a consumer of the local registry and a
    driver task forwards that consumer's share onto the socket.
    """

    def __init__(
        self,
        registry: PipeRegistry,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self.registry = registry
        self.settings = registry.settings
        self.host = host
        self._port = port
        self._server: asyncio.Server | None = None
        self._drivers: set[asyncio.Task] = set()

    @classmethod
    def from_addr(cls, registry: PipeRegistry, addr: str) -> "PipeServer":
        host, port = parse_addr(addr)
        return cls(registry, host, port)

    @property
    def port(self) -> int:
        if self._server is None or not self._server.sockets:
            return self._port
        return self._server.sockets[0].getsockname()[1]

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._accept, self.host, self._port)
        logger.info(f"Pipe server listening on {self.host}:{self.port}")

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            with suppress(Exception):
                await self._server.wait_closed()
            self._server = None
        for task in list(self._drivers):
            task.cancel()
        await asyncio.gather(*self._drivers, return_exceptions=True)
        logger.info("Pipe server stopped")

    async def drain(self, timeout: float | None = None) -> bool:
        """Wait for every connection driver to flush its share and end; False on timeout."""
        timeout = self.settings.connect_timeout_s if timeout is None else timeout
        pending = set(self._drivers)
        if not pending:
            return True
        _, left = await asyncio.wait(pending, timeout=timeout)
        if left:
            logger.warning(f"{len(left)} consumer connections still flushing after {timeout}s")
        return not left

    async def wait_for_consumers(self, name: str, count: int, timeout: float | None = None) -> None:
        """Wait until `count` consumers have joined the pipe."""
        timeout = self.settings.connect_timeout_s if timeout is None else timeout
        loop = asyncio.get_running_loop()
        end = loop.time() + timeout
        while len(self._consumers(name)) < count:
            if loop.time() >= end:
                raise HandshakeError(
                    f"only {len(self._consumers(name))} of {count} consumers joined {name!r} "
                    f"within {timeout}s"
                )
            await asyncio.sleep(0.01)

    def _consumers(self, name: str) -> dict[str, ConsumerHandle]:
        pipe = self.registry._pipes.get(name)
        return pipe.consumers if pipe else {}

    async def _accept(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.current_task()
        if task is not None:
            self._drivers.add(task)
        peer = writer.get_extra_info("peername")
        try:
            try:
                hello = await asyncio.wait_for(
                    read_frame(reader, self.settings.max_payload_bytes),
                    self.settings.connect_timeout_s,
                )
                handle = self.registry.declare(parse_hello(hello))
            except (DitforgeError, TimeoutError) as e:
                logger.warning(f"Rejected connection from {peer}: {e}")
                return
            await self._drive(handle, reader, writer)
        finally:
            writer.close()
            with suppress(Exception):
                await writer.wait_closed()
            if task is not None:
                self._drivers.discard(task)

    async def _drive(
        self, handle: ConsumerHandle, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        # Consumers send nothing after the hello, so EOF means they left
        gone = asyncio.ensure_future(reader.read())
        try:
            while True:
                nxt = asyncio.ensure_future(handle.recv())
                done, _ = await asyncio.wait({nxt, gone}, return_when=asyncio.FIRST_COMPLETED)
                if nxt not in done:
                    nxt.cancel()
                    with suppress(asyncio.CancelledError):
                        await nxt
                    break
                frame = nxt.result()
                if frame is None:
                    writer.write(encode_frame(control_frame(EOS)))
                    await writer.drain()
                    break
                writer.write(encode_frame(frame))
                await writer.drain()
        except (ConnectionError, DitforgeError) as e:
            logger.warning(f"Consumer {handle.endpoint} connection failed: {e}")
        finally:
            gone.cancel()
            await handle.close()


class PipeClient:
    """Consumer-side connection to one producer."""

    def __init__(self, addr: str, decl: PipeDecl, settings: RpcSettings | None = None):
        if decl.role != "consumer":
            raise HandshakeError("PipeClient declares consumers only")
        self.host, self.port = parse_addr(addr)
        self.decl = decl
        self.settings = settings or RpcSettings()
        self._reader: asyncio.StreamReader | None = None
        self._writer: asyncio.StreamWriter | None = None
        self._ended = False

    async def connect(self) -> None:
        try:
            self._reader, self._writer = await asyncio.wait_for(
                asyncio.open_connection(self.host, self.port), self.settings.connect_timeout_s
            )
        except (OSError, TimeoutError) as e:
            raise HandshakeError(f"cannot reach {self.host}:{self.port} ({e})") from e
        self._writer.write(encode_frame(hello_frame(self.decl)))
        await self._writer.drain()
        logger.debug(f"Connected to {self.host}:{self.port} for {self.decl.name!r}")

    async def recv(self) -> Frame | None:
        if self._ended:
            return None
        if self._reader is None:
            raise HandshakeError("client is not connected")
        frame = await read_frame(self._reader, self.settings.max_payload_bytes)
        if frame is None or frame.name == EOS:
            self._ended = True
            return None
        return frame

    def __aiter__(self) -> "PipeClient":
        return self

    async def __anext__(self) -> Frame:
        frame = await self.recv()
        if frame is None:
            raise StopAsyncIteration
        return frame

    async def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            with suppress(Exception):
                await self._writer.wait_closed()
            self._writer = None

    async def __aenter__(self) -> "PipeClient":
        await self.connect()
        return self

    async def __aexit__(self, *exc: object) -> None:
        await self.close()
