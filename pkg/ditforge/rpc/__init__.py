"""Named-pipe data plane with broadcast and spray delivery."""

from ditforge.rpc.frame import (
    DType,
    Frame,
    FrameCorruptError,
    FrameDecoder,
    FrameEncodeError,
    decode_frame,
    encode_frame,
    frame_from_array,
    frame_to_array,
    read_frame,
)
from ditforge.rpc.metrics import GroupMetrics, HistogramSnapshot, PipeMetrics
from ditforge.rpc.peers import PeerConsumer, PeerPipe, PeersFile, parse_addr
from ditforge.rpc.registry import (
    BackpressureTimeoutError,
    ConsumerHandle,
    PipeClosedError,
    PipeConflictError,
    PipeDecl,
    PipeRegistry,
    ProducerHandle,
    SendAck,
    SequenceError,
)
from ditforge.rpc.runners import DemoReport, run_consumer, run_demo, run_producer
from ditforge.rpc.transfer import (
    LinkModel,
    TransferReport,
    measure_loopback,
    model_transfer,
    pipelined_transfer,
)
from ditforge.rpc.transport import HandshakeError, PipeClient, PipeServer

__all__ = [
    "BackpressureTimeoutError",
    "ConsumerHandle",
    "DType",
    "DemoReport",
    "Frame",
    "FrameCorruptError",
    "FrameDecoder",
    "FrameEncodeError",
    "GroupMetrics",
    "HandshakeError",
    "HistogramSnapshot",
    "LinkModel",
    "PeerConsumer",
    "PeerPipe",
    "PeersFile",
    "PipeClient",
    "PipeClosedError",
    "PipeConflictError",
    "PipeDecl",
    "PipeMetrics",
    "PipeRegistry",
    "PipeServer",
    "ProducerHandle",
    "SendAck",
    "SequenceError",
    "TransferReport",
    "decode_frame",
    "encode_frame",
    "frame_from_array",
    "frame_to_array",
    "measure_loopback",
    "model_transfer",
    "parse_addr",
    "pipelined_transfer",
    "read_frame",
    "run_consumer",
    "run_demo",
    "run_producer",
]
