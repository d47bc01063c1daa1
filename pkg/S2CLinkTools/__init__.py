from __future__ import absolute_import

from S2CLinkTools._version import version as __version__
from S2CLinkTools._doc import __doc__

from S2CLinkTools.core.errors import (ConfigurationError, CapacityError, ShapeError, EncodingError,
                                      OutOfStreamError, DomainError, LabelMapError, WeightFormatError,
                                      ContractViolation)
from S2CLinkTools.core.config import read_config
from S2CLinkTools.core.frame_codec import (CodecConfig, FrameKind, FramePayload, segment_stream, join_payloads,
                                           encode_frame, decode_frame, make_overhead_frame, sync_codeword,
                                           frames_for_text, text_from_frames, text_to_bits, bits_to_text,
                                           payload_capacity, base_frame)
from S2CLinkTools.core.channel import (LinkConfig, ChannelParams, TxSchedule, CapturedFrame, distort,
                                       sample_rx, capture_stream, build_schedule, link_throughput,
                                       save_captures, load_captures)
from S2CLinkTools.core.dataset import (DatasetSpec, DatasetManifest, ExperimentSpec, EXPERIMENTS,
                                       generate_dataset, split_dataset, load_batch)
from S2CLinkTools.core.cnn import (ModelSpec, TrainConfig, TrainReport, FrameClassifier, AdamState,
                                   conv2d_valid, maxpool2, dense, forward, bce_loss, backward, adam_init,
                                   adam_step, train, save_weights, load_weights)
from S2CLinkTools.core.sync import (SyncState, SyncReport, CodewordDetector, dedup_stream, detect_overhead,
                                    align_and_recover, system_gain)
from S2CLinkTools.core.metrics import ConfusionMatrix, Metrics, confusion, metrics, macro_average
from S2CLinkTools.core.harness import (HarnessConfig, ExperimentReport, run_experiment, replay_experiment,
                                       run_link_benchmark, benchmark_all)
import S2CLinkTools.core.graph as graph
