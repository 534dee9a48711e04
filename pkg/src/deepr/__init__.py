"""Convolutional risk model over sequenced medical records."""

from .model import ForwardTrace, ModelConfig, ModelParams, forward
from .sequencer import Admission, RawRecord, Sentence, SequencerConfig, sequence_record
from .train import TrainConfig, init_params, sgd_fit
from .vocab import Vocabulary, build_vocab

__version__ = "0.1.0"
