"""Seizure-state classification on LFP streams at desk scale: a fixed-point
band-power filter chain, a tiny 8-bit-quantized MLP, and the harness to
train, evaluate, and compare them on seeded synthetic recordings."""

from .filters import (BiquadCoeffs, BiquadState, EnvelopeState,
                      FilterChainClassifier, FilterDesign, FilterDesignError,
                      FixedBiquadCoeffs, FixedBiquadState,
                      FixedFilterChainClassifier, QuantizationOverflowError,
                      biquad_step, biquad_step_fixed, cascade_response,
                      design_butterworth_bandpass, envelope_step,
                      load_filter_design, make_filter_design, quantize_coeffs,
                      save_filter_design)
from .nn import (ConsensusBuffer, ConvFrontEnd, CnnModel, DenseLayer,
                 DimensionError, MlpModel, QuantizedMlp, conv1d_forward,
                 consensus_output, load_model, quantize_model, save_model)
from .training import (GridResult, LossHistory, TrainConfig,
                       TrainingDivergedError, WindowedDataset, bce_loss,
                       build_cnn, build_mlp, cell_seed, grid_search,
                       rebalance, split_dataset, train_mlp, train_model,
                       window_dataset)
from .synth import (EventAnnotation, Recording, RecordingFormatError,
                    SynthConfig, event_sample_mask, generate_recording,
                    load_recording, save_recording)
from .evaluation import (EventMetrics, FreqAmpMap, ResourceReport, RocCurve,
                         WindowedNetClassifier, detection_latency,
                         event_metrics, expand_window_labels,
                         frequency_response_map, overlap_percent,
                         resource_report, roc_curve, threshold_at_tpr)

__version__ = "0.1.0"
