"""Far-field meeting speech toolkit.

Multichannel enhancement for distant-microphone meetings: STFT plumbing,
weighted prediction error dereverberation, guided source separation with
complex angular-central Gaussian mixtures and MVDR beamforming, image
source room simulation, diarization and permutation-aware character
error metrics, hypothesis voting, and a small audio-visual fusion stack.
"""

from .errors import (
    DataError,
    FarfieldError,
    InfeasibleLabelError,
    NumericalError,
    ParameterError,
    RangeError,
    UndefinedMetricError,
)
from .formats import (
    PipelineConfig,
    ScoringConfig,
    SessionManifest,
    atomic_write_bytes,
    build_utt_id,
    canonical_json,
    config_fingerprint,
    format_rttm,
    format_utterances,
    load_json,
    load_pipeline_config,
    load_plan,
    load_room,
    parse_manifests,
    parse_pipeline_config,
    parse_room,
    parse_scoring_config,
    parse_stft_config,
    parse_utt_id,
    parse_wpe_config,
    read_rttm,
    read_transcripts,
    read_utterances,
    sha256_bytes,
    sha256_file,
    write_rttm,
)
from .fusion import (
    AttentionParams,
    BlockParams,
    CgmlpParams,
    CrossFusionParams,
    FeatureSequence,
    ParamSeed,
    XorShift64Star,
    branchformer_block,
    cgmlp,
    cross_modal_fuse,
    ctc_loss,
    multi_head_attention,
    read_ftoy,
    resample_indices,
    write_ftoy,
)
from .gss import (
    ActivityPattern,
    BeamformerWeights,
    CacgmmState,
    GssConfig,
    MaskSet,
    cacgmm_posteriors,
    eligible_segments,
    fit_cacgmm,
    gss_enhance,
    mvdr_beamform,
    mvdr_weights,
    segment_seed,
    select_reference_channel,
    spatial_covariance,
)
from .metrics import (
    DiarizationSet,
    DiarSegment,
    SessionScore,
    TranscriptEntry,
    TranscriptSet,
    cpcer,
    der,
    edit_distance,
    normalize_text,
    si_sdr,
)
from .rover import (
    ArcTally,
    NULL_TOKEN,
    WordTransitionNetwork,
    align_into_wtn,
    rover,
)
from .signal import (
    ComplexSpectrogram,
    StftParams,
    WaveformBuffer,
    istft,
    speed_perturb,
    stft,
)
from .simulate import (
    MeetingResult,
    MixturePlan,
    PlannedSource,
    RoomSpec,
    add_noise_at_snr,
    convolve,
    image_source_rir,
    image_sources,
    make_meeting,
)
from .wavio import read_wav, write_wav
from .wpe import WpeConfig, frame_powers, wpe, wpe_objective

__version__ = "0.1.0"

__all__ = [
    "ActivityPattern",
    "ArcTally",
    "AttentionParams",
    "BeamformerWeights",
    "BlockParams",
    "CacgmmState",
    "CgmlpParams",
    "ComplexSpectrogram",
    "CrossFusionParams",
    "DataError",
    "DiarSegment",
    "DiarizationSet",
    "FarfieldError",
    "FeatureSequence",
    "GssConfig",
    "InfeasibleLabelError",
    "MaskSet",
    "MeetingResult",
    "MixturePlan",
    "NULL_TOKEN",
    "NumericalError",
    "ParamSeed",
    "ParameterError",
    "PipelineConfig",
    "PlannedSource",
    "RangeError",
    "RoomSpec",
    "ScoringConfig",
    "SessionManifest",
    "SessionScore",
    "StftParams",
    "TranscriptEntry",
    "TranscriptSet",
    "UndefinedMetricError",
    "WaveformBuffer",
    "WordTransitionNetwork",
    "WpeConfig",
    "XorShift64Star",
    "add_noise_at_snr",
    "align_into_wtn",
    "atomic_write_bytes",
    "branchformer_block",
    "build_utt_id",
    "cacgmm_posteriors",
    "canonical_json",
    "cgmlp",
    "config_fingerprint",
    "convolve",
    "cpcer",
    "cross_modal_fuse",
    "ctc_loss",
    "der",
    "edit_distance",
    "eligible_segments",
    "fit_cacgmm",
    "format_rttm",
    "format_utterances",
    "frame_powers",
    "gss_enhance",
    "image_source_rir",
    "image_sources",
    "istft",
    "load_json",
    "load_pipeline_config",
    "load_plan",
    "load_room",
    "make_meeting",
    "multi_head_attention",
    "mvdr_beamform",
    "mvdr_weights",
    "normalize_text",
    "parse_manifests",
    "parse_pipeline_config",
    "parse_room",
    "parse_scoring_config",
    "parse_stft_config",
    "parse_utt_id",
    "parse_wpe_config",
    "read_ftoy",
    "read_rttm",
    "read_transcripts",
    "read_utterances",
    "read_wav",
    "resample_indices",
    "rover",
    "segment_seed",
    "select_reference_channel",
    "sha256_bytes",
    "sha256_file",
    "si_sdr",
    "spatial_covariance",
    "speed_perturb",
    "stft",
    "wpe",
    "wpe_objective",
    "write_ftoy",
    "write_rttm",
    "write_wav",
    "__version__",
]
