"""Diffusion-inpainting data augmentation for surface-defect detection.

The pipeline inpaints plausible defects into known-good images inside
user-chosen region masks, then measures how much the generated
positives help a downstream classifier, against a training-free
fractal-noise baseline.
"""

from .backends import (
    BackendDescriptor,
    DiagInpaintBackend,
    GenerationTriplet,
    MaskLibrary,
    PromptSpec,
    RemoteInpaintBackend,
    UnconditionalDiffusionBackend,
    default_prompts,
    generate_augmented_set,
    map_prompt_to_token,
    remote_inpaint,
    sample_triplet,
)
from .classifier import DefectClassifier, Prediction, TrainConfig, bce_loss, predict, train
from .core import (
    BinaryMask,
    DatasetBundle,
    ImageGrid,
    LabeledSample,
    RunConfig,
    derive_rng,
    load_mask_png,
    load_png,
    quantize8,
    resize_image,
    resize_mask,
    save_mask_png,
    save_png,
    validate_pair,
)
from .diffusion import (
    ConditionToken,
    DenoisingDiffusion,
    NoisePredictor,
    TrainDiffusionConfig,
    forward_sample,
    guided_epsilon,
    inpaint_sample,
    reverse_sample,
    train_denoiser,
    training_loss,
)
from .exceptions import (
    BackendError,
    CheckpointError,
    ConfigurationError,
    DiagforgeError,
    DimensionError,
    GenerationError,
    ManifestError,
    MetricError,
    SamplingError,
    TrainingError,
    ValidationError,
)
from .experiment import (
    GenerationStore,
    PretrainConfig,
    ReportTable,
    ScenarioConfig,
    run_fid_comparison,
    run_scenario,
)
from .manifest import load_ksdd2, load_manifest, save_bundle
from .memseg import PerlinParams, make_roi, perlin_noise, superimpose, generate_baseline_set
from .metrics import (
    FeatureGaussian,
    average_precision,
    extract_features,
    fid,
    fit_gaussian,
    frechet_distance,
    pr_curve,
    precision_recall,
)
from .schedule import NoiseSchedule, make_schedule
from .synthetic import (
    CorpusSpec,
    DefectSpec,
    TextureParams,
    build_corpus,
    gen_negative,
    gen_positive,
    synthesize_defect_bank,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
