"""Experiment orchestration: scenario runs, FID comparisons, reports.

A scenario row generates I_a with one strategy, trains the classifier
on I_n (+ I_p in full-shot) plus I_a, and evaluates AP/precision/recall
on the untouched test split. The test split is fingerprinted before and
after the run; generation and training only ever receive train-side
samples, so the check firing would mean a programming error, not bad
luck.

Generated sets are content-addressed in a GenerationStore: per-sample
seed streams and fixed chunking make shorter runs exact prefixes of
longer ones, so a stored 200-sample set legitimately serves any
n_aug <= 200 with the same strategy, seed, and pools.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends import (
    DiagInpaintBackend,
    MaskLibrary,
    PromptSpec,
    UnconditionalDiffusionBackend,
    default_prompts,
    generate_augmented_set,
)
from .classifier import TrainConfig, train
from .core import DatasetBundle, LabeledSample, load_mask_png, load_png, quantize8, save_mask_png, save_png
from .diffusion import DenoisingDiffusion
from .exceptions import ConfigurationError, DiagforgeError, ManifestError, MetricError
from .manifest import load_manifest
from .memseg import PerlinParams, generate_baseline_set
from .metrics import average_precision, fid, precision_recall
from .synthetic import CorpusSpec, build_corpus, synthesize_defect_bank

SCENARIOS = ("zero_shot", "full_shot")
SCENARIO_STRATEGIES = ("diag_inpaint", "unconditional_diffusion", "memseg_baseline")


@dataclass(frozen=True)
class PretrainConfig:
    """Diffusion pretraining on the corpus-independent defect bank.

    The bank seed stream is unrelated to any corpus seed, so zero-shot
    runs never lean on corpus positives.
    """

    n_bank: int = 64
    n_clean: int = 32
    bank_gain: float = 2.5
    size: tuple[int, int] = (64, 64)
    bank_seed: int = 777
    T: int = 200
    hidden: int = 16
    emb_dim: int = 32
    epochs: int = 250
    batch_size: int = 16
    learning_rate: float = 2e-3
    p_drop: float = 0.1
    seed: int = 0
    dtype: str = "float32"

    def estimator(self) -> DenoisingDiffusion:
        return DenoisingDiffusion(
            T=self.T,
            hidden=self.hidden,
            emb_dim=self.emb_dim,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            p_drop=self.p_drop,
            seed=self.seed,
            dtype=self.dtype,
        )


@dataclass(frozen=True)
class ScenarioConfig:
    """One scenario x strategy sweep over (n_aug, seed) grid."""

    scenario: str = "zero_shot"
    strategy: str = "diag_inpaint"
    n_augs: tuple[int, ...] = (100,)
    seeds: tuple[int, ...] = (0, 1, 2)
    corpus: CorpusSpec | str = field(default_factory=CorpusSpec)
    eval_test_pos: int | None = None
    classifier: TrainConfig = field(default_factory=TrainConfig)
    classifier_width: int = 16
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    guidance_scale: float = 80.0
    paired_sampling: bool = False
    opacity: float = 0.75
    perlin: PerlinParams = field(default_factory=PerlinParams)
    cache_dir: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.strategy not in SCENARIO_STRATEGIES:
            raise ConfigurationError(
                f"strategy must be one of {SCENARIO_STRATEGIES}, got {self.strategy!r}"
            )
        if any(n < 0 for n in self.n_augs):
            raise ConfigurationError("n_aug values must be >= 0")
        if not self.seeds:
            raise ConfigurationError("need at least one seed")


@dataclass
class ReportTable:
    """Per-row results plus derived aggregates."""

    rows: list = field(default_factory=list)
    fid_rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def aggregates(self) -> list[dict]:
        groups: dict = {}
        for r in self.rows:
            if r.get("error"):
                continue
            groups.setdefault((r["strategy"], r["n_aug"]), []).append(r)
        out = []
        for (strategy, n_aug), rs in sorted(groups.items()):
            aps = np.array([r["ap"] for r in rs])
            out.append(
                {
                    "strategy": strategy,
                    "n_aug": n_aug,
                    "seeds": len(rs),
                    "ap_mean": float(aps.mean()),
                    "ap_std": float(aps.std(ddof=1)) if len(rs) > 1 else 0.0,
                    "precision_mean": float(np.mean([r["precision"] for r in rs])),
                    "recall_mean": float(np.mean([r["recall"] for r in rs])),
                }
            )
        return out

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "fid_rows": self.fid_rows,
            "aggregates": self.aggregates(),
            "meta": self.meta,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "ReportTable":
        doc = json.loads(Path(path).read_text())
        return cls(rows=doc.get("rows", []), fid_rows=doc.get("fid_rows", []), meta=doc.get("meta", {}))


def prepare_bundle(corpus) -> DatasetBundle:
    if isinstance(corpus, CorpusSpec):
        return build_corpus(corpus)
    return load_manifest(corpus)


def fingerprint_samples(samples) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(s.sample_id.encode())
        h.update(bytes([s.label]))
        h.update(s.image.data.tobytes())
        if s.mask is not None:
            h.update(s.mask.data.tobytes())
    return h.hexdigest()


def _config_key(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]


def save_generated_set(samples: list[LabeledSample], directory) -> Path:
    """Write a generated set as PNGs plus meta.json, in order."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(samples):
        img_rel = f"{i:05d}.png"
        save_png(s.image, d / img_rel)
        mask_rel = None
        if s.mask is not None:
            mask_rel = f"{i:05d}_mask.png"
            save_mask_png(s.mask, d / mask_rel)
        entries.append({"id": s.sample_id, "image": img_rel, "mask": mask_rel, "origin": s.origin})
    (d / "meta.json").write_text(json.dumps({"n": len(samples), "samples": entries}))
    return d


def load_generated_set(directory, n: int | None = None) -> list[LabeledSample]:
    d = Path(directory)
    meta_path = d / "meta.json"
    if not meta_path.is_file():
        raise ManifestError(f"no generated set at {d} (missing meta.json)")
    meta = json.loads(meta_path.read_text())
    if n is None:
        n = meta["n"]
    if meta["n"] < n:
        raise ManifestError(f"generated set at {d} holds {meta['n']} samples, need {n}")
    out = []
    for entry in meta["samples"][:n]:
        img = load_png(d / entry["image"], channels=1)
        mask = load_mask_png(d / entry["mask"]) if entry.get("mask") else None
        out.append(
            LabeledSample(image=img, label=1, origin=entry["origin"], mask=mask, sample_id=entry["id"])
        )
    return out


class GenerationStore:
    """Disk cache of generated sets, keyed by strategy configuration.

    Stored samples are 8-bit quantized PNGs; generation quantizes the
    same way, so a cache hit is bit-identical to a fresh run. Shorter
    requests slice a stored prefix, which is exact because sample i
    depends only on (seed, i).
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, key: str) -> Path:
        return self.root / key

    def fetch(self, key: str, n: int) -> list[LabeledSample] | None:
        d = self._dir(key)
        meta_path = d / "meta.json"
        if not meta_path.is_file():
            return None
        if json.loads(meta_path.read_text())["n"] < n:
            return None
        return load_generated_set(d, n)

    def put(self, key: str, samples: list[LabeledSample]) -> None:
        save_generated_set(samples, self._dir(key))

    def ensure(self, key: str, n: int, producer) -> list[LabeledSample]:
        hit = self.fetch(key, n)
        if hit is not None:
            return hit
        samples = producer(n)
        self.put(key, samples)
        return samples


def _quantized(samples: list[LabeledSample]) -> list[LabeledSample]:
    return [dataclasses.replace(s, image=quantize8(s.image)) for s in samples]


def get_pretrained_diffusion(cache_dir, cfg: PretrainConfig, pairs=None, tag: str = "bank-tokens"):
    """Train (or reload) a diffusion checkpoint for a training source.

    pairs defaults to the synthetic defect bank with kind tokens; pass
    explicit (image, token) pairs for the unconditional variants.
    """
    if pairs is None:
        bank = synthesize_defect_bank(
            cfg.n_bank, cfg.size, cfg.bank_seed, gain=cfg.bank_gain, n_clean=cfg.n_clean
        )
        pairs = [(img, kind) for img, _, kind in bank]
    key_payload = {
        "cfg": dataclasses.asdict(cfg),
        "tag": tag,
        "data": fingerprint_samples(
            LabeledSample(image=img, label=1, origin="real", sample_id=f"p{i}")
            for i, (img, _) in enumerate(pairs)
        ),
        "tokens": [str(t) for _, t in pairs],
    }
    key = _config_key(key_payload)
    if cache_dir is not None:
        path = Path(cache_dir) / f"diffusion-{key}.npz"
        if path.is_file():
            return DenoisingDiffusion.load(path)
    est = cfg.estimator()
    est.fit([img for img, _ in pairs], [t for _, t in pairs])
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        est.save(path)
    return est


def make_mask_library(config: ScenarioConfig, bundle: DatasetBundle) -> MaskLibrary:
    """Zero-shot: synthetic masks from the defect-geometry bank.
    Full-shot: ground-truth masks of the real train positives."""
    if config.scenario == "full_shot" and bundle.positives_train:
        masks = [s.mask for s in bundle.positives_train if s.mask is not None and not s.mask.is_empty()]
        if masks:
            return MaskLibrary(masks=tuple(masks), provenance="ground_truth")
    bank = synthesize_defect_bank(config.pretrain.n_bank, config.pretrain.size, config.pretrain.bank_seed + 1)
    return MaskLibrary(
        masks=tuple(m for _, m, _ in bank),
        provenance="synthetic",
        kinds=tuple(k for _, _, k in bank),
    )


def scenario_prompts(config: ScenarioConfig) -> list[PromptSpec]:
    return [
        dataclasses.replace(p, guidance_scale=config.guidance_scale) for p in default_prompts()
    ]


def build_scenario_backend(config: ScenarioConfig, bundle: DatasetBundle):
    """Instantiate the generation backend for a scenario strategy."""
    if config.strategy == "memseg_baseline":
        return None
    if config.strategy == "diag_inpaint":
        est = get_pretrained_diffusion(config.cache_dir, config.pretrain)
        return DiagInpaintBackend(est)
    null_cfg = config.pretrain
    if config.scenario == "full_shot":
        if not bundle.positives_train:
            raise ConfigurationError("full-shot unconditional strategy needs train positives")
        pairs = [(s.image, "null") for s in bundle.positives_train]
        est = get_pretrained_diffusion(config.cache_dir, null_cfg, pairs=pairs, tag="corpus-positives")
    else:
        bank = synthesize_defect_bank(null_cfg.n_bank, null_cfg.size, null_cfg.bank_seed)
        pairs = [(img, "null") for img, _, _ in bank]
        est = get_pretrained_diffusion(config.cache_dir, null_cfg, pairs=pairs, tag="bank-null")
    return UnconditionalDiffusionBackend(est)


def _generation_key(config: ScenarioConfig, backend, bundle: DatasetBundle, seed: int) -> str:
    payload = {
        "strategy": config.strategy,
        "seed": seed,
        "negatives": fingerprint_samples(bundle.negatives_train),
        "paired": config.paired_sampling,
        "guidance": config.guidance_scale,
    }
    if backend is not None:
        payload["backend"] = backend.signature()
    else:
        payload["perlin"] = dataclasses.asdict(config.perlin)
        payload["opacity"] = config.opacity
    if config.strategy != "memseg_baseline":
        payload["library"] = config.scenario
    return _config_key(payload)


def generate_for_row(
    config: ScenarioConfig,
    bundle: DatasetBundle,
    backend,
    library: MaskLibrary | None,
    prompts: list[PromptSpec] | None,
    n_aug: int,
    seed: int,
    store: GenerationStore | None = None,
) -> list[LabeledSample]:
    """Produce (or fetch) one row's augmented set."""

    def produce(n: int) -> list[LabeledSample]:
        if config.strategy == "memseg_baseline":
            return _quantized(
                generate_baseline_set(
                    bundle.negatives_train, config.perlin, n, seed, opacity=config.opacity
                )
            )
        return _quantized(
            generate_augmented_set(
                backend, bundle.negatives_train, prompts, library, n, seed,
                paired=config.paired_sampling,
            )
        )

    if store is None:
        return produce(n_aug)
    return store.ensure(_generation_key(config, backend, bundle, seed), n_aug, produce)


def evaluate_classifier(clf, bundle: DatasetBundle, eval_test_pos: int | None = None) -> dict:
    """AP plus precision/recall at threshold 0.5 on the test split."""
    k = len(bundle.test_pos) if eval_test_pos is None else eval_test_pos
    samples = list(bundle.test_pos[:k]) + list(bundle.test_neg)
    scores = clf.predict_scores([s.image for s in samples])
    labels = np.array([s.label for s in samples])
    p, r = precision_recall(scores, labels, 0.5)
    return {
        "ap": average_precision(scores, labels),
        "precision": p,
        "recall": r,
        "n_test_pos": int(labels.sum()),
        "n_test_neg": int(len(labels) - labels.sum()),
    }


def run_scenario(config: ScenarioConfig, store: GenerationStore | None = None) -> ReportTable:
    """Full grid over (n_aug, seed); failures are recorded per row."""
    bundle = prepare_bundle(config.corpus)
    fp_before = fingerprint_samples(bundle.test_samples())
    backend = build_scenario_backend(config, bundle)
    library = prompts = None
    if config.strategy != "memseg_baseline":
        library = make_mask_library(config, bundle)
        prompts = scenario_prompts(config)
    which = "neg+aug" if config.scenario == "zero_shot" else "neg+pos+aug"
    table = ReportTable(meta={"scenario": config.scenario, "strategy": config.strategy})
    for n_aug in config.n_augs:
        for seed in config.seeds:
            row = {"strategy": config.strategy, "n_aug": n_aug, "seed": seed}
            try:
                aug = generate_for_row(
                    config, bundle, backend, library, prompts, n_aug, seed, store
                )
                clf_cfg = dataclasses.replace(config.classifier, seed=seed)
                clf = train(bundle.with_augmented(aug), which, clf_cfg, width=config.classifier_width)
                row.update(evaluate_classifier(clf, bundle, config.eval_test_pos))
            except DiagforgeError as e:
                row["error"] = str(e)
            table.rows.append(row)
    fp_after = fingerprint_samples(bundle.test_samples())
    if fp_before != fp_after:
        raise RuntimeError("test split fingerprint changed during the run")
    table.meta["test_fingerprint"] = fp_before
    return table


def held_out_reference(bundle: DatasetBundle, eval_test_pos: int | None) -> list[LabeledSample]:
    """Real-defect FID reference carved from test_pos, past the
    classifier-evaluation slice."""
    if eval_test_pos is None or eval_test_pos >= len(bundle.test_pos):
        return list(bundle.test_pos)
    return list(bundle.test_pos[eval_test_pos:])


def run_fid_comparison(
    base_config: ScenarioConfig,
    strategies=("diag_inpaint", "memseg_baseline"),
    n_images: int = 200,
    taps=("pool64", "pool192"),
    store: GenerationStore | None = None,
) -> ReportTable:
    """FID of each strategy's generated set against held-out real defects."""
    bundle = prepare_bundle(base_config.corpus)
    fp_before = fingerprint_samples(bundle.test_samples())
    reference = held_out_reference(bundle, base_config.eval_test_pos)
    table = ReportTable(meta={"n_images": n_images, "reference_size": len(reference)})
    for strategy in strategies:
        cfg = dataclasses.replace(base_config, strategy=strategy)
        backend = build_scenario_backend(cfg, bundle)
        library = prompts = None
        if strategy != "memseg_baseline":
            library = make_mask_library(cfg, bundle)
            prompts = scenario_prompts(cfg)
        for seed in base_config.seeds:
            aug = generate_for_row(cfg, bundle, backend, library, prompts, n_images, seed, store)
            for tap in taps:
                row = {"strategy": strategy, "tap": str(tap), "seed": seed, "n": n_images}
                try:
                    row["fid"] = fid([s.image for s in aug], [s.image for s in reference], tap)
                except MetricError as e:
                    row["error"] = str(e)
                table.fid_rows.append(row)
    if fingerprint_samples(bundle.test_samples()) != fp_before:
        raise RuntimeError("test split fingerprint changed during the run")
    return table
