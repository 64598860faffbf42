"""Command-line front end.

Every subcommand prints a machine-parseable result (a path or a JSON
line) on success. Domain and I/O failures print `error: <message>` to
stderr and exit 1; usage mistakes exit 2 with the usual help text.
Default output locations live under DIAGFORGE_HOME (~/.diagforge).
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from pathlib import Path

import click

from .backends import (
    BackendDescriptor,
    DiagInpaintBackend,
    MaskLibrary,
    RemoteInpaintBackend,
    UnconditionalDiffusionBackend,
    default_prompts,
    generate_augmented_set,
)
from .classifier import DefectClassifier, TrainConfig, train
from .core import quantize8
from .diffusion import DenoisingDiffusion
from .exceptions import ConfigurationError, DiagforgeError
from .experiment import (
    PretrainConfig,
    ReportTable,
    ScenarioConfig,
    GenerationStore,
    SCENARIO_STRATEGIES,
    evaluate_classifier,
    load_generated_set,
    run_fid_comparison,
    run_scenario,
    save_generated_set,
)
from .manifest import load_manifest, save_bundle
from .memseg import PerlinParams, generate_baseline_set
from .synthetic import CorpusSpec, build_corpus, synthesize_defect_bank


def _home() -> Path:
    return Path(os.environ.get("DIAGFORGE_HOME", "~/.diagforge")).expanduser()


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(p) for p in text.lower().split("x"))
        return h, w
    except ValueError:
        raise ConfigurationError(f"size must look like 64x64, got {text!r}")


class _Cli(click.Group):
    """Turns domain errors into one-line exit-1 failures."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.ClickException:
            raise
        except (DiagforgeError, OSError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(1)


@click.group(cls=_Cli)
@click.version_option(package_name="diagforge", prog_name="diagforge")
def main():
    """Diffusion-inpainting data augmentation for defect detection."""


@main.group()
def corpus():
    """Synthetic corpus management."""


@corpus.command("build")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Output directory.")
@click.option("--train-neg", default=400, show_default=True)
@click.option("--train-pos", default=48, show_default=True)
@click.option("--test-pos", default=40, show_default=True)
@click.option("--test-neg", default=160, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--size", default="64x64", show_default=True)
def corpus_build(out, train_neg, train_pos, test_pos, test_neg, seed, size):
    """Build a synthetic textured-surface corpus and write its manifest."""
    spec = CorpusSpec(
        n_neg_train=train_neg,
        n_pos_train=train_pos,
        n_test_pos=test_pos,
        n_test_neg=test_neg,
        seed=seed,
        size=_parse_size(size),
    )
    bundle = build_corpus(spec)
    out = out or _home() / "corpora" / f"synthetic-{seed}"
    path = save_bundle(bundle, out)
    click.echo(str(path))


@main.command("train-diffusion")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Checkpoint path.")
@click.option("--manifest", type=click.Path(path_type=Path), default=None,
              help="Train on this corpus's positives instead of the synthetic bank.")
@click.option("--tokens", type=click.Choice(["kinds", "null"]), default="kinds", show_default=True,
              help="Condition tokens: defect kinds, or null only (unconditional).")
@click.option("--bank-size", default=64, show_default=True)
@click.option("--bank-seed", default=777, show_default=True)
@click.option("--bank-gain", default=2.5, show_default=True,
              help="Defect exaggeration for the training bank; 1.0 is corpus difficulty.")
@click.option("--bank-clean", default=32, show_default=True,
              help="Defect-free panels mixed into the bank so the null token means no defect.")
@click.option("--size", default="64x64", show_default=True)
@click.option("--t-steps", "t_steps", default=200, show_default=True)
@click.option("--hidden", default=16, show_default=True)
@click.option("--emb-dim", default=32, show_default=True)
@click.option("--epochs", default=250, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--lr", default=2e-3, show_default=True)
@click.option("--p-drop", default=0.1, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_diffusion(out, manifest, tokens, bank_size, bank_seed, bank_gain, bank_clean, size,
                    t_steps, hidden, emb_dim, epochs, batch_size, lr, p_drop, seed):
    """Train the denoising model and save a checkpoint."""
    est = DenoisingDiffusion(
        T=t_steps, hidden=hidden, emb_dim=emb_dim, epochs=epochs, batch_size=batch_size,
        learning_rate=lr, p_drop=p_drop, seed=seed,
    )
    if manifest is not None:
        bundle = load_manifest(manifest)
        if not bundle.positives_train:
            raise ConfigurationError("manifest has no train positives to fit on")
        images = [s.image for s in bundle.positives_train]
        labels = ["null"] * len(images)
    else:
        bank = synthesize_defect_bank(
            bank_size, _parse_size(size), bank_seed, gain=bank_gain, n_clean=bank_clean
        )
        images = [img for img, _, _ in bank]
        labels = ["null"] * len(images) if tokens == "null" else [kind for _, _, kind in bank]
    est.fit(images, labels)
    out = out or _home() / "checkpoints" / "diffusion.npz"
    out.parent.mkdir(parents=True, exist_ok=True)
    est.save(out)
    click.echo(str(out))


def _build_backend(strategy: str, checkpoint, endpoint):
    desc = BackendDescriptor(
        strategy=strategy,
        endpoint=endpoint,
        checkpoint=str(checkpoint) if checkpoint else None,
    )
    if strategy == "remote_inpaint":
        return RemoteInpaintBackend(endpoint=desc.endpoint)
    est = DenoisingDiffusion.load(checkpoint)
    if strategy == "diag_inpaint":
        return DiagInpaintBackend(est)
    return UnconditionalDiffusionBackend(est)


def _mask_library(source: str, bundle, bank_seed: int, size) -> MaskLibrary:
    if source == "ground-truth":
        masks = [s.mask for s in bundle.positives_train if s.mask is not None and not s.mask.is_empty()]
        if not masks:
            raise ConfigurationError("manifest has no ground-truth masks for the library")
        return MaskLibrary(masks=tuple(masks), provenance="ground_truth")
    bank = synthesize_defect_bank(64, size, bank_seed)
    return MaskLibrary(
        masks=tuple(m for _, m, _ in bank),
        provenance="synthetic",
        kinds=tuple(k for _, _, k in bank),
    )


@main.command("generate")
@click.option("--manifest", type=click.Path(path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output set directory.")
@click.option("--strategy", type=click.Choice(["diag_inpaint", "unconditional_diffusion", "remote_inpaint"]),
              default="diag_inpaint", show_default=True)
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None)
@click.option("--endpoint", default=None, help="Remote backend URL (or DIAGFORGE_REMOTE_ENDPOINT).")
@click.option("--n", "n_aug", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--guidance", default=80.0, show_default=True)
@click.option("--masks", type=click.Choice(["synthetic", "ground-truth"]), default="synthetic",
              show_default=True)
@click.option("--mask-seed", default=778, show_default=True)
@click.option("--paired/--unpaired", default=False, show_default=True)
def generate_cmd(manifest, out, strategy, checkpoint, endpoint, n_aug, seed, guidance,
                 masks, mask_seed, paired):
    """Generate an augmented positive set from a corpus's negatives."""
    bundle = load_manifest(manifest)
    if not bundle.negatives_train:
        raise ConfigurationError("manifest has no train negatives")
    backend = _build_backend(strategy, checkpoint, endpoint)
    size = bundle.negatives_train[0].image.data.shape[:2]
    library = _mask_library(masks, bundle, mask_seed, size)
    prompts = [dataclasses.replace(p, guidance_scale=guidance) for p in default_prompts()]
    samples = generate_augmented_set(backend, bundle.negatives_train, prompts, library,
                                     n_aug, seed, paired=paired)
    samples = [dataclasses.replace(s, image=quantize8(s.image)) for s in samples]
    save_generated_set(samples, out)
    click.echo(str(out))


@main.command("baseline")
@click.option("--manifest", type=click.Path(path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--n", "n_aug", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--opacity", default=0.75, show_default=True)
@click.option("--lattice-period", default=8, show_default=True, help="Base lattice cell size in pixels.")
@click.option("--octaves", default=2, show_default=True)
def baseline_cmd(manifest, out, n_aug, seed, opacity, lattice_period, octaves):
    """Generate fractal-noise pseudo-defects (training-free baseline)."""
    bundle = load_manifest(manifest)
    if not bundle.negatives_train:
        raise ConfigurationError("manifest has no train negatives")
    params = PerlinParams(lattice_period=lattice_period, octaves=octaves)
    samples = generate_baseline_set(bundle.negatives_train, params, n_aug, seed, opacity=opacity)
    samples = [dataclasses.replace(s, image=quantize8(s.image)) for s in samples]
    save_generated_set(samples, out)
    click.echo(str(out))


@main.command("train-classifier")
@click.option("--manifest", type=click.Path(path_type=Path), required=True)
@click.option("--aug", "aug_dirs", type=click.Path(path_type=Path), multiple=True,
              help="Generated set directory; repeatable.")
@click.option("--which", type=click.Choice(["neg+aug", "neg+pos+aug"]), default="neg+aug",
              show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.option("--epochs", default=50, show_default=True)
@click.option("--lr", default=1e-4, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--width", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_classifier(manifest, aug_dirs, which, out, epochs, lr, batch_size, width, seed):
    """Train the defect classifier on a corpus plus generated sets."""
    bundle = load_manifest(manifest)
    aug = [s for d in aug_dirs for s in load_generated_set(d)]
    cfg = TrainConfig(epochs=epochs, learning_rate=lr, batch_size=batch_size, seed=seed)
    clf = train(bundle.with_augmented(aug), which, cfg, width=width)
    out = out or _home() / "checkpoints" / "classifier.npz"
    out.parent.mkdir(parents=True, exist_ok=True)
    clf.save(out)
    click.echo(str(out))


@main.command("eval")
@click.option("--classifier", "clf_path", type=click.Path(path_type=Path), required=True)
@click.option("--manifest", type=click.Path(path_type=Path), required=True)
@click.option("--eval-test-pos", default=None, type=int,
              help="Evaluate on only the first K test positives.")
@click.option("--out", type=click.Path(path_type=Path), default=None)
def eval_cmd(clf_path, manifest, eval_test_pos, out):
    """AP, precision, and recall of a classifier on a corpus test split."""
    clf = DefectClassifier.load(clf_path)
    bundle = load_manifest(manifest)
    result = evaluate_classifier(clf, bundle, eval_test_pos)
    line = json.dumps(result, sort_keys=True)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(line)
    click.echo(line)


def _scenario_config(scenario, strategy, n_augs, seeds, manifest, eval_test_pos, clf_epochs,
                     pretrain_epochs, cache_dir, guidance, paired) -> ScenarioConfig:
    return ScenarioConfig(
        scenario=scenario,
        strategy=strategy,
        n_augs=tuple(n_augs),
        seeds=tuple(range(seeds)),
        corpus=str(manifest) if manifest else CorpusSpec(),
        eval_test_pos=eval_test_pos,
        classifier=TrainConfig(epochs=clf_epochs),
        pretrain=PretrainConfig(epochs=pretrain_epochs),
        guidance_scale=guidance,
        paired_sampling=paired,
        cache_dir=str(cache_dir) if cache_dir else None,
    )


@main.command("experiment")
@click.option("--scenario", type=click.Choice(["zero_shot", "full_shot"]), default="zero_shot",
              show_default=True)
@click.option("--strategy", type=click.Choice([*SCENARIO_STRATEGIES, "all"]), default="all",
              show_default=True)
@click.option("--naug", "n_augs", multiple=True, type=int, default=(100,), show_default=True)
@click.option("--seeds", default=3, show_default=True, help="Number of seeds (0..N-1).")
@click.option("--manifest", type=click.Path(path_type=Path), default=None,
              help="Corpus manifest; defaults to the built-in synthetic corpus.")
@click.option("--eval-test-pos", default=None, type=int)
@click.option("--clf-epochs", default=50, show_default=True)
@click.option("--pretrain-epochs", default=250, show_default=True)
@click.option("--guidance", default=80.0, show_default=True)
@click.option("--paired/--unpaired", default=False, show_default=True)
@click.option("--cache-dir", type=click.Path(path_type=Path), default=None)
@click.option("--store", type=click.Path(path_type=Path), default=None)
@click.option("--out", type=click.Path(path_type=Path), default=None)
def experiment_cmd(scenario, strategy, n_augs, seeds, manifest, eval_test_pos, clf_epochs,
                   pretrain_epochs, guidance, paired, cache_dir, store, out):
    """Run the scenario grid and persist a ReportTable."""
    cache_dir = cache_dir or _home() / "cache"
    gen_store = GenerationStore(store) if store else GenerationStore(_home() / "store")
    strategies = list(SCENARIO_STRATEGIES) if strategy == "all" else [strategy]
    table = ReportTable(meta={"scenario": scenario, "strategies": strategies})
    for strat in strategies:
        cfg = _scenario_config(scenario, strat, n_augs, seeds, manifest, eval_test_pos,
                               clf_epochs, pretrain_epochs, cache_dir, guidance, paired)
        part = run_scenario(cfg, store=gen_store)
        table.rows.extend(part.rows)
        table.meta[f"test_fingerprint_{strat}"] = part.meta.get("test_fingerprint")
    out = out or _home() / "reports" / f"{scenario}-report.json"
    table.save(out)
    click.echo(str(out))


@main.command("fid")
@click.option("--strategy", type=click.Choice(["diag_inpaint", "unconditional_diffusion",
                                               "memseg_baseline", "all"]),
              default="all", show_default=True)
@click.option("--tap", type=click.Choice(["pool64", "pool192", "all"]), default="all",
              show_default=True)
@click.option("--n", "n_images", default=200, show_default=True)
@click.option("--seeds", default=3, show_default=True)
@click.option("--manifest", type=click.Path(path_type=Path), default=None)
@click.option("--eval-test-pos", default=None, type=int)
@click.option("--pretrain-epochs", default=250, show_default=True)
@click.option("--guidance", default=80.0, show_default=True)
@click.option("--cache-dir", type=click.Path(path_type=Path), default=None)
@click.option("--store", type=click.Path(path_type=Path), default=None)
@click.option("--out", type=click.Path(path_type=Path), default=None)
def fid_cmd(strategy, tap, n_images, seeds, manifest, eval_test_pos, pretrain_epochs,
            guidance, cache_dir, store, out):
    """Generated-set FID against held-out real defects, per strategy and tap."""
    cache_dir = cache_dir or _home() / "cache"
    gen_store = GenerationStore(store) if store else GenerationStore(_home() / "store")
    strategies = (
        ("diag_inpaint", "unconditional_diffusion", "memseg_baseline")
        if strategy == "all"
        else (strategy,)
    )
    taps = ("pool64", "pool192") if tap == "all" else (tap,)
    base = _scenario_config("zero_shot", strategies[0], (n_images,), seeds, manifest,
                            eval_test_pos, 1, pretrain_epochs, cache_dir, guidance, False)
    table = run_fid_comparison(base, strategies=strategies, n_images=n_images, taps=taps,
                               store=gen_store)
    out = out or _home() / "reports" / "fid-report.json"
    table.save(out)
    for row in table.fid_rows:
        click.echo(json.dumps(row, sort_keys=True))


@main.command("report")
@click.option("--table", "table_path", type=click.Path(path_type=Path), required=True)
def report_cmd(table_path):
    """Print the aggregate view of a persisted ReportTable."""
    table = ReportTable.load(table_path)
    for agg in table.aggregates():
        click.echo(json.dumps(agg, sort_keys=True))
    for row in table.fid_rows:
        click.echo(json.dumps(row, sort_keys=True))
    if not table.aggregates() and not table.fid_rows:
        click.echo(json.dumps({"rows": len(table.rows), "note": "no aggregatable rows"}))


@main.command("serve")
@click.option("--state-dir", type=click.Path(path_type=Path), default=None)
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None)
@click.option("--reference", type=click.Path(path_type=Path), default=None,
              help="Manifest whose test positives anchor the FID preview.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
def serve_cmd(state_dir, checkpoint, reference, host, port):
    """Run the interactive session service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    cfg = ServiceConfig(
        state_dir=str(state_dir or _home() / "service"),
        checkpoint=str(checkpoint) if checkpoint else None,
        reference_manifest=str(reference) if reference else None,
    )
    app = create_app(cfg)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
