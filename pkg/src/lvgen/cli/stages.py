"""Stage implementations behind the command-line interface.

Each stage reads inputs from the working directory, writes outputs under
an output directory (the same directory except during replay
verification), and returns (inputs, outputs, seeds) so the runner can
hash everything into a manifest. Stage randomness comes only from seeds
derived from the master seed, never from global state; the evaluation
metrics are additionally thread-count invariant, so replaying a manifest
reproduces every artifact bit for bit on the same platform.
"""

import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import __version__
from ..diffusion import (Denoiser, DenoiserConfig, ScheduleConfig,
                         generate_meshes, load_denoiser, sample_latents,
                         save_denoiser, train_denoiser)
from ..errors import ConfigError, NumericalError, ValidationError
from ..eval import (CloudSet, MetricReport, clinical_table, clinical_values,
                    generative_metrics, render_figures)
from ..mesh import Mesh, build_shell_template, read_mdt, write_mdt
from ..nn import (ChebConv, Dense, GraphPool, GraphUnpool, Sequential,
                  Swish1, check_model, compare_gradients,
                  finite_difference_gradients, laplacian_for_topology)
from ..synth import (compute_standardization, default_population,
                     generate_dataset, load_population_spec, split_indices,
                     standardize)
from ..vae import MeshVae, VaeConfig, load_vae, pooling_matrix, save_vae, train_vae
from .config import RunConfig
from .manifest import RunManifest, file_sha256, load_manifest, save_manifest
from .seeds import stage_seed

PIPELINE = ("synth", "split", "train-vae", "encode", "train-ddpm",
            "generate", "evaluate", "report")

# canonical outputs per stage, relative to the working directory
STAGE_PRODUCES = {
    "synth": ("dataset.mdt", "dataset.json"),
    "split": ("splits.json",),
    "train-vae": ("vae_ckpt.bin", "vae_ckpt.bin.json", "vae_curves.json"),
    "encode": ("latents_train.npy", "latents_val.npy", "latents.json"),
    "train-ddpm": ("ddpm_ckpt.bin", "ddpm_ckpt.bin.json", "ddpm_curves.json"),
    "sample": ("samples.npy", "samples.json"),
    "generate": ("generated.mdt", "generated.json"),
    "evaluate": ("metrics.json", "clinical_values.json"),
    "report": ("report.txt", "report.csv",
               "clinical_distributions.png", "generative_metrics.png"),
    "gradcheck": ("gradcheck.json",),
}


def _utcnow():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _require(workdir, rel, producer):
    path = Path(workdir) / rel
    if not path.exists():
        raise ValidationError(
            f"missing artifact {rel}: run the '{producer}' stage first")
    return path


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _master(cfg):
    return cfg.getint("run", "master_seed")


def _phase(cfg):
    phase = cfg.get("run", "phase")
    if phase not in ("ed", "es"):
        raise ConfigError(f"run.phase must be 'ed' or 'es', got {phase!r}")
    return phase


# -- stages ---------------------------------------------------------------


def _synth(cfg, wd, od):
    phase = _phase(cfg)
    n = cfg.getint("synth", "n")
    seed = stage_seed(_master(cfg), "synth")
    inputs = {}
    spec_rel = cfg.get("synth", "spec")
    if spec_rel:
        spec_path = wd / spec_rel
        if not spec_path.exists():
            raise ConfigError(f"population spec {spec_path} not found")
        spec = load_population_spec(spec_path)
        inputs["spec"] = spec_path
    else:
        spec = default_population(phase)
    if spec.phase != phase:
        raise ConfigError(
            f"run.phase is {phase!r} but the population spec is for "
            f"{spec.phase!r}")
    topo = build_shell_template(cfg.getint("run", "rings"),
                                cfg.getint("run", "segments"))
    ds = generate_dataset(spec, n, seed, topology=topo)
    write_mdt(od / "dataset.mdt", topo, ds.vertices)
    _dump_json(od / "dataset.json", ds.manifest)
    print(f"synth: {n} {phase} meshes -> dataset.mdt "
          f"({topo.vertex_count} vertices each)")
    return inputs, {"dataset": od / "dataset.mdt",
                    "dataset_meta": od / "dataset.json"}, {"synth": seed}


def _split(cfg, wd, od):
    dpath = _require(wd, "dataset.mdt", "synth")
    _, verts = read_mdt(dpath)
    seed = stage_seed(_master(cfg), "split")
    tr, va, te = split_indices(len(verts), seed)
    _dump_json(od / "splits.json", {
        "seed": seed, "n": len(verts),
        "train": tr.tolist(), "val": va.tolist(), "test": te.tolist(),
    })
    print(f"split: {len(tr)}/{len(va)}/{len(te)} train/val/test")
    return {"dataset": dpath}, {"splits": od / "splits.json"}, {"split": seed}


def _vae_config(cfg):
    return VaeConfig(
        latent_dim=cfg.getint("vae", "latent_dim"),
        conv_channels=tuple(cfg.getints("vae", "conv_channels")),
        cheb_order=cfg.getint("vae", "cheb_order"),
        beta=cfg.getfloat("vae", "beta"),
        epochs=cfg.getint("vae", "epochs"),
        batch_size=cfg.getint("vae", "batch_size"),
        learning_rate=cfg.getfloat("vae", "learning_rate"),
    )


def _train_vae(cfg, wd, od):
    dpath = _require(wd, "dataset.mdt", "synth")
    mpath = _require(wd, "dataset.json", "synth")
    spath = _require(wd, "splits.json", "split")
    topo, verts = read_mdt(dpath)
    meta = _load_json(mpath)
    splits = _load_json(spath)
    train = verts[np.asarray(splits["train"], dtype=int)]
    val = verts[np.asarray(splits["val"], dtype=int)]
    stats = compute_standardization(train)
    vcfg = _vae_config(cfg)
    seed = stage_seed(_master(cfg), "train-vae")

    every = max(1, vcfg.epochs // 20)

    def progress(epoch, result):
        if (epoch + 1) % every == 0 or epoch == 0:
            print(f"  vae epoch {epoch + 1}/{vcfg.epochs}: "
                  f"train {result.train_losses[-1]:.5f} "
                  f"val {result.val_losses[-1]:.5f}", file=sys.stderr)

    res = train_vae(standardize(train, stats), standardize(val, stats),
                    vcfg, seed, topo, progress=progress)
    save_vae(od / "vae_ckpt.bin", res.model, stats, seed, meta["phase"])
    _dump_json(od / "vae_curves.json", {
        "train_losses": res.train_losses, "val_losses": res.val_losses,
        "train_mse": res.train_mse, "train_kl": res.train_kl,
    })
    print(f"train-vae: {vcfg.epochs} epochs on {len(train)} meshes, "
          f"final val loss {res.val_losses[-1]:.5f}")
    return ({"dataset": dpath, "dataset_meta": mpath, "splits": spath},
            {"checkpoint": od / "vae_ckpt.bin",
             "checkpoint_meta": od / "vae_ckpt.bin.json",
             "curves": od / "vae_curves.json"},
            {"train-vae": seed})


def _encode(cfg, wd, od):
    dpath = _require(wd, "dataset.mdt", "synth")
    spath = _require(wd, "splits.json", "split")
    cpath = _require(wd, "vae_ckpt.bin", "train-vae")
    _require(wd, "vae_ckpt.bin.json", "train-vae")
    topo, verts = read_mdt(dpath)
    model, stats, meta = load_vae(cpath, topo)
    splits = _load_json(spath)

    def encode_split(idx):
        xs = standardize(verts[np.asarray(idx, dtype=int)], stats)
        mu = [model.encode(xs[i:i + 32]).mu for i in range(0, len(xs), 32)]
        return np.concatenate(mu, axis=0)

    mu_train = encode_split(splits["train"])
    mu_val = encode_split(splits["val"])
    np.save(od / "latents_train.npy", mu_train)
    np.save(od / "latents_val.npy", mu_val)
    _dump_json(od / "latents.json", {
        "phase": meta["phase"], "latent_dim": model.config.latent_dim,
        "n_train": len(mu_train), "n_val": len(mu_val),
    })
    print(f"encode: {len(mu_train)} train + {len(mu_val)} val latents "
          f"(dim {model.config.latent_dim})")
    return ({"dataset": dpath, "splits": spath, "checkpoint": cpath,
             "checkpoint_meta": wd / "vae_ckpt.bin.json"},
            {"latents_train": od / "latents_train.npy",
             "latents_val": od / "latents_val.npy",
             "latents_meta": od / "latents.json"},
            {})


def _train_ddpm(cfg, wd, od):
    lt = _require(wd, "latents_train.npy", "encode")
    lv = _require(wd, "latents_val.npy", "encode")
    lj = _require(wd, "latents.json", "encode")
    train = np.load(lt)
    val = np.load(lv)
    meta = _load_json(lj)
    dcfg = DenoiserConfig(
        n_layers=cfg.getint("ddpm", "n_layers"),
        width=cfg.getint("ddpm", "width"),
        embedding_dim=cfg.getint("ddpm", "embedding_dim"),
        epochs=cfg.getint("ddpm", "epochs"),
        batch_size=cfg.getint("ddpm", "batch_size"),
        learning_rate=cfg.getfloat("ddpm", "learning_rate"),
        patience=cfg.getint("ddpm", "patience"),
    )
    scfg = ScheduleConfig(
        timesteps=cfg.getint("ddpm", "timesteps"),
        beta_start=cfg.getfloat("ddpm", "beta_start"),
        beta_end=cfg.getfloat("ddpm", "beta_end"),
    )
    seed = stage_seed(_master(cfg), "train-ddpm")

    every = max(1, dcfg.epochs // 20)

    def progress(epoch, train_loss, val_loss):
        if (epoch + 1) % every == 0 or epoch == 0:
            print(f"  ddpm epoch {epoch + 1}/{dcfg.epochs}: "
                  f"train {train_loss:.5f} val {val_loss:.5f}",
                  file=sys.stderr)

    res = train_denoiser(train, dcfg, schedule_config=scfg, seed=seed,
                         val_latents=val, progress=progress)
    if res.aborted:
        raise NumericalError(f"denoiser training aborted: {res.abort_reason}")
    save_denoiser(od / "ddpm_ckpt.bin", res.denoiser, res.schedule,
                  res.stats, seed, meta["phase"])
    _dump_json(od / "ddpm_curves.json", {
        "train_losses": res.train_losses, "val_losses": res.val_losses,
        "best_epoch": res.best_epoch,
    })
    print(f"train-ddpm: {dcfg.epochs} epochs on {len(train)} latents, "
          f"best epoch {res.best_epoch + 1}")
    return ({"latents_train": lt, "latents_val": lv, "latents_meta": lj},
            {"checkpoint": od / "ddpm_ckpt.bin",
             "checkpoint_meta": od / "ddpm_ckpt.bin.json",
             "curves": od / "ddpm_curves.json"},
            {"train-ddpm": seed})


def _sample(cfg, wd, od):
    cpath = _require(wd, "ddpm_ckpt.bin", "train-ddpm")
    _require(wd, "ddpm_ckpt.bin.json", "train-ddpm")
    den, schedule, lstats, meta = load_denoiser(cpath)
    n = cfg.getint("sample", "n")
    seed = stage_seed(_master(cfg), "sample")
    z = sample_latents(den, schedule, lstats, n, seed)
    np.save(od / "samples.npy", z)
    _dump_json(od / "samples.json", {"phase": meta["phase"], "n": n})
    print(f"sample: {n} latent vectors (dim {z.shape[1]})")
    return ({"checkpoint": cpath,
             "checkpoint_meta": wd / "ddpm_ckpt.bin.json"},
            {"samples": od / "samples.npy",
             "samples_meta": od / "samples.json"},
            {"sample": seed})


def _generate(cfg, wd, od):
    vpath = _require(wd, "vae_ckpt.bin", "train-vae")
    vmeta_path = _require(wd, "vae_ckpt.bin.json", "train-vae")
    dpath = _require(wd, "ddpm_ckpt.bin", "train-ddpm")
    _require(wd, "ddpm_ckpt.bin.json", "train-ddpm")
    grid = _load_json(vmeta_path)["grid_dims"]
    topo = build_shell_template(*grid)
    vae, vstats, vmeta = load_vae(vpath, topo)
    den, schedule, lstats, dmeta = load_denoiser(dpath)
    n = cfg.getint("sample", "n")
    # the latent draw belongs to the sample stage wherever it runs, so
    # `generate` decodes exactly the vectors `sample` would have written
    seed = stage_seed(_master(cfg), "sample")
    verts = generate_meshes(vae, vstats, vmeta["phase"], den, schedule,
                            lstats, dmeta["phase"], n, seed)
    if not np.isfinite(verts).all():
        raise NumericalError(
            "generated vertices are non-finite: the denoiser or decoder "
            "diverged")
    write_mdt(od / "generated.mdt", topo, verts)
    _dump_json(od / "generated.json", {"phase": vmeta["phase"], "n": n})
    print(f"generate: {n} meshes -> generated.mdt (phase {vmeta['phase']})")
    return ({"vae_checkpoint": vpath, "vae_checkpoint_meta": vmeta_path,
             "ddpm_checkpoint": dpath,
             "ddpm_checkpoint_meta": wd / "ddpm_ckpt.bin.json"},
            {"generated": od / "generated.mdt",
             "generated_meta": od / "generated.json"},
            {"sample": seed})


def _evaluate(cfg, wd, od):
    gpath = _require(wd, "generated.mdt", "generate")
    gmeta_path = _require(wd, "generated.json", "generate")
    dpath = _require(wd, "dataset.mdt", "synth")
    dmeta_path = _require(wd, "dataset.json", "synth")
    spath = _require(wd, "splits.json", "split")
    gmeta = _load_json(gmeta_path)
    dmeta = _load_json(dmeta_path)
    if gmeta["phase"] != dmeta["phase"]:
        raise ValidationError(
            f"phase mismatch: generated meshes are {gmeta['phase']!r} but "
            f"the reference dataset is {dmeta['phase']!r}")
    gtopo, gverts = read_mdt(gpath)
    ttopo, tverts = read_mdt(dpath)
    test = tverts[np.asarray(_load_json(spath)["test"], dtype=int)]
    seed = stage_seed(_master(cfg), "evaluate")
    threads = cfg.getint("run", "threads")

    m = generative_metrics(CloudSet(gverts, source="generated"),
                           CloudSet(test, source="reference"),
                           seed=seed, threads=threads)
    try:
        gvals = clinical_values([Mesh(gtopo, v) for v in gverts])
    except ValidationError as exc:
        raise ValidationError(
            f"a generated mesh is anatomically invalid ({exc}); the "
            "autoencoder or denoiser is undertrained")
    rvals = clinical_values([Mesh(ttopo, v) for v in test])
    report = MetricReport(
        cov=m["cov"], mmd_strict=m["mmd_strict"], mmd_mm=m["mmd_mm"],
        one_nna_pct=m["one_nna_pct"],
        clinical=clinical_table(gvals, rvals),
        counts={"n_generated": int(m["n_generated"]),
                "n_reference": int(m["n_reference"]),
                "n_generated_full": len(gverts),
                "n_reference_full": len(test),
                "points_per_cloud": int(m["points_per_cloud"])},
        seeds={"subsample": seed},
    )
    with open(od / "metrics.json", "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    _dump_json(od / "clinical_values.json", {
        "generated": {k: v.tolist() for k, v in gvals.items()},
        "reference": {k: v.tolist() for k, v in rvals.items()},
    })
    vol = report.clinical["lv_cavity_volume_ml"]
    print(f"evaluate: cov {report.cov:.3f}, 1-nna {report.one_nna_pct:.2f}%, "
          f"cavity volume rel err {100 * vol['relative_error']:.2f}%")
    return ({"generated": gpath, "generated_meta": gmeta_path,
             "dataset": dpath, "dataset_meta": dmeta_path, "splits": spath},
            {"metrics": od / "metrics.json",
             "clinical_values": od / "clinical_values.json"},
            {"evaluate": seed})


def _report(cfg, wd, od):
    mpath = _require(wd, "metrics.json", "evaluate")
    cpath = _require(wd, "clinical_values.json", "evaluate")
    report = MetricReport.from_json(Path(mpath).read_text())
    vals = _load_json(cpath)
    gvals = {k: np.asarray(v) for k, v in vals["generated"].items()}
    rvals = {k: np.asarray(v) for k, v in vals["reference"].items()}
    text = report.to_text()
    with open(od / "report.txt", "w") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")
    with open(od / "report.csv", "w") as fh:
        fh.write(report.to_csv())
    figures = render_figures(report, gvals, rvals, od)
    print(text)
    print("report: report.txt, report.csv, "
          + ", ".join(Path(p).name for p in figures))
    outputs = {"text": od / "report.txt", "csv": od / "report.csv"}
    for p in figures:
        outputs[Path(p).stem] = Path(p)
    return ({"metrics": mpath, "clinical_values": cpath}, outputs, {})


# -- gradient integrity ----------------------------------------------------


def gradient_suite(h=1e-5, seed=0):
    """Exhaustive finite-difference checks: every layer class and both
    complete networks.

    The layer checks probe every parameter and input component through a
    random linear readout. The network checks sweep every parameter of a
    complete encoder-decoder (production architecture at reduced width on
    a small template, so the sweep stays under the runtime budget) and of
    a production-size denoiser, against their actual training losses.
    Returns {check name: GradCheckReport}.
    """
    rng = np.random.default_rng(seed)
    topo = build_shell_template(4, 6)
    L, _ = laplacian_for_topology(topo)
    V = topo.vertex_count
    P = pooling_matrix(4, 6)
    checks = {}

    layer_cases = [
        ("dense", Dense(5, 4, rng), rng.standard_normal((3, 5))),
        ("swish", Swish1(), rng.standard_normal((4, 6))),
        ("chebconv", ChebConv(2, 3, 3, L, rng),
         rng.standard_normal((2, V, 2))),
        ("graph_pool", GraphPool(P), rng.standard_normal((2, V, 3))),
        ("graph_unpool", GraphUnpool(P),
         rng.standard_normal((2, P.shape[0], 3))),
        ("sequential", Sequential([Dense(4, 6, rng), Swish1(),
                                   Dense(6, 2, rng)]),
         rng.standard_normal((3, 4))),
    ]
    for name, layer, x in layer_cases:
        checks[name] = check_model(layer, x, h=h, seed=seed)

    vcfg = VaeConfig(latent_dim=4, conv_channels=(4, 8), cheb_order=3)
    vae = MeshVae(vcfg, topo, np.random.default_rng(seed))
    x = 0.5 * rng.standard_normal((2, V, 3))
    eps = rng.standard_normal((2, vcfg.latent_dim))
    vae.zero_grads()
    vae.loss_and_grads(x, eps)
    analytic = {k: v.copy() for k, v in vae.grads.items()}
    numeric = finite_difference_gradients(
        lambda: vae.loss_only(x, eps)[0], dict(vae.params), h=h)
    checks["mesh_vae"] = compare_gradients(analytic, numeric)

    den = Denoiser(DenoiserConfig(), np.random.default_rng(seed))
    z_t = rng.standard_normal((4, den.config.width))
    t = np.array([0, 3, 7, 11])
    eps_d = rng.standard_normal((4, den.config.width))
    den.zero_grads()
    den.loss_and_grads(z_t, t, eps_d)
    analytic = {k: v.copy() for k, v in den.grads.items()}
    numeric = finite_difference_gradients(
        lambda: den.loss_only(z_t, t, eps_d), dict(den.params), h=h)
    checks["denoiser"] = compare_gradients(analytic, numeric)
    return checks


def _gradcheck(cfg, wd, od):
    h = cfg.getfloat("gradcheck", "h")
    tol = cfg.getfloat("gradcheck", "tol")
    seed = stage_seed(_master(cfg), "gradcheck")
    checks = gradient_suite(h=h, seed=seed)
    worst_name = max(checks, key=lambda k: checks[k].max_rel_error)
    worst = checks[worst_name].max_rel_error
    for name in sorted(checks):
        rep = checks[name]
        print(f"  {name}: max rel err {rep.max_rel_error:.3e} "
              f"({rep.n_components} components, worst {rep.worst_tensor})")
    _dump_json(od / "gradcheck.json", {
        "h": h, "tol": tol, "seed": seed,
        "max_rel_error": worst, "worst_check": worst_name,
        "passed": bool(worst < tol),
        "checks": {name: {"max_rel_error": rep.max_rel_error,
                          "worst_tensor": rep.worst_tensor,
                          "n_components": rep.n_components}
                   for name, rep in checks.items()},
    })
    if worst >= tol:
        raise NumericalError(
            f"gradient check failed: max rel err {worst:.3e} >= {tol:g} "
            f"in {worst_name}")
    print(f"gradcheck: all {len(checks)} checks under {tol:g} "
          f"(worst {worst:.3e})")
    return {}, {"gradcheck": od / "gradcheck.json"}, {"gradcheck": seed}


STAGES = {
    "synth": _synth,
    "split": _split,
    "train-vae": _train_vae,
    "encode": _encode,
    "train-ddpm": _train_ddpm,
    "sample": _sample,
    "generate": _generate,
    "evaluate": _evaluate,
    "report": _report,
    "gradcheck": _gradcheck,
}


# -- runner ----------------------------------------------------------------


def _hash_entries(paths, root):
    out = {}
    for name, path in paths.items():
        path = Path(path)
        try:
            rel = str(path.relative_to(root))
        except ValueError:
            rel = str(path)
        out[name] = {"path": rel, "sha256": file_sha256(path)}
    return out


def run_stage(command, cfg: RunConfig, workdir, outdir=None) -> RunManifest:
    if command not in STAGES:
        raise ConfigError(f"unknown stage {command!r}")
    workdir = Path(workdir)
    outdir = workdir if outdir is None else Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    started = _utcnow()
    inputs, outputs, seeds = STAGES[command](cfg, workdir, outdir)
    manifest = RunManifest(
        command=command,
        tool_version=__version__,
        config=cfg.to_dict(),
        config_hash=cfg.hash(),
        master_seed=_master(cfg),
        stage_seeds=seeds,
        inputs=_hash_entries(inputs, workdir),
        outputs=_hash_entries(outputs, outdir),
        started=started,
        finished=_utcnow(),
    )
    mdir = outdir / "manifests"
    mdir.mkdir(exist_ok=True)
    save_manifest(mdir / f"{command}.json", manifest)
    print(f"manifest: {mdir / (command + '.json')}")
    return manifest


def run_pipeline(cfg: RunConfig, workdir, skip_existing=False):
    """Run synth through report in order, one manifest per stage."""
    workdir = Path(workdir)
    for name in PIPELINE:
        if skip_existing and all((workdir / rel).exists()
                                 for rel in STAGE_PRODUCES[name]):
            print(f"{name}: outputs present, skipped")
            continue
        run_stage(name, cfg, workdir)


def replay_manifest(manifest_path, workdir=None) -> RunManifest:
    """Re-run a stage from its manifest and verify bit-identical outputs.

    Inputs are verified against their recorded hashes first; outputs are
    written to replay/<stage>/ under the working directory so the
    original artifacts are never touched, then compared hash by hash.
    """
    manifest_path = Path(manifest_path)
    man = load_manifest(manifest_path)
    wd = Path(workdir) if workdir is not None else manifest_path.parent.parent
    changed = []
    for name, rec in man.inputs.items():
        path = Path(rec["path"])
        if not path.is_absolute():
            path = wd / path
        if not path.exists():
            raise ValidationError(
                f"replay input {rec['path']} is missing from {wd}")
        if file_sha256(path) != rec["sha256"]:
            changed.append(rec["path"])
    if changed:
        raise ValidationError(
            "inputs changed since the original run: "
            + ", ".join(changed) + "; replay needs the original artifacts")
    cfg = RunConfig.from_dict(man.config)
    fresh = run_stage(man.command, cfg, wd,
                      outdir=wd / "replay" / man.command)
    diverged = [name for name, rec in man.outputs.items()
                if fresh.outputs.get(name, {}).get("sha256") != rec["sha256"]]
    if diverged:
        raise ValidationError(
            f"replay of '{man.command}' diverged on: " + ", ".join(diverged))
    print(f"replay of '{man.command}': {len(man.outputs)} artifacts "
          "bit-identical")
    return fresh
