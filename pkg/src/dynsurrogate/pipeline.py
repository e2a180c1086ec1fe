"""End-to-end orchestration: dataset generation, transform fitting, training,
prediction, and evaluation over a single run directory.

Run directory layout::

    run/
      config.yaml
      dataset/samples/sample_00000/...   raw simulations + per-sample meta
      dataset/splits.json                train/validation/test index lists
      transforms/                        POD basis, normalization stats, wavelet spec
      model/                             network parameters + loss history
      report/                            evaluation metrics + exemplar series
      timing.txt                         wall-clock log (informational only)
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import arrayio, cases, dynamics as dyn, network as net_mod, reduction as red
from .config import CaseConfig
from .errors import DynSurrogateError, InvalidArgumentError
from .excitation import ExcitationRecord
from .rng import stream


def worker_count() -> int:
    """Parallelism from RUN_THREADS (0 or unset means all cores)."""
    raw = os.environ.get("RUN_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise InvalidArgumentError(f"RUN_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise InvalidArgumentError("RUN_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


# --- dataset generation --------------------------------------------------------------


def _sample_dir(run_dir, index: int) -> Path:
    return Path(run_dir) / "dataset" / "samples" / f"sample_{index:05d}"


def _generate_one(cfg_dict: dict, index: int, run_dir: str) -> dict:
    """Simulate one (excitation, system) pair and persist it. Pickle-safe."""
    cfg = CaseConfig.from_dict(cfg_dict)
    out = _sample_dir(run_dir, index)
    record = cases.make_excitation(cfg, index)
    real = cases.sample_realization(cfg, index)
    meta = {
        "index": index,
        "excitation_seed": record.seed,
        "system_seed": cases.system_seed(cfg, index),
        "theta_names": list(real.names),
        "theta": [float(v) for v in real.values],
        "dt": record.dt,
        "unit": record.unit,
        "kind": record.kind,
    }
    try:
        resp = cases.simulate(cfg, real, record)
    except DynSurrogateError as err:
        meta.update(status="failed", error=str(err))
        arrayio.save_metadata(out / "meta.json", meta)
        return meta
    arrayio.save_array(out / "excitation", record.samples)
    arrayio.save_array(out / "displacement", resp.displacement)
    arrayio.save_array(out / "velocity", resp.velocity)
    arrayio.save_array(out / "hysteretic_state", resp.hysteretic_state)
    arrayio.save_array(out / "restoring_force", resp.restoring_force)
    meta.update(status="ok", accepted_steps=resp.accepted_steps, rejected_steps=resp.rejected_steps)
    arrayio.save_metadata(out / "meta.json", meta)
    return meta


def generate_dataset(cfg: CaseConfig, run_dir) -> dict:
    """Simulate the full sample set (resumable) and freeze the data split."""
    run_dir = Path(run_dir)
    (run_dir / "config.yaml").parent.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(cfg.to_yaml(), encoding="utf-8")

    pending = []
    for i in range(cfg.n_samples):
        meta_path = _sample_dir(run_dir, i) / "meta.json"
        if meta_path.exists() and arrayio.load_metadata(meta_path).get("status") == "ok":
            continue
        pending.append(i)

    n_workers = worker_count()
    cfg_dict = cfg.to_dict()
    if pending:
        if n_workers > 1 and len(pending) > 1:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                futures = [
                    pool.submit(_generate_one, cfg_dict, i, str(run_dir)) for i in pending
                ]
                for fut in futures:
                    fut.result()
        else:
            for i in pending:
                _generate_one(cfg_dict, i, str(run_dir))

    ok, failed = [], []
    for i in range(cfg.n_samples):
        meta = arrayio.load_metadata(_sample_dir(run_dir, i) / "meta.json")
        (ok if meta["status"] == "ok" else failed).append(i)
    needed = cfg.n_train + cfg.n_val + cfg.n_test
    if len(ok) < needed:
        raise InvalidArgumentError(
            f"only {len(ok)} successful samples; split needs {needed}"
        )
    perm = stream(cfg.master_seed, 12).permutation(len(ok))
    shuffled = [ok[j] for j in perm]
    splits = {
        "train": sorted(shuffled[: cfg.n_train]),
        "val": sorted(shuffled[cfg.n_train : cfg.n_train + cfg.n_val]),
        "test": sorted(shuffled[cfg.n_train + cfg.n_val : needed]),
        "failed": failed,
    }
    arrayio.save_metadata(run_dir / "dataset" / "splits.json", splits)
    arrayio.save_metadata(
        run_dir / "dataset" / "manifest.json",
        {"case": cfg.case, "n_samples": cfg.n_samples, "n_ok": len(ok), "n_failed": len(failed)},
    )
    return splits


def load_sample(cfg: CaseConfig, run_dir, index: int):
    """(excitation record, realization, meta, displacement) for a stored sample."""
    out = _sample_dir(run_dir, index)
    meta = arrayio.load_metadata(out / "meta.json")
    record = ExcitationRecord(
        samples=arrayio.load_array(out / "excitation"),
        dt=meta["dt"],
        seed=meta["excitation_seed"],
        kind=meta["kind"],
        unit=meta["unit"],
    )
    real = dyn.SystemRealization(
        names=tuple(meta["theta_names"]),
        values=np.asarray(meta["theta"], dtype=float),
        distributions=tuple(tuple(s[1:]) for s in cfg.theta_spec()),
    )
    displacement = arrayio.load_array(out / "displacement")
    return record, real, meta, displacement


def load_splits(run_dir) -> dict:
    return arrayio.load_metadata(Path(run_dir) / "dataset" / "splits.json")


# --- transforms ----------------------------------------------------------------------


@dataclass(frozen=True)
class Transforms:
    """Everything required to map raw fields to network coefficients and back."""

    basis: red.PodBasis
    input_stats: red.NormStats
    output_stats: red.NormStats
    theta_stats: red.NormStats
    wavelet: red.WaveletSpec

    @property
    def n_r(self) -> int:
        return self.basis.n_r


def fit_transforms(cfg: CaseConfig, run_dir) -> Transforms:
    """Calibrate POD basis and normalization on the training split only."""
    run_dir = Path(run_dir)
    splits = load_splits(run_dir)
    train_idx = splits["train"]

    disp_list, force_list, thetas = [], [], []
    for i in train_idx:
        record, real, _, disp = load_sample(cfg, run_dir, i)
        disp_list.append(disp)
        force_list.append(cases.excitation_channels(cfg, real, record))
        thetas.append(real.values)

    n_dof = disp_list[0].shape[0]
    if cfg.red_bypass or n_dof == 1:
        basis = red.identity_basis(n_dof)
    else:
        snaps = red.collect_snapshots(
            disp_list,
            cfg.red_snapshots_per_record,
            scheme=cfg.red_snapshot_scheme,
            seed=int(np.random.SeedSequence(entropy=cfg.master_seed, spawn_key=(3,)).generate_state(1)[0]),
        )
        basis = red.compute_pod_basis(snaps, cfg.red_pod_threshold)

    p_train = np.concatenate([red.project(f, basis) for f in force_list], axis=1)
    q_train = np.concatenate([red.project(d, basis) for d in disp_list], axis=1)
    tf = Transforms(
        basis=basis,
        input_stats=red.minmax_fit(p_train),
        output_stats=red.minmax_fit(q_train),
        theta_stats=red.minmax_fit(np.stack(thetas, axis=1)),
        wavelet=red.WaveletSpec(
            original_length=disp_list[0].shape[1],
            levels=cfg.red_wavelet_levels,
            order=cfg.red_wavelet_order,
        ),
    )
    save_transforms(tf, run_dir / "transforms")
    return tf


def save_transforms(tf: Transforms, out_dir) -> None:
    out_dir = Path(out_dir)
    arrayio.save_array(out_dir / "pod_modes", tf.basis.modes)
    arrayio.save_array(out_dir / "pod_singular_values", tf.basis.singular_values)
    for name, stats in (
        ("input", tf.input_stats),
        ("output", tf.output_stats),
        ("theta", tf.theta_stats),
    ):
        arrayio.save_array(out_dir / f"{name}_min", stats.minimum)
        arrayio.save_array(out_dir / f"{name}_max", stats.maximum)
    arrayio.save_metadata(
        out_dir / "transforms.json",
        {
            "pod_energy_threshold": tf.basis.energy_threshold,
            "pod_n_snapshots": tf.basis.n_snapshots,
            "wavelet": {
                "original_length": tf.wavelet.original_length,
                "levels": tf.wavelet.levels,
                "order": tf.wavelet.order,
            },
        },
    )


def load_transforms(in_dir) -> Transforms:
    in_dir = Path(in_dir)
    meta = arrayio.load_metadata(in_dir / "transforms.json")
    basis = red.PodBasis(
        modes=arrayio.load_array(in_dir / "pod_modes"),
        singular_values=arrayio.load_array(in_dir / "pod_singular_values"),
        energy_threshold=meta["pod_energy_threshold"],
        n_snapshots=meta["pod_n_snapshots"],
    )

    def stats(name):
        return red.NormStats(
            minimum=arrayio.load_array(in_dir / f"{name}_min"),
            maximum=arrayio.load_array(in_dir / f"{name}_max"),
        )

    w = meta["wavelet"]
    return Transforms(
        basis=basis,
        input_stats=stats("input"),
        output_stats=stats("output"),
        theta_stats=stats("theta"),
        wavelet=red.WaveletSpec(w["original_length"], w["levels"], w["order"]),
    )


def encode_input(tf: Transforms, force_channels: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Raw forcing + parameters -> augmented coefficient channels (n_r+n_theta, n_tau)."""
    p = red.minmax_apply(red.project(force_channels, tf.basis), tf.input_stats)
    c_p, _ = red.dwt_approx(p, tf.wavelet)
    theta_n = red.minmax_apply(np.asarray(theta, float).reshape(-1, 1), tf.theta_stats)
    return red.augment_inputs(c_p, theta_n[:, 0])


def encode_output(tf: Transforms, displacement: np.ndarray) -> np.ndarray:
    q = red.minmax_apply(red.project(displacement, tf.basis), tf.output_stats)
    c_q, _ = red.dwt_approx(q, tf.wavelet)
    return c_q


def decode_output(tf: Transforms, c_q: np.ndarray) -> np.ndarray:
    """Inverse chain: wavelet synthesis -> denormalize -> spatial reconstruction."""
    q = red.minmax_invert(red.idwt_approx(c_q, tf.wavelet), tf.output_stats)
    return red.reconstruct(q, tf.basis)


def _assemble(cfg: CaseConfig, run_dir, tf: Transforms, indices) -> tuple:
    xs, ys = [], []
    for i in indices:
        record, real, _, disp = load_sample(cfg, run_dir, i)
        xs.append(encode_input(tf, cases.excitation_channels(cfg, real, record), real.values))
        ys.append(encode_output(tf, disp))
    return np.stack(xs), np.stack(ys)


# --- training ------------------------------------------------------------------------


def run_training(cfg: CaseConfig, run_dir) -> net_mod.TrainResult:
    run_dir = Path(run_dir)
    tf = load_transforms(run_dir / "transforms")
    splits = load_splits(run_dir)
    train_x, train_y = _assemble(cfg, run_dir, tf, splits["train"])
    val_x, val_y = _assemble(cfg, run_dir, tf, splits["val"])

    net = net_mod.init_network(
        input_dim=train_x.shape[1],
        hidden_dim=cfg.net_hidden,
        output_dim=train_y.shape[1],
        dropout=net_mod.DropoutSpec(rate=cfg.net_dropout, scaled=cfg.net_scaled_dropout),
        seed=cfg.master_seed,
        sigma2=cfg.net_sigma2,
    )
    train_cfg = net_mod.TrainConfig(
        epochs=cfg.net_epochs,
        batch_size=cfg.net_batch,
        lr=cfg.net_lr,
        patience=cfg.net_patience,
        seed=cfg.master_seed,
    )
    t0 = time.perf_counter()
    result = net_mod.train(net, train_x, train_y, val_x, val_y, train_cfg)
    elapsed = time.perf_counter() - t0

    model_dir = run_dir / "model"
    for name, value in net_mod.parameters(net).items():
        arrayio.save_array(model_dir / name, value)
    arrayio.save_metadata(
        model_dir / "model.json",
        {
            "format_version": 1,
            "case": cfg.case,
            "input_dim": net.input_dim,
            "hidden_dim": net.hidden_dim,
            "output_dim": net.output_dim,
            "dropout_rate": cfg.net_dropout,
            "scaled_dropout": cfg.net_scaled_dropout,
            "sigma2": cfg.net_sigma2,
            "best_epoch": result.best_epoch,
            "best_val_loss": result.best_val_loss,
            "epochs_run": len(result.history),
        },
    )
    lines = ["epoch,train_loss,val_loss"]
    lines += [f"{e},{tr!r},{vl!r}" for e, tr, vl in result.history]
    (model_dir / "loss_history.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _log_timing(run_dir, f"train: {elapsed:.1f} s, {len(result.history)} epochs")
    return result


def load_model(run_dir) -> net_mod.VLstmNetwork:
    model_dir = Path(run_dir) / "model"
    meta = arrayio.load_metadata(model_dir / "model.json")
    if meta.get("format_version") != 1:
        raise InvalidArgumentError(f"unsupported model format {meta.get('format_version')}")
    net = net_mod.VLstmNetwork(
        lstm=net_mod.LstmLayerParams(
            w_in=arrayio.load_array(model_dir / "lstm_w_in"),
            w_rec=arrayio.load_array(model_dir / "lstm_w_rec"),
            bias=arrayio.load_array(model_dir / "lstm_bias"),
        ),
        dense=net_mod.DenseLayerParams(
            weight=arrayio.load_array(model_dir / "dense_weight"),
            bias=arrayio.load_array(model_dir / "dense_bias"),
        ),
        dropout=net_mod.DropoutSpec(rate=meta["dropout_rate"], scaled=meta["scaled_dropout"]),
        sigma2=meta["sigma2"],
    )
    return net


# --- prediction & evaluation ---------------------------------------------------------


def predict_sample(
    cfg: CaseConfig,
    tf: Transforms,
    net: net_mod.VLstmNetwork,
    record: ExcitationRecord,
    real: dyn.SystemRealization,
    seed_key: int,
) -> dict:
    """MC-dropout ensemble in physical units plus mean and confidence band."""
    x_aug = encode_input(tf, cases.excitation_channels(cfg, real, record), real.values)
    rng = stream(cfg.master_seed, 7, seed_key)
    coeff_ens = net_mod.mc_predict(net, x_aug, cfg.eval_n_realizations, rng)
    ensemble = np.stack([decode_output(tf, c) for c in coeff_ens])
    lower, upper = net_mod.confidence_interval(ensemble, cfg.eval_ci_level)
    return {
        "ensemble": ensemble,
        "mean": ensemble.mean(axis=0),
        "lower": lower,
        "upper": upper,
    }


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.corrcoef(np.asarray(a, float), np.asarray(b, float))[0, 1])


def evaluate(cfg: CaseConfig, run_dir) -> dict:
    """Test-split metrics: per-sample errors, peak correlation, CI coverage,
    and exemplar/hysteresis series for the median-error sample."""
    run_dir = Path(run_dir)
    t0 = time.perf_counter()
    tf = load_transforms(run_dir / "transforms")
    net = load_model(run_dir)
    splits = load_splits(run_dir)
    test_idx = splits["test"]
    monitored = cfg.monitored_dofs

    rows = []
    peak_ref = {d: [] for d in monitored}
    peak_pred = {d: [] for d in monitored}
    cache = {}
    for i in test_idx:
        record, real, _, ref = load_sample(cfg, run_dir, i)
        out = predict_sample(cfg, tf, net, record, real, seed_key=i)
        mean = out["mean"]
        err = mean - ref
        mse = float(np.mean(err**2))
        rel_rmse = float(np.linalg.norm(err) / np.linalg.norm(ref))
        covered = float(np.mean((out["lower"] <= ref) & (ref <= out["upper"])))
        for d in monitored:
            peak_ref[d].append(float(np.max(np.abs(ref[d]))))
            peak_pred[d].append(float(np.max(np.abs(mean[d]))))
        rows.append(
            {
                "index": i,
                "mse": mse,
                "rel_rmse": rel_rmse,
                "ci_coverage": covered,
                "peak_ref": [peak_ref[d][-1] for d in monitored],
                "peak_pred": [peak_pred[d][-1] for d in monitored],
            }
        )
        cache[i] = (record, real, ref, out)

    order = sorted(range(len(rows)), key=lambda j: rows[j]["mse"])
    exemplar_row = rows[order[(len(order) - 1) // 2]]
    exemplar = exemplar_row["index"]

    peak_corr = {str(d): _pearson(peak_ref[d], peak_pred[d]) for d in monitored}
    pooled_ref = np.concatenate([peak_ref[d] for d in monitored])
    pooled_pred = np.concatenate([peak_pred[d] for d in monitored])
    report = {
        "case": cfg.case,
        "n_test": len(test_idx),
        "monitored_dofs": list(monitored),
        "mean_rel_rmse": float(np.mean([r["rel_rmse"] for r in rows])),
        "mean_mse": float(np.mean([r["mse"] for r in rows])),
        "mean_ci_coverage": float(np.mean([r["ci_coverage"] for r in rows])),
        "ci_level": cfg.eval_ci_level,
        "n_realizations": cfg.eval_n_realizations,
        "peak_correlation": peak_corr,
        "peak_correlation_pooled": _pearson(pooled_ref, pooled_pred),
        "exemplar_index": exemplar,
        "samples": rows,
    }

    report_dir = run_dir / "report"
    record, real, ref, out = cache[exemplar]
    time_grid = np.arange(ref.shape[1]) * record.dt
    arrayio.save_array(report_dir / "exemplar_time", time_grid)
    arrayio.save_array(report_dir / "exemplar_reference", ref)
    arrayio.save_array(report_dir / "exemplar_mean", out["mean"])
    arrayio.save_array(report_dir / "exemplar_lower", out["lower"])
    arrayio.save_array(report_dir / "exemplar_upper", out["upper"])
    arrayio.save_array(
        report_dir / "peak_scatter",
        np.stack([pooled_ref, pooled_pred]),
    )

    spring = cases.story_spring(cfg, real, 0)
    drift_ref = ref[0]
    drift_pred = out["mean"][0]
    force_ref = dyn.replay_hysteresis(drift_ref, spring, record.dt)
    force_pred = dyn.replay_hysteresis(drift_pred, spring, record.dt)
    arrayio.save_array(report_dir / "hysteresis_reference", np.stack([drift_ref, force_ref]))
    arrayio.save_array(report_dir / "hysteresis_predicted", np.stack([drift_pred, force_pred]))
    report["hysteresis_area_reference"] = dyn.loop_area(drift_ref, force_ref)
    report["hysteresis_area_predicted"] = dyn.loop_area(drift_pred, force_pred)

    arrayio.save_metadata(report_dir / "report.json", report)
    _log_timing(run_dir, f"evaluate: {time.perf_counter() - t0:.1f} s, {len(test_idx)} samples")
    return report


def _log_timing(run_dir, message: str) -> None:
    with open(Path(run_dir) / "timing.txt", "a", encoding="utf-8") as fh:
        fh.write(message + "\n")


def run_all(cfg: CaseConfig, run_dir) -> dict:
    """Full chain: generate -> fit transforms -> train -> evaluate."""
    t0 = time.perf_counter()
    generate_dataset(cfg, run_dir)
    _log_timing(run_dir, f"generate: {time.perf_counter() - t0:.1f} s")
    fit_transforms(cfg, run_dir)
    run_training(cfg, run_dir)
    return evaluate(cfg, run_dir)
