"""Streaming inference and the two-phase training loop.

Inference streams frames through one persistent memory cache in the fixed
read -> forget -> decode -> update order.  Training draws consecutive frame
pairs (frame 0 pairs with itself), streams each pair from a fresh state, and
supervises the second frame; the pair order is reshuffled per epoch from the
run seed, which is what makes resuming from a checkpoint bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig
from .errors import ConfigError, IngestionError
from .fileio import read_pfm, write_pfm, write_ply, write_poses
from .heads import Intrinsics, pointmap_to_depth
from .illumination import blend_confidence, pretrain_ias
from .losses import LossWeights, total_loss
from .memory import ForgetPolicy, MemoryCache, memory_forget, memory_read, memory_update
from .metrics import cloud_metrics, depth_metrics
from .model import GeometryModel, load_model
from .nn import sgd_step
from .synthdata import Dataset, load_dataset
from .tensor import Tensor


@dataclass
class StreamState:
    cache: MemoryCache
    f_prev: Tensor | None
    frame_index: int = 0

    def detached(self) -> "StreamState":
        return StreamState(self.cache.detached(),
                           None if self.f_prev is None else self.f_prev.detach(),
                           self.frame_index)


@dataclass
class StepStats:
    frame_index: int
    size_before: int
    retained: int
    deleted: int
    size_after: int


def make_state(model: GeometryModel) -> StreamState:
    return StreamState(MemoryCache(dim=model.config.dim, dtype=model.dtype), None, 0)


def step(model: GeometryModel, state: StreamState, image: np.ndarray,
         intrinsics: Intrinsics | None = None, hooks=None):
    """Process one frame: returns (FrameOutput, new state, StepStats)."""
    cfg = model.config
    if image.shape != (3, cfg.height, cfg.width):
        raise ConfigError(
            f"frame shape {image.shape} does not match configured {3, cfg.height, cfg.width}")
    emit = hooks if hooks is not None else (lambda event: None)

    f_t = model.encoder(Tensor(image.astype(model.dtype)))
    f_prev = state.f_prev if state.f_prev is not None else f_t

    f_mem, weights = memory_read(f_prev, state.cache)
    emit("read")
    size_before = state.cache.size
    if cfg.memory.enabled:
        policy = ForgetPolicy(cfg.memory.weight_threshold, cfg.memory.fraction_threshold)
        cache, mask = memory_forget(state.cache, weights, policy)
        retained = int(mask.sum())
    else:
        cache, retained = state.cache, size_before
    emit("forget")

    f_hat_t, f_hat_prev = model.decoder(f_t, f_mem)
    out = model.heads(f_hat_t, cfg.grid_hw)
    emit("decode")

    cache = memory_update(cache, f_mem, f_hat_prev, model.key_encoder, model.value_encoder)
    emit("update")

    if intrinsics is not None:
        out.depth, out.valid = pointmap_to_depth(out.pointmap.data, out.pose, intrinsics)
    stats = StepStats(frame_index=state.frame_index, size_before=size_before,
                      retained=retained, deleted=size_before - retained,
                      size_after=cache.size)
    return out, StreamState(cache, f_t, state.frame_index + 1), stats


def consecutive_pairs(n_frames: int) -> list[tuple[int, int]]:
    """(0,0), (0,1), (1,2), ...: frame 0 pairs with itself so it is supervised."""
    return [(0, 0)] + [(t - 1, t) for t in range(1, n_frames)]


def pair_for_step(seed: int, n_pairs: int, global_step: int) -> int:
    epoch, offset = divmod(global_step, n_pairs)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x70C0, epoch]))
    return int(rng.permutation(n_pairs)[offset])


def relative_ground_truth(dataset: Dataset, prev_i: int, cur_i: int):
    """Ground truth for frame cur_i expressed in frame prev_i's camera frame.

    A pair streamed from a fresh state has its own first frame as the world
    anchor, so supervision must be relative to it; streaming a full sequence
    from frame 0 recovers the dataset's world frame unchanged.
    """
    anchor = dataset.poses[prev_i].inverse()
    rel_pose = anchor.compose(dataset.poses[cur_i])
    pts = dataset.pointmaps[cur_i]
    flat = anchor.rotation() @ pts.reshape(3, -1) + anchor.t[:, None]
    return np.ascontiguousarray(flat.reshape(pts.shape)), rel_pose


def train_pair_loss(model: GeometryModel, images: tuple[np.ndarray, np.ndarray],
                    gt_pointmap: np.ndarray, gt_pose, gt_image: np.ndarray,
                    weights: LossWeights):
    """Stream a (previous, current) pair from scratch; loss on the current frame.

    Ground truth must already sit in the pair's first-frame coordinates
    (see relative_ground_truth)."""
    state = make_state(model)
    _, state, _ = step(model, state, images[0])
    out, state, stats = step(model, state, images[1])
    light = model.ias(Tensor(images[1].astype(model.dtype))).light
    blended = blend_confidence(out.confidence, light, model.alpha())
    total, report = total_loss(out.pointmap, out.pose_q, out.pose_t, out.rgb, blended,
                               gt_pointmap, gt_pose, gt_image, weights)
    return total, report, stats


@dataclass
class TrainResult:
    history: list  # per-step LossReport totals
    log_rows: list
    final_step: int


def smoothed(values, window: int) -> list[float]:
    out = []
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out.append(float(np.mean(values[lo : i + 1])))
    return out


def train(config: ModelConfig, data_dir, out_ckpt, steps: int | None = None,
          resume=None, log_path=None, ias_ckpt=None, quiet: bool = True) -> TrainResult:
    dataset = load_dataset(data_dir)
    _check_dataset_matches(config, dataset)
    dtype = np.float32 if config.train.dtype == "float32" else np.float64
    steps = config.train.steps if steps is None else steps

    if resume is not None:
        model, start_step = load_model(config, resume, dtype)
    else:
        model = GeometryModel(config, dtype)
        start_step = 0
        _prepare_ias(model, dataset, config, ias_ckpt)

    weights = LossWeights(config.loss.lambda_reg, config.loss.w_pose, config.loss.w_rgb)
    pairs = consecutive_pairs(len(dataset))
    params = model.trainable_params()
    history = []
    rows = []
    for global_step in range(start_step, steps):
        prev_i, cur_i = pairs[pair_for_step(config.seed, len(pairs), global_step)]
        model.zero_grad()
        rel_points, rel_pose = relative_ground_truth(dataset, prev_i, cur_i)
        total, report, stats = train_pair_loss(
            model, (dataset.images[prev_i], dataset.images[cur_i]),
            rel_points, rel_pose, dataset.images[cur_i], weights)
        total.backward()
        sgd_step(params, config.train.lr, config.train.clip_norm)
        history.append(report)
        rows.append({
            "step": global_step,
            "L_conf": report.conf,
            "L_pose": report.pose,
            "L_rgb": report.rgb,
            "total": report.total,
            "alpha": float(model.alpha().data),
            "cache_size": stats.size_after,
        })
        if not quiet and (global_step % 20 == 0 or global_step == steps - 1):
            print(f"step {global_step}: total={report.total:.4f} "
                  f"conf={report.conf:.4f} pose={report.pose:.4f} rgb={report.rgb:.4f}")
    model.save(out_ckpt, step=steps)
    if log_path is not None:
        _write_log(log_path, rows)
    return TrainResult(history=history, log_rows=rows, final_step=steps)


def _prepare_ias(model: GeometryModel, dataset: Dataset, config: ModelConfig,
                 ias_ckpt) -> None:
    if ias_ckpt is not None and Path(ias_ckpt).exists():
        records = load_checkpoint(ias_ckpt)
        for name, p in model.ias.named_params("ias"):
            if name not in records:
                raise IngestionError(f"IAS checkpoint is missing record {name!r}")
            p.data = records[name].astype(model.dtype)
        model.ias.freeze()
        return
    pretrain_ias(model.ias, dataset.images, epochs=config.ias.epochs,
                 batch=config.ias.batch, lr=config.ias.lr, seed=config.seed,
                 eps=config.ias.grad_eps, beta_light=config.ias.beta_light,
                 residual=config.ias.residual)
    if ias_ckpt is not None:
        save_checkpoint(ias_ckpt, {name: p.data for name, p in model.ias.named_params("ias")})


def _write_log(path, rows) -> None:
    header = ["step", "L_conf", "L_pose", "L_rgb", "total", "alpha", "cache_size"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k])
                              for k in header))
    Path(path).write_text("\n".join(lines) + "\n")


def _check_dataset_matches(config: ModelConfig, dataset: Dataset) -> None:
    h, w = dataset.depths[0].shape
    if (h, w) != (config.height, config.width):
        raise ConfigError(
            f"dataset frames are {h}x{w} but the config expects {config.height}x{config.width}")


def infer(config: ModelConfig, ckpt, frames_dir, out_dir,
          dump_memory_stats: bool = False, dump_light=None) -> dict:
    dataset = load_dataset(frames_dir)
    _check_dataset_matches(config, dataset)
    model, _ = load_model(config, ckpt)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if dump_light is not None:
        Path(dump_light).mkdir(parents=True, exist_ok=True)

    state = make_state(model)
    poses = []
    stats_rows = []
    cloud_points = []
    cloud_colors = []
    for i, image in enumerate(dataset.images):
        out, state, stats = step(model, state, image, dataset.intrinsics)
        state = state.detached()
        write_pfm(out_dir / f"frame_{i:05d}.depth.pfm", out.depth)
        write_pfm(out_dir / f"frame_{i:05d}.points.pfm",
                  out.pointmap.data.astype(np.float64).transpose(1, 2, 0))
        poses.append(out.pose)
        stats_rows.append(stats)
        conf = out.confidence.data
        keep = conf >= np.percentile(conf, config.infer.conf_percentile)
        pts = out.pointmap.data.reshape(3, -1).T[keep.reshape(-1)]
        cols = out.rgb.data.reshape(3, -1).T[keep.reshape(-1)]
        cloud_points.append(pts)
        cloud_colors.append(np.clip(np.rint(cols * 255.0), 0, 255).astype(np.uint8))
        if dump_light is not None:
            light = model.ias(Tensor(image.astype(model.dtype))).light
            write_pfm(Path(dump_light) / f"frame_{i:05d}.light.pfm", light.data)

    write_poses(out_dir / "poses.json", poses)
    write_ply(out_dir / "fused.ply", np.concatenate(cloud_points, axis=0),
              np.concatenate(cloud_colors, axis=0))
    if dump_memory_stats:
        lines = ["frame_index,S_before,retained,deleted,S_after"]
        for s in stats_rows:
            lines.append(f"{s.frame_index},{s.size_before},{s.retained},{s.deleted},{s.size_after}")
        (out_dir / "memory_stats.csv").write_text("\n".join(lines) + "\n")
    return {"frames": len(dataset.images),
            "cloud_points": int(sum(len(p) for p in cloud_points)),
            "final_cache": stats_rows[-1].size_after if stats_rows else 0}


def evaluate(pred_dir, gt_dir, median_scale: bool = True,
             thresholds=(1.0, 2.0, 5.0)) -> dict:
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    gt = load_dataset(gt_dir)
    n = len(gt)
    pred_depths = []
    pred_points = []
    for i in range(n):
        dp = pred_dir / f"frame_{i:05d}.depth.pfm"
        pp = pred_dir / f"frame_{i:05d}.points.pfm"
        if not dp.exists() or not pp.exists():
            raise IngestionError(
                f"prediction dir {pred_dir} has {i} frames but ground truth has {n}")
        pred_depths.append(read_pfm(dp))
        pred_points.append(np.ascontiguousarray(read_pfm(pp).transpose(2, 0, 1)))
    if (pred_dir / f"frame_{n:05d}.depth.pfm").exists():
        raise IngestionError(f"prediction dir {pred_dir} has more frames than ground truth ({n})")

    frames = []
    for i in range(n):
        mask = (gt.depths[i] > 0) & (pred_depths[i] > 0)
        dm = depth_metrics(pred_depths[i], gt.depths[i], mask, median_scale)
        pts_pred = pred_points[i].reshape(3, -1).T[mask.reshape(-1)]
        pts_gt = gt.pointmaps[i].reshape(3, -1).T[mask.reshape(-1)]
        cm = cloud_metrics(pts_pred, pts_gt, thresholds)
        frames.append({"frame": i, "depth": dm.as_dict(), "cloud": cm.as_dict()})

    def agg(path):
        return float(np.mean([f[path[0]][path[1]] if len(path) == 2
                              else f[path[0]][path[1]][path[2]] for f in frames]))

    aggregate = {
        "depth": {k: agg(("depth", k)) for k in ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta")},
        "cloud": {
            "med": agg(("cloud", "med")),
            "delta_n": {str(float(t)): agg(("cloud", "delta_n", str(float(t))))
                        for t in thresholds},
        },
    }
    return {
        "median_scale": median_scale,
        "thresholds": [float(t) for t in thresholds],
        "frames": frames,
        "aggregate": aggregate,
    }


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=1, sort_keys=True))
