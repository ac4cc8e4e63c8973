"""Full model assembly and checkpoint load/save glue."""

from __future__ import annotations

import numpy as np

from .attention import AttentionConfig
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig
from .errors import CheckpointError
from .heads import DualDecoder, OutputHeads
from .illumination import IlluminationNet
from .memory import TokenEncoder
from .nn import Module, check_unique_names
from .sap import Encoder, EncoderConfig
from .tensor import Param, Tensor, sigmoid


class GeometryModel(Module):
    """Encoder + memory encoders + dual decoder + heads + frozen-light net."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xC06E]))
        self.config = config
        self.dtype = np.dtype(dtype)
        enc_cfg = EncoderConfig(
            stages=config.stages, blocks_per_stage=config.blocks_per_stage,
            patch=config.patch, dim=config.dim, heads=config.heads,
            window=config.window, eq2_input=config.eq2_input,
            image_hw=(config.height, config.width))
        attn_cfg = AttentionConfig(dim=config.dim, heads=config.heads, window=config.window)
        self.encoder = Encoder(enc_cfg, rng, dtype)
        self.decoder = DualDecoder(attn_cfg, rng, dtype, blocks=config.decoder_blocks)
        self.heads = OutputHeads(config.dim, config.patch, rng, dtype)
        self.key_encoder = TokenEncoder(config.dim, rng, dtype, final_bias=False)
        self.value_encoder = TokenEncoder(config.dim, rng, dtype)
        self.ias = IlluminationNet(rng, dtype, width=config.ias.width)
        self.blend_raw = Param(np.array(0.0, dtype=dtype))
        check_unique_names(self)

    def alpha(self) -> Tensor:
        return sigmoid(self.blend_raw)

    def trainable_params(self):
        """Everything except the illumination net, which trains in its own phase."""
        return [p for name, p in self.named_params()
                if not name.startswith("ias.") and p.requires_grad]

    def state_records(self, step: int = 0) -> dict:
        records = {name: p.data for name, p in self.named_params()}
        records["trainer.step"] = np.array(float(step), dtype=np.float32)
        return records

    def load_records(self, records: dict) -> int:
        for name, p in self.named_params():
            if name not in records:
                raise CheckpointError(f"checkpoint is missing record {name!r}")
            value = records[name]
            if tuple(value.shape) != tuple(p.data.shape):
                raise CheckpointError(
                    f"record {name!r} has shape {tuple(value.shape)}, expected {tuple(p.data.shape)}")
            p.data = value.astype(self.dtype)
        extras = set(records) - {name for name, _ in self.named_params()} - {"trainer.step"}
        if extras:
            raise CheckpointError(f"checkpoint has unexpected records {sorted(extras)}")
        return int(records.get("trainer.step", np.float32(0.0)))

    def save(self, path, step: int = 0) -> None:
        save_checkpoint(path, self.state_records(step))


def load_model(config: ModelConfig, ckpt_path, dtype=None) -> tuple[GeometryModel, int]:
    dtype = dtype or (np.float32 if config.train.dtype == "float32" else np.float64)
    model = GeometryModel(config, dtype)
    step = model.load_records(load_checkpoint(ckpt_path))
    model.ias.freeze()
    return model, step
