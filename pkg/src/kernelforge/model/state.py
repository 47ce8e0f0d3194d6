"""Model state and single-file binary checkpoints.

Checkpoint layout (all integers little-endian):
  magic  b"KFCK\\x01"
  u32    header length, then that many bytes of JSON
         {"model": ..., "optimizer": ..., "step": int, "seed": int}
  repeated records until EOF:
    u16  name length, then the UTF-8 name
    u8   ndim, then ndim x u32 dims
    f32  data, row-major, prod(dims) values
Records cover every module tensor plus Adam moments (adam.m.<name>,
adam.v.<name>) and per-parameter step counters (adam.step.<name>).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
import torch

from .config import ModelConfig, OptimizerConfig
from .network import InfillNet

_MAGIC = b"KFCK\x01"


@dataclass
class ModelState:
    config: ModelConfig
    opt_config: OptimizerConfig
    net: InfillNet
    optimizer: torch.optim.Adam
    step: int
    seed: int


def init_state(config: ModelConfig, opt_config: OptimizerConfig | None = None,
               seed: int = 0) -> ModelState:
    """Fresh model with seeded parameter init."""
    opt_config = opt_config or OptimizerConfig()
    torch.manual_seed(seed)
    net = InfillNet(config)
    optimizer = torch.optim.Adam(
        net.parameters(), lr=opt_config.max_lr,
        betas=(opt_config.beta1, opt_config.beta2), eps=opt_config.eps,
    )
    return ModelState(config, opt_config, net, optimizer, step=0, seed=seed)


def _write_record(fh, name: str, array: np.ndarray):
    data = np.ascontiguousarray(array, dtype="<f4")
    encoded = name.encode()
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", data.ndim))
    for d in data.shape:
        fh.write(struct.pack("<I", d))
    fh.write(data.tobytes())


def _read_record(fh):
    raw = fh.read(2)
    if not raw:
        return None
    (name_len,) = struct.unpack("<H", raw)
    name = fh.read(name_len).decode()
    (ndim,) = struct.unpack("<B", fh.read(1))
    shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
    return name, data


def save_checkpoint(state: ModelState, path) -> None:
    header = json.dumps({
        "model": state.config.to_dict(),
        "optimizer": state.opt_config.to_dict(),
        "step": state.step,
        "seed": state.seed,
    }).encode()
    params = dict(state.net.named_parameters())
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for name, tensor in state.net.state_dict().items():
            _write_record(fh, name, tensor.detach().cpu().numpy())
        for name, param in params.items():
            slot = state.optimizer.state.get(param)
            if not slot:
                continue
            _write_record(fh, f"adam.m.{name}", slot["exp_avg"].cpu().numpy())
            _write_record(fh, f"adam.v.{name}", slot["exp_avg_sq"].cpu().numpy())
            _write_record(fh, f"adam.step.{name}", np.asarray(float(slot["step"])))


def load_checkpoint(path) -> ModelState:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode())
        records = {}
        while True:
            rec = _read_record(fh)
            if rec is None:
                break
            records[rec[0]] = rec[1]
    config = ModelConfig.from_dict(header["model"])
    opt_config = OptimizerConfig.from_dict(header["optimizer"])
    state = init_state(config, opt_config, seed=header["seed"])
    state.step = header["step"]
    tensors = {
        name: torch.from_numpy(np.array(records[name]))
        for name in state.net.state_dict()
    }
    state.net.load_state_dict(tensors)
    for name, param in state.net.named_parameters():
        key = f"adam.m.{name}"
        if key not in records:
            continue
        state.optimizer.state[param] = {
            "step": torch.tensor(float(records[f"adam.step.{name}"])),
            "exp_avg": torch.from_numpy(np.array(records[key])),
            "exp_avg_sq": torch.from_numpy(np.array(records[f"adam.v.{name}"])),
        }
    return state
