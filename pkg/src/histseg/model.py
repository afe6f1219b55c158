"""``HSEG`` model files.

Layout (little-endian)::

    b"HSEG" | uint32 version | uint32 header length | header (UTF-8 JSON)
    | float32 parameter blobs, in Network.parameters() order

The JSON header holds the network config, the palette and the preprocessing
settings needed to segment new pages the same way the training pages were.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from histseg.imageio import DEFAULT_PALETTE, Palette
from histseg.nn import Network, NetworkConfig, TrainConfig

MAGIC = b"HSEG"
VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """Everything a train/segment run depends on."""

    scale_exp: int = 3
    superpixels: int = 3000
    compactness: float = 10.0
    slic_iterations: int = 10
    network: NetworkConfig = field(default_factory=NetworkConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    palette: Palette = DEFAULT_PALETTE

    def __post_init__(self):
        if self.network.num_classes != self.palette.num_classes:
            raise ValueError(
                f"network has {self.network.num_classes} classes, palette has {self.palette.num_classes}"
            )

    @property
    def seed(self) -> int:
        return self.training.seed

    def preprocessing(self) -> dict:
        return {
            "scale_exp": self.scale_exp,
            "superpixels": self.superpixels,
            "compactness": self.compactness,
            "slic_iterations": self.slic_iterations,
        }


def save_model(path, net: Network, run: RunConfig) -> None:
    """Write ``net`` and quantize its parameters to float32 in place.

    After saving, the in-memory network and a reloaded copy give identical
    predictions.
    """
    net.quantize()
    header = {
        "network": net.config.to_dict(),
        "palette": run.palette.to_dict(),
        "preprocessing": run.preprocessing(),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", MAGIC, VERSION, len(blob)))
        f.write(blob)
        for _, p in net.parameters():
            f.write(p.astype("<f4").tobytes())


def load_model(path) -> tuple[Network, RunConfig]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != MAGIC:
        raise ValueError(f"{path}: not an HSEG model file")
    _, version, hlen = struct.unpack_from("<4sII", data)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    header = json.loads(data[12 : 12 + hlen])
    config = NetworkConfig.from_dict(header["network"])
    palette = Palette.from_dict(header["palette"])
    run = RunConfig(network=config, palette=palette, **header["preprocessing"])

    net = Network.init(config, seed=0)
    offset = 12 + hlen
    for name, p in net.parameters():
        nbytes = p.size * 4
        chunk = data[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ValueError(f"{path}: truncated at parameter {name}")
        p[...] = np.frombuffer(chunk, dtype="<f4").reshape(p.shape)
        offset += nbytes
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
    return net, run


def run_config_dict(run: RunConfig) -> dict:
    d = run.preprocessing()
    d["network"] = run.network.to_dict()
    d["training"] = asdict(run.training)
    d["palette"] = run.palette.to_dict()
    return d
