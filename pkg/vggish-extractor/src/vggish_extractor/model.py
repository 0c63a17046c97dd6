"""VGGish network, weight loading, and optional release postprocessing.

The network is the audio VGG used by the public AudioSet embedding
release: five conv groups (64/128/256x2/512x2 channels) with 2x2 max
pooling, then a 4096-4096-128 fully connected head with relu
everywhere including the final embedding. State dict keys follow the
common torch port (`features.N.*`, `embeddings.N.*`) so released
pretrained checkpoints load directly.

The postprocessor applies the release's PCA whitening, clips to
[-2, 2], and quantizes to 255 levels; quantized values are kept as
floats so the output file format never changes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

EMBEDDING_SIZE = 128
PCA_CLIP = 2.0
QUANT_LEVELS = 255


class WeightsError(ValueError):
    """Missing or malformed weights checkpoint."""


class VGGish(nn.Module):
    def __init__(self):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(1, 64, 3, padding=1), nn.ReLU(inplace=True), nn.MaxPool2d(2, 2),
            nn.Conv2d(64, 128, 3, padding=1), nn.ReLU(inplace=True), nn.MaxPool2d(2, 2),
            nn.Conv2d(128, 256, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(256, 256, 3, padding=1), nn.ReLU(inplace=True), nn.MaxPool2d(2, 2),
            nn.Conv2d(256, 512, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(512, 512, 3, padding=1), nn.ReLU(inplace=True), nn.MaxPool2d(2, 2),
        )
        self.embeddings = nn.Sequential(
            nn.Linear(512 * 4 * 6, 4096), nn.ReLU(inplace=True),
            nn.Linear(4096, 4096), nn.ReLU(inplace=True),
            nn.Linear(4096, EMBEDDING_SIZE), nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.features(x.unsqueeze(1))
        # channel-last flatten, the order the released weights expect
        x = x.permute(0, 2, 3, 1).contiguous()
        return self.embeddings(x.view(x.size(0), -1))


@dataclass(frozen=True)
class LoadedWeights:
    model: VGGish
    pca_eigen_vectors: torch.Tensor | None
    pca_means: torch.Tensor | None


def load_weights(path: str | Path) -> LoadedWeights:
    """Load a checkpoint holding the model state dict and optional PCA.

    The file is a flat tensor dict: `features.*` and `embeddings.*`
    keys for the network, plus optional `pca_eigen_vectors` (128 x 128)
    and `pca_means` (128) for the postprocessor.
    """
    path = Path(path)
    if not path.exists():
        raise WeightsError(f"missing weights file {path}")
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise WeightsError(f"unreadable weights file {path}: {exc}") from None
    if not isinstance(blob, dict):
        raise WeightsError(f"weights file {path} does not hold a tensor dict")

    state = {k: v for k, v in blob.items() if k.startswith(("features.", "embeddings."))}
    model = VGGish()
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise WeightsError(f"weights file {path} does not match the network: {exc}") from None
    model.eval()

    eigen = blob.get("pca_eigen_vectors")
    means = blob.get("pca_means")
    if means is not None:
        means = means.reshape(-1)  # some releases store (128, 1)
    for name, t, shape in (
        ("pca_eigen_vectors", eigen, (EMBEDDING_SIZE, EMBEDDING_SIZE)),
        ("pca_means", means, (EMBEDDING_SIZE,)),
    ):
        if t is not None and tuple(t.shape) != shape:
            raise WeightsError(f"{name} in {path} has shape {tuple(t.shape)}, want {shape}")
    return LoadedWeights(model, eigen, means)


def embed(model: VGGish, batch: np.ndarray) -> np.ndarray:
    """Map (n, 96, 64) float32 log-mel examples to (n, 128) float32."""
    with torch.no_grad():
        out = model(torch.from_numpy(batch).float())
    return out.numpy()


def postprocess(emb: np.ndarray, eigen: torch.Tensor, means: torch.Tensor) -> np.ndarray:
    """PCA whitening, [-2, 2] clipping, then 255-level quantization."""
    projected = (torch.from_numpy(emb).float() - means) @ eigen.t()
    clipped = projected.clamp(-PCA_CLIP, PCA_CLIP)
    quantized = torch.round((clipped + PCA_CLIP) * (QUANT_LEVELS / (2.0 * PCA_CLIP)))
    return quantized.numpy()


def make_test_weights(seed: int = 0) -> dict[str, torch.Tensor]:
    """Seeded random tensor dict shaped like a real checkpoint.

    For tests and dry runs only; the embeddings are deterministic but
    meaningless. Small positive biases keep relu units alive.
    """
    g = torch.Generator().manual_seed(seed)
    out: dict[str, torch.Tensor] = {}
    for name, ref in VGGish().state_dict().items():
        if name.endswith(".bias"):
            out[name] = torch.full(ref.shape, 0.01)
        else:
            fan_in = int(np.prod(ref.shape[1:]))
            out[name] = torch.randn(ref.shape, generator=g) * (1.0 / np.sqrt(fan_in))
    q, _ = torch.linalg.qr(torch.randn(EMBEDDING_SIZE, EMBEDDING_SIZE, generator=g))
    out["pca_eigen_vectors"] = q.contiguous()
    out["pca_means"] = torch.randn(EMBEDDING_SIZE, generator=g) * 0.1
    return out
