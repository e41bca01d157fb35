"""Networks for CIR-based jammer localization.

The autoencoder is a 1-D ConvNeXt encoder/decoder over (magnitude, sin phase,
cos phase) x 100 taps.  The pooled bottleneck embedding feeds a linear
regression head and, through a gradient-reversal layer, a domain classifier.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class AutoencoderSpec:
    in_channels: int = 3
    taps: int = 100
    stage_channels: tuple[int, ...] = (32, 64, 128)
    blocks_per_stage: int = 2
    convnext_kernel: int = 7
    expansion: int = 4
    noise_sigma: float = 0.6
    # "stages": noise on the input of every encoder stage; "input": raw input only
    noise_mode: str = "stages"

    @property
    def embedding_dim(self) -> int:
        return self.stage_channels[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage_channels"] = list(self.stage_channels)
        return d


@dataclass(frozen=True)
class DomainClassifierSpec:
    in_dim: int = 128
    hidden: tuple[int, int] = (128, 64)


class GradientReversal(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, lambd):
        ctx.lambd = lambd
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output.neg() * ctx.lambd, None


def grl(x: torch.Tensor, lambd: float) -> torch.Tensor:
    """Identity on the forward pass; scales the incoming gradient by -lambd."""
    if lambd < 0:
        raise ValueError(f"reversal strength must be non-negative, got {lambd}")
    return GradientReversal.apply(x, float(lambd))


class GRL(nn.Module):
    def __init__(self, lambd: float = 0.0):
        super().__init__()
        if lambd < 0:
            raise ValueError(f"reversal strength must be non-negative, got {lambd}")
        self.lambd = float(lambd)

    def forward(self, x):
        return grl(x, self.lambd)


class ChannelLayerNorm(nn.Module):
    """LayerNorm over the channel axis of a (B, C, L) tensor, per position."""

    def __init__(self, dim: int, eps: float = 1e-6):
        super().__init__()
        self.norm = nn.LayerNorm(dim, eps=eps)

    def forward(self, x):
        return self.norm(x.transpose(1, 2)).transpose(1, 2)


class ConvNeXtBlock1d(nn.Module):
    def __init__(self, dim: int, kernel: int = 7, expansion: int = 4):
        super().__init__()
        self.dwconv = nn.Conv1d(dim, dim, kernel_size=kernel, padding=kernel // 2, groups=dim)
        self.norm = nn.LayerNorm(dim, eps=1e-6)
        self.pwconv1 = nn.Linear(dim, expansion * dim)
        self.act = nn.GELU()
        self.pwconv2 = nn.Linear(expansion * dim, dim)

    def forward(self, x):
        h = self.dwconv(x).transpose(1, 2)
        h = self.pwconv2(self.act(self.pwconv1(self.norm(h))))
        return x + h.transpose(1, 2)


def _blocks(dim: int, spec: AutoencoderSpec) -> nn.Sequential:
    return nn.Sequential(
        *[ConvNeXtBlock1d(dim, spec.convnext_kernel, spec.expansion) for _ in range(spec.blocks_per_stage)]
    )


# (kernel, stride, padding) of each downsampling conv; lengths 100 -> 50 -> 25 -> 13
_DOWN = ((4, 2, 1), (3, 2, 1), (3, 2, 1))


class ConvNeXtAutoencoder(nn.Module):
    """Denoising ConvNeXt autoencoder with a 128-d pooled embedding."""

    def __init__(self, spec: AutoencoderSpec | None = None):
        super().__init__()
        spec = spec or AutoencoderSpec()
        if len(spec.stage_channels) != len(_DOWN):
            raise ValueError("exactly three encoder stages are supported")
        self.spec = spec

        chans = (spec.in_channels, *spec.stage_channels)
        self.encoder = nn.ModuleList()
        for i, (k, s, p) in enumerate(_DOWN):
            self.encoder.append(
                nn.Sequential(
                    nn.Conv1d(chans[i], chans[i + 1], kernel_size=k, stride=s, padding=p),
                    _blocks(chans[i + 1], spec),
                )
            )

        # Mirror: blocks(128) -> up 128->64 -> blocks(64) -> up 64->32 -> blocks(32) -> up 32->32
        lengths = self.stage_lengths()
        stage_inputs = [spec.taps, *lengths[:-1]]
        self.decoder = nn.ModuleList()
        for i in reversed(range(len(_DOWN))):
            k, s, p = _DOWN[i]
            c_in = chans[i + 1]
            c_out = chans[i] if i > 0 else chans[1]
            l_in = lengths[i]
            l_target = stage_inputs[i]
            out_pad = l_target - ((l_in - 1) * s - 2 * p + k)
            if not 0 <= out_pad < s:
                raise ValueError(f"cannot restore length {l_target} from {l_in}")
            self.decoder.append(
                nn.Sequential(
                    _blocks(c_in, spec),
                    nn.ConvTranspose1d(c_in, c_out, kernel_size=k, stride=s, padding=p, output_padding=out_pad),
                )
            )
        self.final_conv = nn.Conv1d(chans[1], spec.in_channels, kernel_size=spec.convnext_kernel,
                                    padding=spec.convnext_kernel // 2)

    def stage_lengths(self) -> list[int]:
        out, length = [], self.spec.taps
        for k, s, p in _DOWN:
            length = (length + 2 * p - k) // s + 1
            out.append(length)
        return out

    def _noise(self, x):
        return x + torch.randn_like(x) * self.spec.noise_sigma

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return (pooled embedding B x 128, feature map B x 128 x 13)."""
        if x.dim() != 3 or x.shape[1] != self.spec.in_channels or x.shape[2] != self.spec.taps:
            raise ValueError(
                f"expected input B x {self.spec.in_channels} x {self.spec.taps}, got {tuple(x.shape)}"
            )
        h = x
        noisy = self.training and self.spec.noise_sigma > 0
        for i, stage in enumerate(self.encoder):
            if noisy and (i == 0 or self.spec.noise_mode == "stages"):
                h = self._noise(h)
            h = stage(h)
        return h.mean(dim=2), h

    def decode(self, featmap: torch.Tensor) -> torch.Tensor:
        expected = (self.spec.embedding_dim, self.stage_lengths()[-1])
        if featmap.dim() != 3 or tuple(featmap.shape[1:]) != expected:
            raise ValueError(f"expected featmap B x {expected[0]} x {expected[1]}, got {tuple(featmap.shape)}")
        h = featmap
        for stage in self.decoder:
            h = stage(h)
        return self.final_conv(h)

    def forward(self, x):
        emb, fmap = self.encode(x)
        return self.decode(fmap), emb


class DomainClassifier(nn.Module):
    def __init__(self, spec: DomainClassifierSpec | None = None):
        super().__init__()
        spec = spec or DomainClassifierSpec()
        h1, h2 = spec.hidden
        self.net = nn.Sequential(
            nn.Linear(spec.in_dim, h1), nn.ReLU(),
            nn.Linear(h1, h2), nn.ReLU(),
            nn.Linear(h2, 1),
        )

    def forward(self, embedding: torch.Tensor, lambd: float = 0.0) -> torch.Tensor:
        """Probability that each embedding comes from the target domain."""
        return torch.sigmoid(self.net(grl(embedding, lambd)))


class RegressionHead(nn.Linear):
    def __init__(self, in_dim: int = 128, out_dim: int = 2):
        super().__init__(in_dim, out_dim)


class DANN(nn.Module):
    """Autoencoder + regression head + domain classifier, sharing one encoder."""

    # module prefixes unfrozen during fine-tuning
    FINETUNE_UNFREEZE = ("autoencoder.encoder.2", "autoencoder.decoder", "autoencoder.final_conv",
                         "regressor", "domain_clf")

    def __init__(self, ae_spec: AutoencoderSpec | None = None):
        super().__init__()
        self.autoencoder = ConvNeXtAutoencoder(ae_spec)
        dim = self.autoencoder.spec.embedding_dim
        self.regressor = RegressionHead(dim, 2)
        self.domain_clf = DomainClassifier(DomainClassifierSpec(in_dim=dim))

    def forward(self, x, lambd: float = 0.0):
        emb, fmap = self.autoencoder.encode(x)
        recon = self.autoencoder.decode(fmap)
        return recon, emb, self.regressor(emb), self.domain_clf(emb, lambd)


class ResidualBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.fc = nn.Linear(width, width)

    def forward(self, x):
        return x + F.relu(self.fc(x))


class SimpleNN(nn.Module):
    """Fully-connected residual network over the 11 diagnostic features."""

    def __init__(self, in_dim: int = 11, head: str = "classify52", width: int = 128, n_classes: int = 52):
        super().__init__()
        if head not in ("classify52", "regress2"):
            raise ValueError(f"unknown head {head!r}")
        self.head_kind = head
        self.stem = nn.Linear(in_dim, width)
        self.blocks = nn.Sequential(ResidualBlock(width), ResidualBlock(width))
        self.head = nn.Linear(width, n_classes if head == "classify52" else 2)

    def forward(self, x):
        if x.dim() != 2 or x.shape[1] != self.stem.in_features:
            raise ValueError(f"expected B x {self.stem.in_features} input, got {tuple(x.shape)}")
        return self.head(self.blocks(self.stem(x)))


def param_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def spec_hash(spec: AutoencoderSpec) -> str:
    import hashlib
    import json

    blob = json.dumps(spec.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
