#!/usr/bin/env python3
"""Generate bridge-parity fixtures: a randomly initialized reference detector
in the mainstream ecosystem's module layout (torch, `model.N...` state-dict
names), saved as safetensors, plus a deterministic test image and the
reference raw head outputs on that image.

Usage:
  python3 scripts/make_reference.py --variant yolov8n --outdir /tmp/fixtures [--seed 0]

Writes to outdir:
  source.safetensors   the reference state dict (F32, BN stats included)
  image.ppm            416x416 deterministic gradient image
  expected_raw.safetensors   raw head maps p3/p4/p5 from the reference forward
"""

import argparse
import json
import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

REG_MAX = 16
SE_R = 16


class Conv(nn.Module):
    def __init__(self, c1, c2, k=1, s=1, g=1):
        super().__init__()
        self.conv = nn.Conv2d(c1, c2, k, s, k // 2, groups=g, bias=False)
        self.bn = nn.BatchNorm2d(c2, eps=1e-3, momentum=0.03)
        self.act = nn.SiLU()

    def forward(self, x):
        return self.act(self.bn(self.conv(x)))


class Bottleneck(nn.Module):
    def __init__(self, c, shortcut=True):
        super().__init__()
        self.cv1 = Conv(c, c, 3)
        self.cv2 = Conv(c, c, 3)
        self.add = shortcut

    def forward(self, x):
        y = self.cv2(self.cv1(x))
        return x + y if self.add else y


class C2f(nn.Module):
    def __init__(self, c1, c2, n=1, shortcut=False):
        super().__init__()
        self.c = c2 // 2
        self.cv1 = Conv(c1, 2 * self.c, 1)
        self.cv2 = Conv((2 + n) * self.c, c2, 1)
        self.m = nn.ModuleList(Bottleneck(self.c, shortcut) for _ in range(n))

    def forward(self, x):
        y = list(self.cv1(x).chunk(2, 1))
        y.extend(m(y[-1]) for m in self.m)
        return self.cv2(torch.cat(y, 1))


class CIB(nn.Module):
    def __init__(self, c1, c2, shortcut=True, e=1.0):
        super().__init__()
        c_ = int(c2 * e)
        self.cv1 = nn.Sequential(
            Conv(c1, c1, 3, g=c1),
            Conv(c1, 2 * c_, 1),
            Conv(2 * c_, 2 * c_, 3, g=2 * c_),
            Conv(2 * c_, c2, 1),
            Conv(c2, c2, 3, g=c2),
        )
        self.add = shortcut and c1 == c2

    def forward(self, x):
        y = self.cv1(x)
        return x + y if self.add else y


class C2fCIB(C2f):
    def __init__(self, c1, c2, n=1, shortcut=False):
        super().__init__(c1, c2, n, shortcut)
        self.m = nn.ModuleList(CIB(self.c, self.c, shortcut, e=1.0) for _ in range(n))


class SPPF(nn.Module):
    def __init__(self, c1, c2):
        super().__init__()
        c_ = c1 // 2
        self.cv1 = Conv(c1, c_, 1)
        self.cv2 = Conv(c_ * 4, c2, 1)
        self.m = nn.MaxPool2d(5, 1, 2)

    def forward(self, x):
        y = [self.cv1(x)]
        y.extend(self.m(y[-1]) for _ in range(3))
        return self.cv2(torch.cat(y, 1))


class SELayer(nn.Module):
    def __init__(self, c, r=SE_R):
        super().__init__()
        self.fc = nn.Sequential(
            nn.Linear(c, c // r, bias=False),
            nn.ReLU(inplace=True),
            nn.Linear(c // r, c, bias=False),
            nn.Sigmoid(),
        )

    def forward(self, x):
        b, c, _, _ = x.shape
        s = self.fc(x.mean((2, 3))).view(b, c, 1, 1)
        return x * s


class DFL(nn.Module):
    def __init__(self, c1=REG_MAX):
        super().__init__()
        self.conv = nn.Conv2d(c1, 1, 1, bias=False).requires_grad_(False)
        self.conv.weight.data[:] = torch.arange(c1, dtype=torch.float).view(1, c1, 1, 1)


class Detect(nn.Module):
    def __init__(self, nc=2, ch=(64, 128, 256)):
        super().__init__()
        c2 = max(16, ch[0] // 4, REG_MAX * 4)
        c3 = max(ch[0], min(nc, 100))
        self.cv2 = nn.ModuleList(
            nn.Sequential(Conv(c, c2, 3), Conv(c2, c2, 3), nn.Conv2d(c2, 4 * REG_MAX, 1)) for c in ch
        )
        self.cv3 = nn.ModuleList(
            nn.Sequential(Conv(c, c3, 3), Conv(c3, c3, 3), nn.Conv2d(c3, nc, 1)) for c in ch
        )
        self.dfl = DFL()

    def forward(self, feats):
        return [torch.cat((self.cv2[i](x), self.cv3[i](x)), 1) for i, x in enumerate(feats)]


class ReferenceModel(nn.Module):
    """The four-variant detector with ecosystem-style sequential numbering.

    SE variants insert modules after the head C2f stages, renumbering all
    later modules exactly like a yaml-driven build would.
    """

    def __init__(self, variant, nc=2):
        super().__init__()
        cib = variant in ("yolov8n-c2fcib", "cib-se-yolov8")
        se = variant in ("yolov8n-se", "cib-se-yolov8")
        C2f68 = C2fCIB if cib else C2f
        layers = [
            Conv(3, 16, 3, 2),            # 0
            Conv(16, 32, 3, 2),           # 1
            C2f(32, 32, 1, True),         # 2
            Conv(32, 64, 3, 2),           # 3
            C2f(64, 64, 2, True),         # 4
            Conv(64, 128, 3, 2),          # 5
            C2f68(128, 128, 2, True),     # 6
            Conv(128, 256, 3, 2),         # 7
            C2f68(256, 256, 1, True),     # 8
            SPPF(256, 256),               # 9
            nn.Upsample(scale_factor=2, mode="nearest"),  # 10
            nn.Identity(),                # 11 concat
            C2f(384, 128, 1, False),      # 12
            nn.Upsample(scale_factor=2, mode="nearest"),  # 13
            nn.Identity(),                # 14 concat
            C2f(192, 64, 1, False),       # 15
        ]
        if se:
            layers.append(SELayer(64))    # 16 (source numbering)
        layers += [
            Conv(64, 64, 3, 2),
            nn.Identity(),                # concat
            C2f(192, 128, 1, False),
        ]
        if se:
            layers.append(SELayer(128))
        layers += [
            Conv(128, 128, 3, 2),
            nn.Identity(),                # concat
            C2f(384, 256, 1, False),
        ]
        if se:
            layers.append(SELayer(256))
        layers.append(Detect(nc))
        self.model = nn.ModuleList(layers)
        self.se = se

    def forward(self, x):
        m = self.model
        i = 0

        def nxt():
            nonlocal i
            mod = m[i]
            i += 1
            return mod

        x = nxt()(x)                      # 0
        x = nxt()(x)                      # 1
        x = nxt()(x)                      # 2
        x = nxt()(x)                      # 3
        p3_mid = nxt()(x)                 # 4
        x = nxt()(p3_mid)                 # 5
        p4_mid = nxt()(x)                 # 6
        x = nxt()(p4_mid)                 # 7
        x = nxt()(x)                      # 8
        sppf = nxt()(x)                   # 9
        x = nxt()(sppf)                   # 10 upsample
        nxt()                             # 11 concat
        x = torch.cat([x, p4_mid], 1)
        head_p4 = nxt()(x)                # 12
        x = nxt()(head_p4)                # 13 upsample
        nxt()                             # 14 concat
        x = torch.cat([x, p3_mid], 1)
        p3 = nxt()(x)                     # 15
        if self.se:
            p3 = nxt()(p3)
        x = nxt()(p3)                     # downsample
        nxt()                             # concat
        x = torch.cat([x, head_p4], 1)
        p4 = nxt()(x)
        if self.se:
            p4 = nxt()(p4)
        x = nxt()(p4)                     # downsample
        nxt()                             # concat
        x = torch.cat([x, sppf], 1)
        p5 = nxt()(x)
        if self.se:
            p5 = nxt()(p5)
        return nxt()([p3, p4, p5])


def randomize(model, seed):
    """Random weights everywhere, including BN affine and running stats, so
    conversion must carry the statistics to reproduce outputs. Fan-in scaled
    so activations stay O(1) through the whole stack."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if not p.requires_grad:
                continue  # the fixed distribution projection stays 0..15
            if name.endswith("bn.weight"):
                p.uniform_(0.5, 1.5, generator=gen)
            elif name.endswith("bn.bias"):
                p.uniform_(-0.2, 0.2, generator=gen)
            elif p.ndim > 1:
                bound = (1.0 / float(np.prod(p.shape[1:]))) ** 0.5
                p.uniform_(-bound, bound, generator=gen)
            else:
                p.uniform_(-0.1, 0.1, generator=gen)
        for name, b in model.named_buffers():
            if name.endswith("running_mean"):
                b.uniform_(-0.2, 0.2, generator=gen)
            elif name.endswith("running_var"):
                b.uniform_(0.5, 1.5, generator=gen)


def save_safetensors(path, tensors):
    header = {}
    payloads = []
    offset = 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        header[name] = {"dtype": "F32", "shape": list(arr.shape), "data_offsets": [offset, offset + len(data)]}
        payloads.append(data)
        offset += len(data)
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for p in payloads:
            f.write(p)


def gradient_image(size=416):
    y = np.linspace(0, 255, size)[:, None]
    x = np.linspace(0, 255, size)[None, :]
    img = np.stack([y + 0 * x, 0 * y + x, (y + x) / 2], axis=2)
    return img.astype(np.uint8)


def write_ppm(path, img):
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--variant", default="yolov8n",
                    choices=["yolov8n", "yolov8n-se", "yolov8n-c2fcib", "cib-se-yolov8"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", required=True)
    args = ap.parse_args()

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    model = ReferenceModel(args.variant).eval()
    randomize(model, args.seed)

    state = {k: v.detach().numpy() for k, v in model.state_dict().items()
             if not k.endswith("num_batches_tracked")}
    # keep one tracking buffer so the report's unmapped list is exercised
    state["model.0.bn.num_batches_tracked"] = np.zeros((), dtype=np.float32)
    save_safetensors(outdir / "source.safetensors", state)

    img = gradient_image(416)
    write_ppm(outdir / "image.ppm", img)

    x = torch.from_numpy((img.astype(np.float64) / 255.0).astype(np.float32).transpose(2, 0, 1)[None])
    with torch.no_grad():
        raw = model(x)
    save_safetensors(
        outdir / "expected_raw.safetensors",
        {f"p{i + 3}": r.numpy() for i, r in enumerate(raw)},
    )
    print(f"wrote fixtures for {args.variant} to {outdir}")


if __name__ == "__main__":
    main()
