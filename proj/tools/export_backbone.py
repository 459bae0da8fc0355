#!/usr/bin/env python3
"""Export an EfficientNet-B0 feature extractor to ONNX for mcfuse.

The exported graph:
  input         float32 [N,3,224,224], RGB-ordered planes, values 0..255
  feature_maps  float32 [N,1280,7,7]  (after the final SiLU)
  pooled        float32 [N,1280]      (global average of feature_maps)

ImageNet normalization is baked into the graph, so callers feed 0..255.
Opset 13.

Weights:
  --checkpoint PATH   torchvision efficientnet_b0 state dict (ImageNet weights,
                      e.g. efficientnet_b0_rwightman-7f5810bc.pth)
  (none)              seeded random init; BatchNorm running statistics are
                      calibrated on 1/f-noise images so activations stay in a
                      sane range. Useful for tests and offline builds only.

Requires torch, torchvision and onnx.
"""
import argparse
import sys

import numpy as np
import torch
import torchvision

MEAN = (0.485, 0.456, 0.406)
STD = (0.229, 0.224, 0.225)


class FeatureExtractor(torch.nn.Module):
    def __init__(self, net):
        super().__init__()
        self.features = net.features
        self.register_buffer("mean", torch.tensor(MEAN).view(1, 3, 1, 1) * 255.0)
        self.register_buffer("std", torch.tensor(STD).view(1, 3, 1, 1) * 255.0)

    def forward(self, x):
        maps = self.features((x - self.mean) / self.std)
        pooled = torch.flatten(torch.nn.functional.adaptive_avg_pool2d(maps, 1), 1)
        return maps, pooled


def pink_noise_batch(rng, n, size=224):
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.rfftfreq(size)[None, :]
    f = np.sqrt(fx * fx + fy * fy)
    f[0, 0] = 1.0
    out = np.empty((n, 3, size, size), dtype=np.float32)
    for i in range(n):
        alpha = rng.uniform(0.8, 1.6)
        for c in range(3):
            spec = (rng.normal(size=f.shape) + 1j * rng.normal(size=f.shape)) / f ** alpha
            img = np.fft.irfft2(spec, s=(size, size))
            img = (img - img.min()) / (img.max() - img.min() + 1e-12)
            out[i, c] = img * 255.0
    return torch.from_numpy(out)


def calibrate_batchnorm(model, seed, batches=8, batch_size=16):
    rng = np.random.default_rng(seed)
    for m in model.modules():
        if isinstance(m, torch.nn.BatchNorm2d):
            m.reset_running_stats()
            m.momentum = None  # cumulative average
    model.train()
    with torch.no_grad():
        for _ in range(batches):
            model(pink_noise_batch(rng, batch_size))
    model.eval()


def main(argv):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("output")
    ap.add_argument("--checkpoint", help="torchvision efficientnet_b0 state dict")
    ap.add_argument("--seed", type=int, default=1280)
    ap.add_argument("--reference", help="also write torch outputs for the probe pattern (text)")
    args = ap.parse_args(argv)

    torch.manual_seed(args.seed)
    net = torchvision.models.efficientnet_b0(weights=None)
    if args.checkpoint:
        net.load_state_dict(torch.load(args.checkpoint, map_location="cpu"))
    model = FeatureExtractor(net)
    if not args.checkpoint:
        calibrate_batchnorm(model, args.seed)
    model.eval()

    torch.onnx.export(
        model, torch.zeros(1, 3, 224, 224), args.output,
        input_names=["input"], output_names=["feature_maps", "pooled"],
        opset_version=13, dynamo=False,
        dynamic_axes={"input": {0: "n"}, "feature_maps": {0: "n"}, "pooled": {0: "n"}})
    print("wrote", args.output, "(pretrained)" if args.checkpoint else "(seeded, BN-calibrated)")

    if args.reference:
        # Fixed probe pattern, reproducible in C++: (37c + 3y + 5x) mod 256.
        c = torch.arange(3).view(3, 1, 1)
        y = torch.arange(224).view(1, 224, 1)
        x = torch.arange(224).view(1, 1, 224)
        probe = ((37 * c + 3 * y + 5 * x) % 256).float().unsqueeze(0)
        with torch.no_grad():
            maps, pooled = model(probe)
        with open(args.reference, "w") as fh:
            fh.write("# pooled features of the probe pattern, then feature_maps[0,k,3,4] for k<1280\n")
            for v in pooled[0].tolist():
                fh.write("%.9g\n" % v)
            for v in maps[0, :, 3, 4].tolist():
                fh.write("%.9g\n" % v)
        print("wrote", args.reference)


if __name__ == "__main__":
    main(sys.argv[1:])
