#!/usr/bin/env python3
"""Build the bundled mini-corpus used by the smoke/acceptance tests.

Three classes, 40 images each, four category tags per class (10 each):

  real      crops of public-domain / freely redistributable photographs
            shipped with scikit-image, scikit-learn and matplotlib
  graphics  procedurally rendered scenes (ray-traced spheres, box rooms,
            height-field terrain, flat-shaded polygon art)
  gan       stand-ins for generator output: photo crops pushed through a
            low-resolution bottleneck and two stride-2 transposed
            convolutions with fixed kernels, which leaves the periodic
            up-sampling traces typical of GAN decoders

These are NOT a substitute for a real GAN / CG dataset; they exist so the
full pipeline can be exercised end to end offline. All files are written as
JPEG q=95 with 4:4:4 chroma so that the three classes share one
compression history.

Output: <out>/manifest.csv plus <out>/<class>/<id>.jpg
"""
import csv
import os
import sys

import numpy as np
from PIL import Image

PER_CATEGORY = 10


def photo_sources():
    import matplotlib
    import skimage
    import sklearn.datasets

    sk = os.path.join(os.path.dirname(skimage.__file__), "data")
    sl = os.path.join(os.path.dirname(sklearn.datasets.__file__), "images")
    mp = os.path.join(matplotlib.get_data_path(), "sample_data")
    return {
        "people": [os.path.join(sk, "astronaut.png"), os.path.join(mp, "grace_hopper.jpg")],
        "objects": [os.path.join(sk, "coffee.png"), os.path.join(sk, "rocket.jpg"),
                    os.path.join(sk, "motorcycle_left.png"), os.path.join(sk, "motorcycle_right.png")],
        "nature": [os.path.join(sl, "flower.jpg"), os.path.join(sl, "china.jpg"),
                   os.path.join(sk, "chelsea.png")],
        "science": [os.path.join(sk, "hubble_deep_field.jpg"), os.path.join(sk, "ihc.png"),
                    os.path.join(sk, "retina.jpg")],
    }


def random_crop(rng, img):
    w, h = img.size
    side = int(rng.uniform(0.35, 0.9) * min(w, h))
    x0 = int(rng.integers(0, w - side + 1))
    y0 = int(rng.integers(0, h - side + 1))
    crop = img.crop((x0, y0, x0 + side, y0 + side))
    if rng.random() < 0.5:
        crop = crop.transpose(Image.FLIP_LEFT_RIGHT)
    return crop


def out_size(rng):
    return int(rng.choice([224, 240, 256, 288]))


# ---------------------------------------------------------------- real

def make_real(rng, path):
    img = Image.open(path).convert("RGB")
    s = out_size(rng)
    return random_crop(rng, img).resize((s, s), Image.LANCZOS)


# ---------------------------------------------------------------- gan stand-in

def transposed_conv2x(x, kernel):
    """Stride-2 transposed convolution (per channel) with a 4x4 kernel."""
    h, w, c = x.shape
    up = np.zeros((2 * h + 3, 2 * w + 3, c))
    for ky in range(4):
        for kx in range(4):
            up[ky:ky + 2 * h:2, kx:kx + 2 * w:2, :] += x * kernel[ky, kx]
    return up[1:1 + 2 * h, 1:1 + 2 * w, :]


def make_gan(rng, path):
    img = Image.open(path).convert("RGB")
    s = out_size(rng)
    crop = random_crop(rng, img)
    low = np.asarray(crop.resize((s // 4, s // 4), Image.BOX), dtype=np.float64) / 255.0
    base = np.outer([0.25, 0.75, 0.75, 0.25], [0.25, 0.75, 0.75, 0.25])
    x = low
    for _ in range(2):
        k = base * (1.0 + rng.normal(0.0, 0.18, size=(4, 4)))
        k *= 4.0 / k.sum()
        x = transposed_conv2x(x, k)
        x = np.where(x > 0, x, 0.2 * x)  # leaky activation
    x = np.tanh(1.6 * (x - 0.5)) / (2 * np.tanh(0.8)) + 0.5
    x = np.clip(x, 0, 1)
    return Image.fromarray((x * 255 + 0.5).astype(np.uint8)).resize((s, s), Image.BILINEAR)


# ---------------------------------------------------------------- graphics

def normalize(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def camera_rays(size, fov, eye, target):
    f = normalize(np.asarray(target, float) - eye)
    r = normalize(np.cross(f, [0.0, 1.0, 0.0]))
    u = np.cross(r, f)
    t = np.tan(np.radians(fov) / 2)
    n = size * 2  # 2x2 supersampling
    ys, xs = np.mgrid[0:n, 0:n]
    px = ((xs + 0.5) / n * 2 - 1) * t
    py = (1 - (ys + 0.5) / n * 2) * t
    d = px[..., None] * r + py[..., None] * u + f
    return normalize(d.reshape(-1, 3))


def downsample2(img, size):
    return img.reshape(size, 2, size, 2, 3).mean(axis=(1, 3))


def sky(d, top, horizon):
    t = np.clip(d[:, 1], 0, 1)[:, None]
    return horizon * (1 - t) + top * t


def render_spheres(rng, size):
    eye = np.array([0.0, 1.2, -4.0])
    d = camera_rays(size, 50, eye, [0, 0.6, 0])
    n_sph = int(rng.integers(2, 6))
    centers = np.stack([rng.uniform(-2, 2, n_sph), rng.uniform(0.4, 1.0, n_sph), rng.uniform(-1, 2.5, n_sph)], 1)
    radii = centers[:, 1].copy()
    colors = rng.uniform(0.1, 1.0, (n_sph, 3))
    light = normalize(np.array([rng.uniform(-1, 1), 1.5, -0.5]))
    top, hor = rng.uniform(0.2, 0.6, 3) * [0.6, 0.8, 1.0], rng.uniform(0.7, 1.0, 3)
    check = rng.uniform(0.2, 0.9, (2, 3))

    def trace(o, d, depth):
        npx = d.shape[0]
        tbest = np.full(npx, np.inf)
        idx = np.full(npx, -1)
        for i in range(n_sph):
            oc = o - centers[i]
            b = np.sum(oc * d, 1)
            c = np.sum(oc * oc, 1) - radii[i] ** 2
            disc = b * b - c
            t = -b - np.sqrt(np.maximum(disc, 0))
            hit = (disc > 0) & (t > 1e-4) & (t < tbest)
            tbest[hit], idx[hit] = t[hit], i
        tp = np.where(d[:, 1] < -1e-6, -o[:, 1] / np.minimum(d[:, 1], -1e-6), np.inf)
        plane = (tp > 1e-4) & (tp < tbest)
        tbest[plane], idx[plane] = tp[plane], n_sph
        col = sky(d, top, hor)
        hitm = idx >= 0
        p = o + d * np.where(np.isfinite(tbest), tbest, 0)[:, None]
        nrm = np.zeros_like(p)
        base = np.zeros_like(p)
        for i in range(n_sph):
            m = idx == i
            nrm[m] = normalize(p[m] - centers[i])
            base[m] = colors[i]
        m = idx == n_sph
        nrm[m] = [0, 1, 0]
        chk = ((np.floor(p[m, 0]) + np.floor(p[m, 2])) % 2).astype(int)
        base[m] = check[chk]
        diff = np.clip(np.sum(nrm * light, 1), 0, 1)
        # shadows
        so = p + nrm * 1e-3
        shadow = np.zeros(len(p), bool)
        for i in range(n_sph):
            oc = so - centers[i]
            b = np.sum(oc * light, 1)
            c = np.sum(oc * oc, 1) - radii[i] ** 2
            disc = b * b - c
            t = -b - np.sqrt(np.maximum(disc, 0))
            shadow |= (disc > 0) & (t > 1e-4)
        diff = np.where(shadow, 0.0, diff)
        refl = d - 2 * np.sum(d * nrm, 1)[:, None] * nrm
        spec = np.clip(np.sum(refl * light, 1), 0, 1) ** 40 * (~shadow)
        shade = base * (0.15 + 0.85 * diff[:, None]) + spec[:, None]
        if depth > 0 and hitm.any():
            rc = trace(so[hitm], refl[hitm], depth - 1)
            shade[hitm] = 0.8 * shade[hitm] + 0.2 * rc
        col[hitm] = shade[hitm]
        return col

    o = np.repeat(eye[None], d.shape[0], 0)
    img = trace(o, d, 1).reshape(size * 2, size * 2, 3)
    return downsample2(img, size)


def render_room(rng, size):
    eye = np.array([rng.uniform(-0.5, 0.5), 1.0, -2.8])
    d = camera_rays(size, 60, eye, [0, 0.9, 1])
    o = eye
    walls = rng.uniform(0.3, 0.95, (6, 3))
    boxes = []
    for _ in range(int(rng.integers(1, 4))):
        c = np.array([rng.uniform(-1.2, 1.2), 0, rng.uniform(0, 2)])
        e = rng.uniform(0.2, 0.6, 3)
        c[1] = e[1]
        boxes.append((c - e, c + e, rng.uniform(0.1, 1.0, 3)))
    lightp = np.array([rng.uniform(-1, 1), 2.6, rng.uniform(0, 2)])
    tbest = np.full(d.shape[0], np.inf)
    nrm = np.zeros_like(d)
    base = np.zeros_like(d)
    # room interior: x in [-2,2], y in [0,3], z in [-3,3]
    planes = [(0, -2.0, [1, 0, 0]), (0, 2.0, [-1, 0, 0]), (1, 0.0, [0, 1, 0]),
              (1, 3.0, [0, -1, 0]), (2, 3.0, [0, 0, -1]), (2, -3.0, [0, 0, 1])]
    for k, (ax, pos, n) in enumerate(planes):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (pos - o[ax]) / d[:, ax]
        hit = (t > 1e-4) & (t < tbest)
        tbest[hit] = t[hit]
        nrm[hit] = n
        base[hit] = walls[k]
    for lo, hi, colr in boxes:
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - o) / d
            t2 = (hi - o) / d
        tmin = np.max(np.minimum(t1, t2), 1)
        tmax = np.min(np.maximum(t1, t2), 1)
        hit = (tmax >= tmin) & (tmin > 1e-4) & (tmin < tbest)
        tbest[hit] = tmin[hit]
        p = o + d[hit] * tmin[hit, None]
        cen = (lo + hi) / 2
        rel = (p - cen) / ((hi - lo) / 2)
        ax = np.argmax(np.abs(rel), 1)
        nn = np.zeros_like(p)
        nn[np.arange(len(p)), ax] = np.sign(rel[np.arange(len(p)), ax])
        nrm[hit] = nn
        base[hit] = colr
    p = o + d * tbest[:, None]
    lv = lightp - p
    dist = np.linalg.norm(lv, axis=1)
    diff = np.clip(np.sum(nrm * lv, 1) / dist, 0, 1) / (1 + 0.08 * dist ** 2)
    img = base * (0.2 + 1.1 * diff[:, None])
    return downsample2(np.clip(img, 0, 1).reshape(size * 2, size * 2, 3), size)


def fractal_height(rng, n):
    h = np.zeros((n, n))
    amp = 1.0
    k = 4
    while k <= n:
        g = rng.normal(size=(k, k))
        h += amp * np.asarray(Image.fromarray(g.astype(np.float32)).resize((n, n), Image.BICUBIC))
        amp *= 0.5
        k *= 2
    return (h - h.min()) / (h.max() - h.min())


def render_terrain(rng, size):
    n = 2 * size
    hmap = fractal_height(rng, 256) * rng.uniform(0.8, 1.6)
    grass, rock, snow = rng.uniform(0.1, 0.5, 3) * [0.6, 1.0, 0.5], rng.uniform(0.3, 0.6, 3), np.array([0.95, 0.95, 0.97])
    top, hor = np.array([0.25, 0.45, 0.85]) * rng.uniform(0.8, 1.1), np.array([0.85, 0.9, 0.95])
    img = np.zeros((n, n, 3))
    img[:] = sky(camera_rays(size, 60, np.array([0, 1.0, 0]), [0, 0.9, 1]), top, hor).reshape(n, n, 3)
    cam_h = hmap.max() * 0.9 + 0.3
    ybuf = np.full(n, n)
    for z in np.linspace(0.02, 1.0, 400):
        xs = np.linspace(-z, z, n)
        ix = ((xs + 1) / 2 * 255).astype(int).clip(0, 255)
        iz = int(z * 255)
        hgt = hmap[iz, ix]
        sy = ((cam_h - hgt) / z * n * 0.35 + n * 0.35).astype(int).clip(0, n)
        slope = np.abs(np.gradient(hgt))
        col = np.where((hgt > 0.75 * hmap.max())[:, None], snow,
                       np.where((slope > 0.004)[:, None], rock, grass))
        fog = min(1.0, z * 1.1)
        col = col * (1 - fog) + hor * fog
        for x in range(n):
            if sy[x] < ybuf[x]:
                img[sy[x]:ybuf[x], x] = col[x]
                ybuf[x] = sy[x]
    return downsample2(img, size)


def render_polygons(rng, size):
    n = size * 2
    ys, xs = np.mgrid[0:n, 0:n] / n
    g = rng.uniform(0, 1, (2, 3))
    img = g[0] * (1 - ys[..., None]) + g[1] * ys[..., None]
    for _ in range(int(rng.integers(6, 14))):
        cx, cy, r = rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.08, 0.35)
        k = int(rng.integers(3, 7))
        ang = np.sort(rng.uniform(0, 2 * np.pi, k))
        px, py = cx + r * np.cos(ang), cy + r * np.sin(ang)
        inside = np.ones_like(xs, bool)
        for i in range(k):
            x0, y0, x1, y1 = px[i], py[i], px[(i + 1) % k], py[(i + 1) % k]
            inside &= (x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0) >= 0
        c0, c1 = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
        t = np.clip((xs - cx + r) / (2 * r), 0, 1)[..., None]
        img = np.where(inside[..., None], c0 * (1 - t) + c1 * t, img)
    return downsample2(img, size)


RENDERERS = {"spheres": render_spheres, "interiors": render_room,
             "terrain": render_terrain, "flat_art": render_polygons}


def to_image(arr):
    return Image.fromarray((np.clip(arr, 0, 1) * 255 + 0.5).astype(np.uint8))


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
        os.path.dirname(__file__), "..", "tests", "data", "corpus")
    rng = np.random.default_rng(5081)
    rows = []
    next_id = 1
    sources = photo_sources()
    for label, cls in ((0, "gan"), (1, "graphics"), (2, "real")):
        os.makedirs(os.path.join(out, cls), exist_ok=True)
        cats = RENDERERS if cls == "graphics" else sources
        for cat in cats:
            for i in range(PER_CATEGORY):
                if cls == "graphics":
                    img = to_image(RENDERERS[cat](rng, out_size(rng)))
                elif cls == "real":
                    img = make_real(rng, sources[cat][i % len(sources[cat])])
                else:
                    img = make_gan(rng, sources[cat][(i + 1) % len(sources[cat])])
                rel = "%s/%04d.jpg" % (cls, next_id)
                img.save(os.path.join(out, rel), quality=95, subsampling=0)
                rows.append((next_id, rel, label, cat, "unassigned"))
                next_id += 1
        print(cls, "done", flush=True)
    with open(os.path.join(out, "manifest.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "path", "label", "category", "split"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
