#!/usr/bin/env python3
"""Reference Harris corner count, written independently of the C++ code.

Counts local maxima of the Harris response (k=0.04, 3x3 Sobel gradients,
Gaussian window sigma=1 radius 3, clamp-to-edge borders) above
0.01 * max response, with 3x3 non-max suppression (strict, valid
neighbours only).

Run: python3 harris_square.py
"""
import numpy as np


def clamp_at(img, y, x):
    h, w = img.shape
    return img[min(max(y, 0), h - 1), min(max(x, 0), w - 1)]


def conv3(img, kernel):
    h, w = img.shape
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            s = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    s += kernel[dy + 1][dx + 1] * clamp_at(img, y + dy, x + dx)
            out[y, x] = s
    return out


def gauss_blur(img, sigma=1.0, radius=3):
    ks = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    ks /= ks.sum()
    h, w = img.shape
    tmp = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            tmp[y, x] = sum(ks[i + radius] * clamp_at(img, y, x + i)
                            for i in range(-radius, radius + 1))
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            out[y, x] = sum(ks[i + radius] * clamp_at(tmp, y + i, x)
                            for i in range(-radius, radius + 1))
    return out


def harris_count(gray, k=0.04, rel_thresh=0.01):
    sx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    sy = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]
    ix = conv3(gray, sx)
    iy = conv3(gray, sy)
    ixx = gauss_blur(ix * ix)
    iyy = gauss_blur(iy * iy)
    ixy = gauss_blur(ix * iy)
    resp = ixx * iyy - ixy * ixy - k * (ixx + iyy) ** 2
    mx = resp.max()
    if mx <= 0:
        return 0
    thr = rel_thresh * mx
    h, w = resp.shape
    count = 0
    for y in range(h):
        for x in range(w):
            if resp[y, x] <= thr:
                continue
            is_max = True
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dy == 0 and dx == 0:
                        continue
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and resp[ny, nx] >= resp[y, x]:
                        is_max = False
                        break
                if not is_max:
                    break
            if is_max:
                count += 1
    return count


def main():
    img = np.zeros((32, 32), dtype=np.float64)
    img[12:20, 12:20] = 1.0  # white 8x8 square
    print("white 8x8 square on 32x32 black:", harris_count(img))

    flat = np.full((32, 32), 0.5)
    print("uniform gray:", harris_count(flat))


if __name__ == "__main__":
    main()
