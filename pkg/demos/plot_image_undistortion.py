"""
Undistorting and rectifying an image
====================================

Render a checkerboard through a wide-angle lens, then straighten it with
the known division parameter and a vanishing line.
"""

import numpy as np

from rdct import NormalizationFrame, VanishingLine, undistort
from rdct.image import warp_image, write_ppm

# %%
# Each output pixel samples a checkerboard defined in undistorted
# coordinates, so the input shows curved edges.

w, h, lam = 320, 240, -0.4
frame = NormalizationFrame(w, h)
jj, ii = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
y = undistort(frame.normalize(np.column_stack([jj.ravel(), ii.ravel()])), lam)
q = frame.denormalize(y[:, :2] / y[:, 2:3])
board = 64 + 128 * ((np.floor(q[:, 0] / 32) + np.floor(q[:, 1] / 32)) % 2)
img = np.repeat(board.reshape(h, w, 1), 3, axis=2).astype(np.uint8)
write_ppm("distorted.ppm", img)

# %%
# Undistortion alone.  The canvas grows to hold the stretched corners.

out = warp_image(img, frame, lam)
print(f"undistorted canvas {out.canvas.width}x{out.canvas.height}, cropped={out.cropped}")
write_ppm("undistorted.ppm", out.image)

# %%
# Undistortion plus an affine rectification.  A mild line tilts the plane.

line = VanishingLine(0.05, 0.1, 1.0)
out = warp_image(img, frame, lam, line)
print(f"rectified canvas   {out.canvas.width}x{out.canvas.height}, cropped={out.cropped}")
write_ppm("rectified.ppm", out.image)
