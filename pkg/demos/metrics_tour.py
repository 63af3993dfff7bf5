"""The evaluation metrics on tiny hand-made inputs."""

import numpy as np

from mapdigit.evaluation import (
    categorize_georef,
    detection_f1,
    iou_count,
    line_correct_complete,
    pixel_iou_f1,
    point_prf,
)
from mapdigit.geometry import PixelBBox, PixelPoint

pred = np.zeros((10, 10), bool)
gt = np.zeros((10, 10), bool)
pred[:, :6] = True
gt[:, 4:] = True
print("pixel      ", pixel_iou_f1(pred, gt))

boxes = [PixelBBox(0, 0, 10, 10), PixelBBox(20, 20, 30, 30)]
print("detection  ", detection_f1([(PixelBBox(1, 0, 11, 10), 0.9)], boxes))

print("lines      ", line_correct_complete([[(0, 0), (100, 0)]], [[(50, 2), (150, 2)]]))

print("points     ", point_prf([PixelPoint(100, 100), PixelPoint(500, 500)],
                               [PixelPoint(101, 101)], map_diagonal_px=10_000))

a = np.zeros((8, 8), bool)
a[:, :4] = True
b = np.zeros((8, 8), bool)
b[:, 4:] = True
print("iou_count  ", iou_count([a], [a, b]))

for km in (0.05, 0.5, 1.0, 3.0):
    print(f"georef {km:>4} km ->", categorize_georef(km).value)
