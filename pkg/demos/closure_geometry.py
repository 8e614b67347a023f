"""How far is a new item from what a user already knows?

A user consumed three items whose embeddings form a triangle. We measure a
few candidate items against the three closure shapes. Sphere and box are
loose supersets of the hull, so they never report a larger distance.
"""
import numpy as np

from latent_unexp.closure import build_box, build_hull, build_sphere, hull_distance_exact_2d

consumed = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0]])
candidates = {
    "inside the triangle": [1.0, 0.4],
    "above the apex": [1.0, 2.0],
    "far right": [5.0, 0.5],
    "box corner": [0.05, 0.95],
}

closures = {"sphere": build_sphere(consumed), "box": build_box(consumed), "hull": build_hull(consumed)}
s = closures["sphere"]
print(f"sphere: center {s.center}, radius {s.radius:.3f}")
print(f"box:    lo {closures['box'].lo}, hi {closures['box'].hi}\n")

print(f"{'candidate':<22}{'sphere':>9}{'box':>9}{'hull':>9}{'exact 2-D':>11}")
for name, x in candidates.items():
    row = [closures[k].distance(x) for k in ("sphere", "box", "hull")]
    exact = hull_distance_exact_2d(consumed, x)
    print(f"{name:<22}" + "".join(f"{d:9.4f}" for d in row) + f"{exact:11.4f}")

# The box corner shows the difference: the box contains it, the hull does not.
