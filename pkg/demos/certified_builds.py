"""Build a few certified networks and compare their bounds with measured error."""

import numpy as np

from mcn.constructive import build_fourier_approx, build_product2, build_sawtooth_square, build_trig, sup_error


def show(name, cnet, grid):
    err = sup_error(cnet, grid)
    print(f"{name:<28} bound={cnet.bound:.3e} measured={err.value:.3e} at {np.round(err.argmax, 4)}")


show("x^2, t=8", build_sawtooth_square(8), 100_001)
show("xy, t=10", build_product2(10), 301)
show("cos(3 pi x), p=16, t=20", build_trig("cos", 3, 16, 20), 10_001)

cnet, idx = build_fourier_approx(lambda X: np.cos(np.pi * X[:, 0]) * np.cos(np.pi * X[:, 1]), 2, 2)
print(f"cross d=2 r=2 holds {len(idx.entries)} basis terms, {cnet.components['kept_terms']} kept")
show("cos(pi x)cos(pi y), r=2", cnet, 101)
