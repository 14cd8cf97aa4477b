"""A scaled-down depth sweep and stationarity check on the toy suite."""

from mcn.training import TrainConfig
from mcn.training import experiments as ex

data = ex.toy_suite(0)["sin-product"]

cfg = TrainConfig(optimizer="lbfgs", epochs=300, restarts=4, lbfgs_restarts=0)
sweep = ex.depth_sweep(cfg, [1, 2, 3], data)
for row in sweep.summary:
    print(f"depth {row['depth']}: best={row['min']:.3e} median={row['median']:.3e}")
print("non-increasing:", sweep.verdict)

stat = ex.stationarity_runs(data, TrainConfig(optimizer="lbfgs", epochs=5000, lbfgs_restarts=0), needed=3)
for rep in stat.summary:
    print(f"loss={rep['loss']:.4e} ls={rep['ls_residual']:.4e} gap={rep['relative_gap']:.1e} score={rep['scores'][-1]:.1e}")
