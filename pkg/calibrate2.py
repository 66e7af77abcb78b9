"""Scratch probe 2: model quality and gradient sensitivity vs capacity/noise."""
import sys
import time
import numpy as np
import rulattack as ra
from rulattack import attacks, data, models, ndgrad as ng, reporting

n_train, n_test = 40, 30
noise = float(sys.argv[1]) if len(sys.argv) > 1 else 0.02
hidden = int(sys.argv[2]) if len(sys.argv) > 2 else 32
epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 40

train_s, test_s, ruls = data.make_synth_split(n_train, n_test, 21, seed=11, n_constant=7, noise=noise)
stats = data.fit_norm(train_s)
trw = data.make_windows(train_s, stats, 80)
tew = data.make_windows(test_s, stats, 80, final_ruls=ruls)
print(f"noise={noise} hidden={hidden} epochs={epochs} train_w={len(trw.windows)} test_w={len(tew.windows)}")

p0 = models.init_params("lstm", len(stats.retained), hidden, seed=1)
t0 = time.time()
p, hist = models.train(p0, trw.windows, models.TrainConfig(epochs=epochs, seed=3))
pred = models.RulPredictor(p, "lstm")
rep0 = reporting.evaluate(pred, tew.windows, None, 0.1)
print(f"train {time.time()-t0:.0f}s loss[0]={hist[0]:.0f} loss[-1]={hist[-1]:.1f} "
      f"baseline fooling={rep0.fooling_pct:.1f}% mape={rep0.mape:.1f}")

# gradient-based shift budget: eps * sum|df/dx| per sample
rng = np.random.default_rng(0)
idx = rng.choice(len(tew.windows), 40, replace=False)
budgets = []
for i in idx:
    w = tew.windows[i]
    xt = ng.Tensor(w.x, requires_grad=True)
    ng.backward(pred.forward(xt))
    budgets.append(0.01 * np.abs(xt.grad).sum())
budgets = np.array(budgets)
ys = np.array([tew.windows[i].y for i in idx])
print(f"eps*sum|grad|: median={np.median(budgets):.1f} cycles, q25={np.percentile(budgets,25):.1f}, "
      f"q75={np.percentile(budgets,75):.1f}; median y={np.median(ys):.0f}")

# quick uap on a subsample
sub = [trw.windows[i] for i in np.sort(rng.choice(len(trw.windows), 600, replace=False))]
cfg = attacks.AttackConfig(epsilon=0.01, alpha=0.1, r_fool=0.99, e_fool=3, seed=7)
t0 = time.time()
pert = attacks.uap_compute(pred, sub, cfg, model_id="lstm")
rep1 = reporting.evaluate(pred, tew.windows, pert, 0.1)
print(f"uap {time.time()-t0:.0f}s fit-fool={pert.achieved_fooling:.2f} "
      f"attacked fooling={rep1.fooling_pct:.1f}% mape={rep1.mape:.1f} "
      f"lift={rep1.fooling_pct/max(rep0.fooling_pct,0.01):.2f}x mape_lift={rep1.mape/rep0.mape:.2f}x")
