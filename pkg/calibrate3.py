"""Scratch probe 3: capacity x noise x epochs matrix for attack strength."""
import itertools
import sys
import time
import numpy as np
import rulattack as ra
from rulattack import attacks, data, models, ndgrad as ng, reporting

def run(noise, hidden, epochs):
    train_s, test_s, ruls = data.make_synth_split(40, 30, 21, seed=11, n_constant=7, noise=noise)
    stats = data.fit_norm(train_s)
    trw = data.make_windows(train_s, stats, 80)
    tew = data.make_windows(test_s, stats, 80, final_ruls=ruls)
    p0 = models.init_params("lstm", len(stats.retained), hidden, seed=1)
    t0 = time.time()
    p, hist = models.train(p0, trw.windows, models.TrainConfig(epochs=epochs, seed=3))
    ttrain = time.time() - t0
    pred = models.RulPredictor(p, "lstm")
    rep0 = reporting.evaluate(pred, tew.windows, None, 0.1)

    rng = np.random.default_rng(0)
    idx = rng.choice(len(tew.windows), 30, replace=False)
    budgets = []
    for i in idx:
        xt = ng.Tensor(tew.windows[i].x, requires_grad=True)
        ng.backward(pred.forward(xt))
        budgets.append(0.01 * np.abs(xt.grad).sum())
    budget = float(np.median(budgets))

    sub = [trw.windows[i] for i in np.sort(rng.choice(len(trw.windows), 600, replace=False))]
    cfg = attacks.AttackConfig(epsilon=0.01, alpha=0.1, r_fool=0.99, e_fool=3, seed=7)
    t0 = time.time()
    pert = attacks.uap_compute(pred, sub, cfg, model_id="lstm")
    tuap = time.time() - t0
    rep1 = reporting.evaluate(pred, tew.windows, pert, 0.1)
    print(
        f"noise={noise} H={hidden} ep={epochs}: train={ttrain:.0f}s loss={hist[-1]:.1f} "
        f"base={rep0.fooling_pct:.1f}%/{rep0.mape:.1f} budget={budget:.0f} "
        f"uap={tuap:.0f}s/{pert.epochs_run}ep att={rep1.fooling_pct:.1f}%/{rep1.mape:.1f} "
        f"lifts={rep1.fooling_pct/max(rep0.fooling_pct,0.01):.2f}x/{rep1.mape/rep0.mape:.2f}x",
        flush=True,
    )

for noise, hidden, epochs in [
    (0.02, 64, 40),
    (0.02, 96, 40),
    (0.03, 64, 40),
    (0.02, 64, 80),
    (0.04, 64, 60),
]:
    run(noise, hidden, epochs)
