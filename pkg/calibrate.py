"""Scratch calibration probe (not part of the package)."""
import time
import numpy as np
import rulattack as ra
from rulattack import attacks, data, models, reporting

t_start = time.time()
train_s, test_s, ruls = data.make_synth_split(60, 60, 21, seed=11, n_constant=7, noise=0.03)
stats = data.fit_norm(train_s)
print("retained:", len(stats.retained))
trw = data.make_windows(train_s, stats, 80)
tew = data.make_windows(test_s, stats, 80, final_ruls=ruls)
print("train windows:", len(trw.windows), "test windows:", len(tew.windows),
      "skipped test engines:", tew.skipped_engines)

results = {}
for arch in ("lstm", "gru"):
    p0 = models.init_params(arch, len(stats.retained), 32, seed=1 if arch == "lstm" else 2)
    t0 = time.time()
    p, hist = models.train(p0, trw.windows, models.TrainConfig(epochs=15, seed=3))
    print(f"{arch} train {time.time()-t0:.1f}s loss {hist[0]:.1f} -> {hist[-1]:.1f} y_scale {p.y_scale}")
    pred = models.RulPredictor(p, arch)
    rep0 = reporting.evaluate(pred, tew.windows, None, 0.1)
    print(f"{arch} baseline fooling {rep0.fooling_pct:.2f}% mape {rep0.mape:.2f}")

    # attack fit on a train-window subsample
    rng = np.random.default_rng(5)
    idx = np.sort(rng.choice(len(trw.windows), 800, replace=False))
    pool = [trw.windows[i] for i in idx]
    cfg = attacks.AttackConfig(epsilon=0.01, alpha=0.1, r_fool=0.99, e_fool=3, seed=7)
    t0 = time.time()
    pert = attacks.uap_compute(pred, pool, cfg, model_id=arch)
    print(f"{arch} uap {time.time()-t0:.1f}s achieved(train-fit) {pert.achieved_fooling:.3f} "
          f"epochs {pert.epochs_run} linf {np.abs(pert.u).max():.4f}")
    rep1 = reporting.evaluate(pred, tew.windows, pert, 0.1)
    print(f"{arch} attacked fooling {rep1.fooling_pct:.2f}% mape {rep1.mape:.2f}")
    results[arch] = (pred, pert, rep0, rep1)

# transferability
for victim in ("lstm", "gru"):
    other = "gru" if victim == "lstm" else "lstm"
    cross = reporting.evaluate(results[victim][0], tew.windows, results[other][1], 0.1)
    print(f"victim {victim} / attacker {other}: fooling {cross.fooling_pct:.2f}% mape {cross.mape:.2f}")

# overprediction direction on fleet last windows
pred, pert = results["lstm"][0], results["lstm"][1]
fleet = reporting.fleet_last_window(pred, test_s, stats, 80, pert, final_ruls=ruls)
inc = sum(1 for r in fleet if r.pred_attacked > r.pred_clean)
print(f"lstm fleet: {inc}/{len(fleet)} last-window predictions increased")
print(f"total {time.time()-t_start:.1f}s")
