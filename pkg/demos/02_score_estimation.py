"""Score estimates from samples: self-transport against the kernel density
gradient, scored in mean squared error against the exact Gaussian score."""

from __future__ import annotations

from selfot import GaussianModel, fit_self_potential, sample
from selfot.asymptotics import bandwidth_rule
from selfot.score import ScoreField, mc_l2_error

model = GaussianModel.standard(2)
truth = ScoreField.exact(model)
evals = sample(model, 20000, seed=99)
print("   n     eps   self-OT     KDE")
for n in (500, 2000, 8000):
    data = sample(model, n, seed=n)
    eps = bandwidth_rule(n, model.dim)
    pot = fit_self_potential(data, eps)
    ot = mc_l2_error(ScoreField.self_ot(pot), truth, evals)
    kde = mc_l2_error(ScoreField.kde(data, eps), truth, evals)
    print(f"{n:5d}  {eps:.3f}  {ot:.4f}  {kde:.4f}")
