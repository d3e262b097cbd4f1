"""What ABC pays for accuracy.

Rejection, MCMC and SMC ABC on the bimodal problem. Cost is reported as
simulations per effective sample, the quantity that explodes as the
tolerance shrinks.

    python demos/03_abc_cost.py
"""

from lfi.bench import ExperimentConfig, run_experiment

for eps in (1.0, 0.3, 0.1):
    r = run_experiment(ExperimentConfig("mog", "rejection", abc={"epsilon": eps, "n_samples": 300}), persist=False)
    print(f"rejection eps {eps:4.2f}: {r.n_simulations:6d} sims, {r.cost:7.1f} per effective sample, "
          f"TV {r.metrics['tv_to_true']:.3f}")

mcmc = run_experiment(
    ExperimentConfig("mog", "mcmc", abc={"epsilon": 0.1, "mcmc": {"proposal_std": 0.5, "n_steps": 20000}}),
    persist=False,
)
print(f"MCMC      eps 0.10: {mcmc.n_simulations:6d} sims, {mcmc.cost:7.1f} per effective sample, "
      f"TV {mcmc.metrics['tv_to_true']:.3f}, acceptance {mcmc.diagnostics['acceptance_rate']:.3f}")

smc = run_experiment(
    ExperimentConfig("mog", "smc", abc={"smc": {"n_particles": 500, "eps_initial": 2.0, "eps_decay": 0.6,
                                                 "n_rounds": 6}}),
    persist=False,
)
print(f"SMC       eps {smc.epsilon:.2f}: {smc.n_simulations:6d} sims, {smc.cost:7.1f} per effective sample, "
      f"TV {smc.metrics['tv_to_true']:.3f}")
for rnd in smc.diagnostics["rounds"]:
    print(f"    round {rnd['round']}: eps {rnd['epsilon']:.3f}, {rnd['n_simulations']} sims, "
          f"acceptance {rnd['acceptance_rate']:.3f}")
