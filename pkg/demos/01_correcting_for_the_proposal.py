"""Why the learned conditional must be divided by the proposal.

Simulations drawn from a proposal instead of the prior teach the network
q(theta | x) ~ proposal(theta) p(x | theta). On a linear-Gaussian model the
exact posterior is known, so we can watch the raw conditional go wrong and
the corrected estimate come back.

    python demos/01_correcting_for_the_proposal.py
"""

import numpy as np

from lfi.gmath import Gaussian, kl_gaussian
from lfi.inference import InferenceConfig, posterior_estimate, run_algorithm2
from lfi.simulators import LinearGaussianProblem

problem = LinearGaussianProblem()
truth = problem.true_posterior()
print(f"exact posterior at x_o = {problem.x_o[0]}: mean {truth.mean[0]:.4f}, sd {np.sqrt(truth.covariance[0, 0]):.4f}")

# a proposal that is off-centre and narrower than the prior
proposal = Gaussian.from_covariance([0.8], [[0.3**2]])
cfg = InferenceConfig(x_o=problem.x_o, n_final=5000, epochs_final=100, hidden_final=(20,))
fit = run_algorithm2(problem, problem.prior, proposal, None, cfg)

raw = fit.raw_conditional.components[0]
corrected = fit.posterior.components[0]
expected_raw = problem.posterior_under(proposal)
print(f"raw conditional:   mean {raw.mean[0]:.4f}  (the proposal-prior posterior is {expected_raw.mean[0]:.4f})")
print(f"corrected:         mean {corrected.mean[0]:.4f}")
print(f"KL(true || raw)       = {kl_gaussian(truth, raw):.4f}")
print(f"KL(true || corrected) = {kl_gaussian(truth, corrected):.4f}")

# the correction is a closed-form Gaussian product and quotient
again = posterior_estimate(fit.raw_conditional, problem.prior, proposal).components[0]
assert np.allclose(again.mean, corrected.mean)
