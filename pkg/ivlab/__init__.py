"""
This is an experimental simulator for incentivized exploration with
instrumental variables: a planner recommends control or treatment to a
stream of self-interested agents, and uses its own recommendations as an
instrument to estimate the treatment effect despite confounded choices.

* `ivlab.estimator`: IV (Wald) and OLS estimators with finite-sample bounds.
* `ivlab.compliance`: when a type follows a recommendation, and how often
  the planner may explore.
* `ivlab.agents`, `ivlab.platform`: the agent population and the simpy
  round loop.
* `ivlab.mechanism`: the sampling and racing stages, for two arms
  (`ivlab.mechanism.binary`) and for k arms (`ivlab.mechanism.karm`).
* `ivlab.harness`: experiment presets, result tables and the command line.

See the [README](../README.md) for more information.
"""
