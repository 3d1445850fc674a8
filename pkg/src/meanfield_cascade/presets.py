"""Named configurations for the acceptance experiments: name -> (command, config)."""

PRESETS = {
    "single-particle": ("simulate", {
        "beta": 0.0, "alpha": 0.0, "initial": {"kind": "dirac", "z0": 1.0},
        "N": 1, "replications": 100000, "horizon": 1.0, "step": 1e-3,
    }),
    "negative-zero": ("scaling", {
        "regime": "negative", "beta": -0.5, "alpha": 1.0, "initial": {"kind": "dirac", "z0": 1.0},
        "N": [100, 1000, 10000], "replications": 200, "horizon": 1e4, "step": 0.01, "growth": 0.02,
        "stop_when_resolved": True, "strategy": {"kind": "zero"},
    }),
    "negative-uniform": ("scaling", {
        "regime": "negative", "beta": -0.5, "alpha": 1.0, "initial": {"kind": "dirac", "z0": 1.0},
        "N": [100, 1000, 10000], "replications": 200, "horizon": 1e4, "step": 0.01, "growth": 0.02,
        "stop_when_resolved": True, "strategy": {"kind": "uniform"},
    }),
    "negative-threshold": ("scaling", {
        "regime": "negative", "beta": -0.5, "alpha": 1.0, "initial": {"kind": "dirac", "z0": 1.0},
        "N": [100, 1000, 10000], "replications": 200, "horizon": 1e4, "step": 0.01, "growth": 0.02,
        "stop_when_resolved": True, "strategy": {"kind": "threshold", "theta": 1.26},
    }),
    "neutral-threshold": ("scaling", {
        "regime": "neutral", "beta": 0.0, "alpha": 1.0, "initial": {"kind": "dirac", "z0": 1.0},
        "N": [1000, 4000, 16000, 64000], "replications": 100, "horizon": 30.0, "horizon_per_n": 4.0,
        "step": 0.01, "growth": 0.02, "stop_when_resolved": True,
        "strategy": {"kind": "threshold", "theta": 1.26},
    }),
    "positive-zero": ("scaling", {
        "regime": "positive", "beta": 0.5, "alpha": 0.0, "initial": {"kind": "dirac", "z0": 1.0},
        "N": [1000, 10000], "replications": [200, 50], "horizon": 30.0, "step": 0.01, "growth": 0.02,
        "stop_when_resolved": False, "strategy": {"kind": "zero"},
    }),
    "positive-uniform": ("scaling", {
        "regime": "positive", "beta": 0.5, "alpha": 0.0, "initial": {"kind": "dirac", "z0": 1.0},
        "N": [1000, 10000], "replications": [200, 50], "horizon": 30.0, "step": 0.01, "growth": 0.02,
        "stop_when_resolved": False, "strategy": {"kind": "uniform"},
    }),
    "mkv-minimal": ("solve-mkv", {
        "beta": 0.5, "alpha": 0.5, "initial": {"kind": "dirac", "z0": 1.0},
        "horizon": 5.0, "step": 0.01, "mc_paths": 100000, "tol": 0.0, "max_iters": 200,
    }),
    "eps-sweep": ("sweep-eps", {
        "beta": 0.5, "alpha": 0.5, "initial": {"kind": "dirac", "z0": 1.0},
        "horizon": 5.0, "step": 0.01, "mc_paths": 20000, "tol": 0.0, "max_iters": 200,
        "epsilons": [0.5, 0.2, 0.1, 0.05], "reference": True,
    }),
    # exploratory only: contagion with a positive economy; rerun with strategy.kind=zero to compare
    "positive-conjecture": ("simulate", {
        "beta": 0.5, "alpha": 0.5, "initial": {"kind": "dirac", "z0": 1.0},
        "N": 2000, "replications": 50, "horizon": 30.0, "step": 0.01, "growth": 0.02,
        "strategy": {"kind": "uniform"},
    }),
}
