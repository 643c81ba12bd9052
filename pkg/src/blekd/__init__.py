"""Cross-modal knowledge distillation for BLE-RSSI position classification.

Subpackages:
    sim       synthetic factory sessions (trajectories, RSSI, ultrasound)
    signal    preprocessing chain producing windowed datasets
    autodiff  small float64 layer engine with hand-written backward passes
    models    teacher and student network builders
    distill   KD losses and the three training regimes
    evaluate  leave-one-session-out folds, metrics and reports
    cli       command line entry point
"""

__version__ = "0.1.0"

CLASSES = (1, 2, 3, 4)
