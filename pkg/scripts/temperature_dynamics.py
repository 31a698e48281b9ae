#!/usr/bin/env python3
"""Trace how the PID controller moves the selection temperature during training.

Runs a short training job on a small synthetic dataset and prints the
epoch-by-epoch error signal, temperature, and support size, plus a pure
controller simulation on a scripted error sequence for comparison.
"""

import argparse
import sys

from deepselective.data import SyntheticSpec, generate_synthetic, split
from deepselective.model import TrainConfig, train
from deepselective.sparsity import make_pid, update_tau


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--samples", type=int, default=600)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    spec = SyntheticSpec(
        n_features=16, n_informative=3, n_samples=args.samples, seed=args.seed
    )
    dataset = split(generate_synthetic(spec), (0.8, 0.1, 0.1), args.seed)
    config = TrainConfig(
        n_features=dataset.n_features,
        latent_dim=8,
        n_heads=2,
        n_encoder_layers=1,
        n_decoder_layers=1,
        epochs=args.epochs,
        batch_size=32,
        learning_rate=3e-3,
        seed=args.seed,
    )
    _, report = train(dataset, config)
    print("epoch  error    tau     tau_next  |S|")
    for row in report.epochs:
        print(
            f"{row['epoch']:>5}  {row['error']:.4f}  {row['tau']:.4f}  "
            f"{row['tau_next']:.4f}  {row['support_size']:>3}"
        )

    print("\ncontroller alone on a decaying error sequence:")
    state = make_pid(tau0=1.0)
    for step in range(10):
        state = update_tau(state, 1.5 * 0.8**step)
    for step, error, tau in state.history:
        print(f"  step {step:>2}: e={error:.4f} tau={tau:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
