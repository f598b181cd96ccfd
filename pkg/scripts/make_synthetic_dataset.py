"""
Write a deterministic synthetic benchmark (data + descriptor tables) for
smoke runs, capacity checks and determinism checks.

Usage:
    python scripts/make_synthetic_dataset.py --out fixtures --solvents 3 --subset single_solvents
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from ingest.synthetic import synthetic_dataset, write_synthetic  # noqa: E402
from shared.models import Subset  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description="Generate a synthetic solvent-yield dataset")
    parser.add_argument("--out", default="fixtures", help="Output directory")
    parser.add_argument("--solvents", type=int, default=3, help="Number of roster solvents to use")
    parser.add_argument("--subset", choices=[s.value for s in Subset], default=Subset.SINGLE_SOLVENTS.value)
    parser.add_argument("--noise", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print("=" * 70)
    print("SYNTHETIC DATASET")
    print("=" * 70)

    print(f"\n[1/2] Generating {args.subset} rows over {args.solvents} solvents...")
    data = synthetic_dataset(args.solvents, Subset(args.subset), noise=args.noise, seed=args.seed)
    print(f"  [OK] {len(data.dataset.records)} rows, roster: {', '.join(data.dataset.roster)}")

    print(f"\n[2/2] Writing files to {args.out}/...")
    for kind, path in write_synthetic(data, args.out).items():
        print(f"  [OK] {kind}: {path}")

    print("\nRun a benchmark with:")
    out = Path(args.out)
    print(f"  python -m cli benchmark --data {out / f'synthetic_{args.subset}.csv'} --subset {args.subset} "
          f"--spange {out / 'synthetic_spange.csv'} --acs-pca {out / 'synthetic_acs_pca.csv'} "
          f"--methods gbdt,mlp,ensemble --protocol loso")
    return 0


if __name__ == "__main__":
    sys.exit(main())
