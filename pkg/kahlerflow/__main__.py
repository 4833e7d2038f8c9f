import sys
from kahlerflow.cli import main

# Run as `python -m kahlerflow run --config configs/productflat_zero.yaml`

if __name__ == "__main__":
    sys.exit(main())
