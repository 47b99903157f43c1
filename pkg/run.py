import sys

from abrsi.cli import main

if __name__ == "__main__":
    # Exemple : python run.py train --config config/experiments/synthetic.json
    sys.exit(main())
