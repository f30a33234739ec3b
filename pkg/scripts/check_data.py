"""
Check the MNIST data directory.
Reads ENSEMBLE_VQC_DATA (from the environment or .env) and reports which of the four IDX files are present.
"""

from dotenv import load_dotenv; load_dotenv()
from pathlib import Path
import os, sys

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))
from utils.data import DATA_ENV_VAR, MNIST_FILES

directory = os.getenv(DATA_ENV_VAR)
print(f'{DATA_ENV_VAR} set:', bool(directory))
if not directory:
    sys.exit(1)

missing = 0
for stem in MNIST_FILES.values():
    found = [p for p in (Path(directory) / stem, Path(directory) / f'{stem}.gz') if p.exists()]
    print(f'{stem}:', found[0].name if found else 'MISSING')
    missing += not found

sys.exit(1 if missing else 0)
