import sys
from pathlib import Path

from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

# reproducible property tests: same examples on every run
settings.register_profile("repro", derandomize=True, print_blob=True)
settings.load_profile("repro")
